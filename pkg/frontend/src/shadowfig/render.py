"""Render shadowcert CSV outputs as deterministic figures.

Three plot kinds, matching the published CSV schemas:

- ``benchmark``: fidelity, normalized shadow overlap, and XEB versus noise
  strength, with error bars from the *_se columns.
- ``nqs``: training log-loss and shadow overlap on twin axes, plus the
  purity-versus-subsystem-size curve in a second panel.
- ``optimization``: fidelity and shadow objective versus greedy step.

Rendering is deterministic: identical inputs yield byte-identical SVG
(fixed style, pinned hash salt, no timestamps in the output).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMAS = {
    "benchmark": ["noise_type", "p", "fidelity", "normalized_shadow_overlap",
                  "shadow_se", "xeb", "xeb_se"],
    "nqs_trace": ["epoch", "Tlogloss", "Vlogloss", "TShadowF", "VShadowF"],
    "nqs_purity": ["subsystem_size", "purity", "se"],
    "optimization": ["step", "action", "fidelity", "shadow"],
}

KIND_INPUTS = {"benchmark": 1, "nqs": 2, "optimization": 1}


class SchemaError(ValueError):
    def __init__(self, path, expected, found):
        super().__init__(
            f"{path}: schema mismatch; expected columns {expected}, "
            f"found {found}")
        self.expected = expected
        self.found = found


@dataclass
class PlotSpec:
    """Declarative figure request: input CSVs, layout, labels, output."""

    kind: str
    inputs: list
    output: str
    format: str = "svg"
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    figsize: list = field(default_factory=lambda: [6.0, 4.0])

    def __post_init__(self):
        if self.kind not in KIND_INPUTS:
            raise ValueError(f"unknown plot kind {self.kind!r}; "
                             f"expected one of {sorted(KIND_INPUTS)}")
        if self.format not in ("svg", "png"):
            raise ValueError(f"unknown format {self.format!r}")
        want = KIND_INPUTS[self.kind]
        if len(self.inputs) != want:
            raise ValueError(f"kind {self.kind!r} takes {want} input file(s), "
                             f"got {len(self.inputs)}")

    @staticmethod
    def from_json(path: str) -> "PlotSpec":
        with open(path) as fh:
            blob = json.load(fh)
        allowed = {"kind", "inputs", "output", "format", "title", "xlabel",
                   "ylabel", "figsize"}
        unknown = set(blob) - allowed
        if unknown:
            raise ValueError(f"unknown spec keys {sorted(unknown)}")
        return PlotSpec(**blob)


def read_table(path: str, schema: str) -> dict:
    """Read a shadowcert CSV (comment header, column row, data rows) into
    column arrays, validating against the declared schema."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    rows = [ln for ln in lines if not ln.startswith("#")]
    if not rows:
        raise SchemaError(path, SCHEMAS[schema], [])
    found = rows[0].split(",")
    expected = SCHEMAS[schema]
    if found[:len(expected)] != expected:
        raise SchemaError(path, expected, found)
    cols = {name: [] for name in found}
    for ln in rows[1:]:
        for name, cell in zip(found, ln.split(",")):
            cols[name].append(cell)
    out = {}
    for name, cells in cols.items():
        try:
            out[name] = np.array([float(c) for c in cells])
        except ValueError:
            out[name] = np.array(cells)
    return out


def _style():
    plt.rcdefaults()
    plt.rcParams.update({
        "svg.hashsalt": "shadowfig",
        "figure.dpi": 100,
        "savefig.dpi": 100,
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
    })


def _save(fig, spec: PlotSpec):
    fig.savefig(spec.output, format=spec.format,
                metadata=({"Date": None} if spec.format == "svg" else None))
    plt.close(fig)


def _render_benchmark(spec: PlotSpec):
    t = read_table(spec.inputs[0], "benchmark")
    fig, ax = plt.subplots(figsize=spec.figsize)
    ax.plot(t["p"], t["fidelity"], "o-", color="tab:blue", label="fidelity")
    ax.errorbar(t["p"], t["normalized_shadow_overlap"], yerr=t["shadow_se"],
                fmt="s-", color="tab:orange", capsize=2,
                label="shadow overlap")
    ax.errorbar(t["p"], t["xeb"], yerr=t["xeb_se"], fmt="^-",
                color="tab:green", capsize=2, label="XEB")
    ax.set_xlabel(spec.xlabel or "noise strength p")
    ax.set_ylabel(spec.ylabel or "estimate")
    ax.set_title(spec.title or "benchmark sweep")
    ax.legend()
    _save(fig, spec)


def _render_nqs(spec: PlotSpec):
    trace = read_table(spec.inputs[0], "nqs_trace")
    pur = read_table(spec.inputs[1], "nqs_purity")
    fig, (ax1, ax3) = plt.subplots(
        1, 2, figsize=[spec.figsize[0] * 1.8, spec.figsize[1]])
    ax1.plot(trace["epoch"], trace["Tlogloss"], "o-", color="tab:blue",
             label="train log loss")
    ax1.plot(trace["epoch"], trace["Vlogloss"], "o--", color="tab:cyan",
             label="val log loss")
    ax1.set_xlabel(spec.xlabel or "epoch")
    ax1.set_ylabel("log loss")
    ax2 = ax1.twinx()
    ax2.plot(trace["epoch"], trace["TShadowF"], "s-", color="tab:red",
             label="train shadow")
    ax2.plot(trace["epoch"], trace["VShadowF"], "s--", color="tab:orange",
             label="val shadow")
    ax2.set_ylabel("shadow overlap")
    ax2.grid(False)
    h1, l1 = ax1.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax1.legend(h1 + h2, l1 + l2, loc="center right")
    ax1.set_title(spec.title or "training trace")
    ax3.errorbar(pur["subsystem_size"], pur["purity"], yerr=pur["se"],
                 fmt="o-", color="tab:purple", capsize=2)
    ax3.set_xlabel("subsystem size |A|")
    ax3.set_ylabel(spec.ylabel or "purity")
    ax3.set_title("subsystem purity")
    fig.tight_layout()
    _save(fig, spec)


def _render_optimization(spec: PlotSpec):
    t = read_table(spec.inputs[0], "optimization")
    fig, ax = plt.subplots(figsize=spec.figsize)
    ax.plot(t["step"], t["fidelity"], "o-", color="tab:blue", label="fidelity")
    ax.plot(t["step"], t["shadow"], "s-", color="tab:orange", label="shadow")
    ax.set_xlabel(spec.xlabel or "greedy step")
    ax.set_ylabel(spec.ylabel or "objective")
    ax.set_title(spec.title or "optimization trace")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    _save(fig, spec)


RENDERERS = {"benchmark": _render_benchmark, "nqs": _render_nqs,
             "optimization": _render_optimization}


def render(spec: PlotSpec) -> str:
    _style()
    RENDERERS[spec.kind](spec)
    return spec.output


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="render")
    ap.add_argument("--spec", required=True, help="JSON PlotSpec file")
    args = ap.parse_args(argv)
    try:
        spec = PlotSpec.from_json(args.spec)
        out = render(spec)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
