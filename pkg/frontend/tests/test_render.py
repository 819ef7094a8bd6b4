import importlib
import json
import os

import pytest

from shadowfig.render import PlotSpec, SchemaError, read_table, render

rmod = importlib.import_module("shadowfig.render")

DATA = os.path.join(os.path.dirname(__file__), "data")


def spec_for(kind, tmp_path, fmt="svg", **kw):
    inputs = {"benchmark": [os.path.join(DATA, "benchmark.csv")],
              "nqs": [os.path.join(DATA, "nqs_trace.csv"),
                      os.path.join(DATA, "nqs_purity.csv")],
              "optimization": [os.path.join(DATA, "optimization.csv")]}[kind]
    return PlotSpec(kind=kind, inputs=inputs,
                    output=str(tmp_path / f"{kind}.{fmt}"), format=fmt, **kw)


@pytest.mark.parametrize("kind", ["benchmark", "nqs", "optimization"])
def test_render_all_kinds(kind, tmp_path):
    out = render(spec_for(kind, tmp_path))
    assert os.path.getsize(out) > 1000
    with open(out) as fh:
        head = fh.read(200)
    assert "<svg" in head or "<?xml" in head


@pytest.mark.parametrize("kind", ["benchmark", "nqs", "optimization"])
def test_render_deterministic_reruns(kind, tmp_path):
    contents = []
    for k in range(2):
        spec = spec_for(kind, tmp_path)
        spec.output = str(tmp_path / f"{kind}_{k}.svg")
        render(spec)
        with open(spec.output, "rb") as fh:
            contents.append(fh.read())
    assert contents[0] == contents[1]


def test_png_output(tmp_path):
    out = render(spec_for("benchmark", tmp_path, fmt="png"))
    with open(out, "rb") as fh:
        assert fh.read(8) == b"\x89PNG\r\n\x1a\n"


def test_read_table_parses_columns():
    t = read_table(os.path.join(DATA, "benchmark.csv"), "benchmark")
    assert len(t["p"]) == 11
    assert t["noise_type"][0] == "white"
    assert abs(t["fidelity"][0] - 1.0) < 1e-9


def test_schema_mismatch_lists_expected_vs_found(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# schema_version=1\nstep,fidelity\n0,1.0\n")
    with pytest.raises(SchemaError) as excinfo:
        read_table(str(bad), "optimization")
    msg = str(excinfo.value)
    assert "expected columns" in msg and "found" in msg
    assert excinfo.value.expected == rmod.SCHEMAS["optimization"]
    assert excinfo.value.found == ["step", "fidelity"]


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        PlotSpec(kind="pie", inputs=["x.csv"], output="o.svg")
    with pytest.raises(ValueError):
        PlotSpec(kind="nqs", inputs=["only-one.csv"], output="o.svg")
    with pytest.raises(ValueError):
        PlotSpec(kind="benchmark", inputs=["x.csv"], output="o.gif",
                 format="gif")
    blob = {"kind": "benchmark", "inputs": ["x.csv"], "output": "o.svg",
            "surprise": 1}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(blob))
    with pytest.raises(ValueError):
        PlotSpec.from_json(str(path))


def test_cli_round_trip(tmp_path, capsys):
    out = str(tmp_path / "bench.svg")
    spec = {"kind": "benchmark",
            "inputs": [os.path.join(DATA, "benchmark.csv")],
            "output": out, "format": "svg", "title": "sweep"}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    assert rmod.main(["--spec", str(spec_path)]) == 0
    assert os.path.exists(out)
    assert "wrote" in capsys.readouterr().out
    bad = {"kind": "benchmark", "inputs": [str(tmp_path / "missing.csv")],
           "output": out}
    spec_path.write_text(json.dumps(bad))
    assert rmod.main(["--spec", str(spec_path)]) == 2
    assert "error" in capsys.readouterr().err
