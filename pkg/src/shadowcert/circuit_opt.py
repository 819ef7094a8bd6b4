"""Greedy state-preparation optimization against an IQP+T phase-state target.

Both candidate and target are uniform-magnitude phase states whose phases are
multiples of 2*pi/8, tracked as integer eighth-counts: +1 per T gate on a set
bit, -1 (mod 8) per T-dagger, +4 per CZ whose two neighboring bits are set.
Appending an action composes with the existing sequence, so a candidate is
fully described by per-qubit T counts (mod 8) and per-edge CZ parities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import CliffordTPhaseModel


@dataclass
class CandidateState:
    n: int
    t_counts: np.ndarray = None   # int, length n, mod 8
    cz_parity: np.ndarray = None  # int, length n-1, mod 2

    def __post_init__(self):
        if self.t_counts is None:
            self.t_counts = np.zeros(self.n, dtype=np.int64)
        if self.cz_parity is None:
            self.cz_parity = np.zeros(max(self.n - 1, 0), dtype=np.int64)

    def copy(self) -> "CandidateState":
        return CandidateState(self.n, self.t_counts.copy(), self.cz_parity.copy())


def target_counts(target: CliffordTPhaseModel) -> CandidateState:
    c = CandidateState(target.n)
    c.t_counts = np.mod(np.array(target.t_pattern, dtype=np.int64), 8)
    if target.cz_chain:
        c.cz_parity = np.ones(target.n - 1, dtype=np.int64)
    return c


def target_phase(target: CliffordTPhaseModel, b: int) -> int:
    """Eighth-count c(b) mod 8 of the target circuit at string b."""
    return int(target.eighth_counts(np.array([b], dtype=np.uint64))[0])


@dataclass(frozen=True)
class Action:
    kind: str  # one of {"HCZH", "HTH", "HTdgH", "noop"}
    site: int = -1

    def label(self) -> str:
        return self.kind if self.kind == "noop" else f"{self.kind}:{self.site}"


def action_space(n: int) -> list:
    """All candidate actions in tie-break order; the no-op comes last so a
    strictly-improving action always beats standing still on exact ties."""
    acts = [Action("HCZH", i) for i in range(n - 1)]
    acts += [Action("HTH", i) for i in range(n)]
    acts += [Action("HTdgH", i) for i in range(n)]
    acts.append(Action("noop"))
    return acts


def apply_action(cand: CandidateState, act: Action) -> CandidateState:
    out = cand.copy()
    if act.kind == "HTH":
        out.t_counts[act.site] = (out.t_counts[act.site] + 1) % 8
    elif act.kind == "HTdgH":
        out.t_counts[act.site] = (out.t_counts[act.site] - 1) % 8
    elif act.kind == "HCZH":
        out.cz_parity[act.site] = (out.cz_parity[act.site] + 1) % 2
    elif act.kind != "noop":
        raise ValueError(f"unknown action kind {act.kind!r}")
    return out


def _phase_diffs(cand: CandidateState, tgt: CandidateState,
                 bits: np.ndarray) -> np.ndarray:
    """c_cand(b) - c_target(b) mod 8 for a (T, n) matrix of bits."""
    dt = np.mod(cand.t_counts - tgt.t_counts, 8)
    dcz = np.mod(cand.cz_parity - tgt.cz_parity, 2)
    c = bits @ dt
    if cand.n > 1:
        c = c + 4 * ((bits[:, :-1] * bits[:, 1:]) @ dcz)
    return np.mod(c, 8)


def _all_bit_matrix(n: int) -> np.ndarray:
    xs = np.arange(1 << n, dtype=np.uint64)
    return ((xs[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & 1).astype(np.int64)


def score_fidelity(cand: CandidateState, tgt: CandidateState,
                   T: int = 10000, rng: np.random.Generator | None = None,
                   bits: np.ndarray | None = None, exact: bool = False) -> float:
    """|mean over strings of e^{2 pi i (c_cand - c_target)/8}|^2."""
    if exact:
        bits = _all_bit_matrix(cand.n)
    elif bits is None:
        bits = rng.integers(0, 2, size=(T, cand.n)).astype(np.int64)
    d = _phase_diffs(cand, tgt, bits)
    return float(np.abs(np.mean(np.exp(2j * np.pi * d / 8.0))) ** 2)


def score_shadow(cand: CandidateState, tgt: CandidateState,
                 T: int = 10000, rng: np.random.Generator | None = None,
                 draws: tuple | None = None, exact: bool = False) -> float:
    """Mean single-qubit overlap |<Psi_pred|Psi_true>|^2 at a random qubit.

    Only operations touching the random qubit or its chain neighbors matter:
    the conditional phase at qubit x is t[x] + 4*(cz[x-1]*b_left + cz[x]*b_right).
    The overlap of two such states is cos^2(pi * delta_c / 8).
    """
    n = cand.n
    if exact:
        qs, bl, br, w = [], [], [], []
        for x in range(n):
            for left in (0, 1):
                for right in (0, 1):
                    qs.append(x)
                    bl.append(left)
                    br.append(right)
                    w.append(1.0 / (4 * n))
        qs, bl, br = np.array(qs), np.array(bl), np.array(br)
        weights = np.array(w)
    elif draws is not None:
        qs, bl, br = draws
        weights = None
    else:
        qs = rng.integers(0, n, size=T)
        bl = rng.integers(0, 2, size=T)
        br = rng.integers(0, 2, size=T)
        weights = None
    dt = np.mod(cand.t_counts - tgt.t_counts, 8)
    dcz = np.mod(cand.cz_parity - tgt.cz_parity, 2)
    dcz_l = np.concatenate(([0], dcz))  # edge (x-1, x); 0 at the boundary
    dcz_r = np.concatenate((dcz, [0]))  # edge (x, x+1)
    delta = np.mod(dt[qs] + 4 * (dcz_l[qs] * bl + dcz_r[qs] * br), 8)
    overlaps = np.cos(np.pi * delta / 8.0) ** 2
    if weights is not None:
        return float(np.sum(weights * overlaps))
    return float(np.mean(overlaps))


@dataclass
class TraceRow:
    step: int
    action: str
    fidelity: float
    shadow: float


def greedy_optimize(target: CliffordTPhaseModel, max_steps: int,
                    objective: str, rng: np.random.Generator,
                    T: int = 10000) -> tuple:
    """Greedy search over the action space; emits both metrics every step.

    Per step all actions are scored on common random draws (shared across
    candidates to cut comparison noise); argmax wins, ties to the lowest
    action index. Returns (final candidate, list of TraceRow).
    """
    if objective not in ("fidelity", "shadow"):
        raise ValueError("objective must be 'fidelity' or 'shadow'")
    n = target.n
    tgt = target_counts(target)
    cand = CandidateState(n)
    acts = action_space(n)
    trace = [TraceRow(0, "init",
                      score_fidelity(cand, tgt, T, rng),
                      score_shadow(cand, tgt, T, rng))]
    for step in range(1, max_steps + 1):
        if objective == "fidelity":
            bits = rng.integers(0, 2, size=(T, n)).astype(np.int64)
            scores = [score_fidelity(apply_action(cand, a), tgt, bits=bits)
                      for a in acts]
        else:
            draws = (rng.integers(0, n, size=T), rng.integers(0, 2, size=T),
                     rng.integers(0, 2, size=T))
            scores = [score_shadow(apply_action(cand, a), tgt, draws=draws)
                      for a in acts]
        best = int(np.argmax(scores))  # argmax takes the first (lowest) index
        cand = apply_action(cand, acts[best])
        trace.append(TraceRow(step, acts[best].label(),
                              score_fidelity(cand, tgt, T, rng),
                              score_shadow(cand, tgt, T, rng)))
        if (np.array_equal(cand.t_counts, tgt.t_counts)
                and np.array_equal(cand.cz_parity, tgt.cz_parity)):
            break
    return cand, trace
