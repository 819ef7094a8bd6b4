"""Measurement protocols: data collection, local overlaps, certification.

Collection is data-first: it never consults a query model, so one dataset can
be replayed against many candidate models (hypothesis selection). Records are
held in a column-oriented RecordBatch for speed and can be serialized to
JSONL one record per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bits import (BitString, QubitSubset, mask_to_indices, popcount_array,
                   sample_subset_masks, subset_count)
from .states import (BASES, BASIS_OUTCOMES, EIGENSTATES, NoisyState, ShadowFactor)

SCHEMA_VERSION = 1

# conj(eigenstate) components, indexed [basis, outcome, component]
_CONJ_EIG = np.zeros((3, 2, 2), dtype=complex)
for _bi, _b in enumerate(BASES):
    for _oi, _lab in enumerate(BASIS_OUTCOMES[_b]):
        _CONJ_EIG[_bi, _oi] = EIGENSTATES[_lab].conj()

# shadow factor matrices 3|s><s| - I, indexed [basis, outcome]
_FACTOR_MATS = np.zeros((3, 2, 2, 2), dtype=complex)
for _bi, _b in enumerate(BASES):
    for _oi, _lab in enumerate(BASIS_OUTCOMES[_b]):
        _s = EIGENSTATES[_lab]
        _FACTOR_MATS[_bi, _oi] = 3.0 * np.outer(_s, _s.conj()) - np.eye(2)


class RecordOperatorMismatchError(ValueError):
    pass


class InteractiveRequiredError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementRecord:
    """One protocol round: subset k, Z outcomes z, bases, eigenstate labels."""

    subset: QubitSubset
    z: str          # bit characters for the non-kept qubits, ascending position
    bases: tuple    # per kept qubit, in subset order
    outcomes: tuple

    def __post_init__(self):
        if len(self.bases) != self.subset.r or len(self.outcomes) != self.subset.r:
            raise ValueError("bases/outcomes must have length r")

    def to_json(self) -> str:
        return json.dumps({"subset": list(self.subset.indices), "z": self.z,
                           "bases": list(self.bases),
                           "outcomes": list(self.outcomes)})

    @staticmethod
    def from_json(line: str) -> "MeasurementRecord":
        d = json.loads(line)
        return MeasurementRecord(QubitSubset(tuple(d["subset"])), d["z"],
                                 tuple(d["bases"]), tuple(d["outcomes"]))


@dataclass
class RecordBatch:
    """Column-oriented measurement records.

    x0[t] is the full-string index with all kept bits cleared; the Z outcome
    string z is its restriction to the non-kept positions. bases/outcomes hold
    integer codes (basis 0/1/2 = X/Y/Z, outcome 0/1 = first/second eigenstate)
    with only the first r columns meaningful per row.
    """

    n: int
    m: int
    masks: np.ndarray     # uint32 subset bitmasks, shape (T,)
    x0: np.ndarray        # uint64, shape (T,)
    bases: np.ndarray     # int8, shape (T, m)
    outcomes: np.ndarray  # int8, shape (T, m)

    def __len__(self) -> int:
        return self.masks.shape[0]

    def record(self, t: int) -> MeasurementRecord:
        mask = int(self.masks[t])
        idx = mask_to_indices(mask)
        r = len(idx)
        x0 = int(self.x0[t])
        zbits = "".join(str((x0 >> q) & 1) for q in range(self.n) if q not in idx)
        bases = tuple(BASES[int(self.bases[t, j])] for j in range(r))
        outcomes = tuple(BASIS_OUTCOMES[bases[j]][int(self.outcomes[t, j])]
                         for j in range(r))
        return MeasurementRecord(QubitSubset(idx), zbits, bases, outcomes)

    def iter_records(self):
        for t in range(len(self)):
            yield self.record(t)


def batch_from_records(records, n: int, m: int) -> RecordBatch:
    T = len(records)
    masks = np.zeros(T, dtype=np.uint32)
    x0 = np.zeros(T, dtype=np.uint64)
    bases = np.zeros((T, m), dtype=np.int8)
    outcomes = np.zeros((T, m), dtype=np.int8)
    for t, rec in enumerate(records):
        idx = rec.subset.indices
        mask = 0
        for q in idx:
            mask |= 1 << q
        masks[t] = mask
        v = 0
        zi = 0
        for q in range(n):
            if q not in idx:
                if rec.z[zi] == "1":
                    v |= 1 << q
                zi += 1
        x0[t] = v
        for j, (b, o) in enumerate(zip(rec.bases, rec.outcomes)):
            bases[t, j] = BASES.index(b)
            outcomes[t, j] = BASIS_OUTCOMES[b].index(o)
    return RecordBatch(n, m, masks, x0, bases, outcomes)


def write_jsonl(batch: RecordBatch, path) -> None:
    with open(path, "w") as fh:
        for rec in batch.iter_records():
            fh.write(rec.to_json() + "\n")


def read_jsonl(path, n: int, m: int) -> RecordBatch:
    with open(path) as fh:
        records = [MeasurementRecord.from_json(line) for line in fh if line.strip()]
    return batch_from_records(records, n, m)


def _fiber_offsets(mask: int) -> np.ndarray:
    """Offsets of the 2^r kept-bit assignments, ordered by kept-bit value l."""
    idx = mask_to_indices(mask)
    r = len(idx)
    offs = np.zeros(1 << r, dtype=np.uint64)
    for l in range(1 << r):
        v = 0
        for j, q in enumerate(idx):
            if (l >> j) & 1:
                v |= 1 << q
        offs[l] = v
    return offs


def collect_records(state: NoisyState, m: int, T: int,
                    rng: np.random.Generator, exact_jump: bool = False) -> RecordBatch:
    """Run T i.i.d. protocol rounds against the lab state (no model needed)."""
    n = state.n
    if m > n:
        raise ValueError("level m cannot exceed n")
    masks = sample_subset_masks(n, m, T, rng, exact_jump=exact_jump)
    bases_out = np.zeros((T, m), dtype=np.int8)
    outcomes_out = np.zeros((T, m), dtype=np.int8)

    mixed = np.zeros(T, dtype=bool)
    if state.p_white > 0:
        mixed = rng.random(T) < state.p_white
    # joint Born sample of the full string, then condition on the subset
    probs = state.base.probabilities()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    xs = np.searchsorted(cdf, rng.random(T), side="right").astype(np.uint64)
    if mixed.any():
        xs[mixed] = rng.integers(0, 1 << n, size=int(mixed.sum())).astype(np.uint64)
    x0 = xs & ~masks.astype(np.uint64)

    amps = state.base.amplitudes
    basis_draws = rng.integers(0, 3, size=(T, m)).astype(np.int8)
    urand = rng.random((T, m))

    for mask in np.unique(masks):
        sel = np.where(masks == mask)[0]
        offs = _fiber_offsets(int(mask))
        r = int(popcount_array(np.array([mask]))[0])
        full = (x0[sel][:, None] + offs[None, :]).astype(np.int64)
        v = amps[full]  # (B, 2^r) conditional amplitudes (unnormalized)
        mix_sel = mixed[sel]
        if mix_sel.any():
            # maximally mixed branch: uniform kept-bit basis state
            l_vals = np.zeros(int(mix_sel.sum()), dtype=np.int64)
            kept = mask_to_indices(int(mask))
            for j, q in enumerate(kept):
                l_vals |= (((xs[sel][mix_sel] >> np.uint64(q)) & np.uint64(1))
                           .astype(np.int64) << j)
            vm = np.zeros((int(mix_sel.sum()), 1 << r), dtype=complex)
            vm[np.arange(vm.shape[0]), l_vals] = 1.0
            v = v.copy()
            v[mix_sel] = vm
        # sequential per-qubit collapse, batched over shots
        for j in range(r):
            pairs = v.reshape(v.shape[0], -1, 2)
            b = basis_draws[sel, j]
            c0 = _CONJ_EIG[b, 0]  # (B, 2)
            c1 = _CONJ_EIG[b, 1]
            w0 = pairs[:, :, 0] * c0[:, 0:1] + pairs[:, :, 1] * c0[:, 1:2]
            w1 = pairs[:, :, 0] * c1[:, 0:1] + pairs[:, :, 1] * c1[:, 1:2]
            n0 = np.sum(np.abs(w0) ** 2, axis=1)
            n1 = np.sum(np.abs(w1) ** 2, axis=1)
            p0 = n0 / (n0 + n1)
            pick1 = urand[sel, j] >= p0
            v = np.where(pick1[:, None], w1, w0)
            norms = np.sqrt(np.sum(np.abs(v) ** 2, axis=1, keepdims=True))
            norms[norms == 0] = 1.0
            v = v / norms
            bases_out[sel, j] = b
            outcomes_out[sel, j] = pick1.astype(np.int8)
    return RecordBatch(n, m, masks, x0, bases_out, outcomes_out)


def local_observable(model, subset: QubitSubset, z: str, n: int) -> np.ndarray:
    """The r-qubit operator L_{z_k}: sum over unordered antipodal pairs
    {l, lbar} of the projector onto the normalized two-amplitude vector.
    Pairs with both amplitudes zero are omitted (all-zero gives the zero
    operator, forcing omega = 0)."""
    r = subset.r
    if r > 8:
        raise ValueError("r > 8 dense local operators unsupported")
    x0 = 0
    zi = 0
    for q in range(n):
        if q not in subset.indices:
            if z[zi] == "1":
                x0 |= 1 << q
            zi += 1
    mask = 0
    for q in subset.indices:
        mask |= 1 << q
    offs = _fiber_offsets(mask)
    psi = model.query_many(np.uint64(x0) + offs)
    dim = 1 << r
    L = np.zeros((dim, dim), dtype=complex)
    top = dim - 1
    for l in range(dim // 2):
        lbar = l ^ top
        a, b = psi[l], psi[lbar]
        norm2 = abs(a) ** 2 + abs(b) ** 2
        if norm2 <= 0:
            continue
        v = np.zeros(dim, dtype=complex)
        v[l] = a
        v[lbar] = b
        v /= math.sqrt(norm2)
        L += np.outer(v, v.conj())
    return L


def local_overlap(record: MeasurementRecord, L: np.ndarray) -> float:
    """omega = Tr(L_{z_k} sigma) with sigma the tensor product shadow."""
    r = record.subset.r
    if L.shape != (1 << r, 1 << r):
        raise RecordOperatorMismatchError(
            f"operator of shape {L.shape} does not match r={r}")
    factors = [ShadowFactor(b, o) for b, o in zip(record.bases, record.outcomes)]
    from .states import shadow_matrix
    sigma = shadow_matrix(factors)
    return float(np.real(np.trace(L @ sigma)))


def evaluate_overlaps(batch: RecordBatch, model) -> np.ndarray:
    """omega for every record, replaying the query phase against `model`."""
    T = len(batch)
    out = np.zeros(T, dtype=np.float64)
    for mask in np.unique(batch.masks):
        sel = np.where(batch.masks == mask)[0]
        offs = _fiber_offsets(int(mask))
        r = int(len(offs)).bit_length() - 1
        dim = 1 << r
        full = (batch.x0[sel][:, None] + offs[None, :])
        psi = model.query_many(full.ravel()).reshape(len(sel), dim)
        # batched shadow matrix sigma, built factor by factor (qubit j is
        # bit j of the kept index, so each new factor goes outermost)
        sigma = np.ones((len(sel), 1, 1), dtype=complex)
        for j in range(r):
            f = _FACTOR_MATS[batch.bases[sel, j], batch.outcomes[sel, j]]
            sigma = np.einsum("bkl,bij->bkilj", f, sigma).reshape(
                len(sel), sigma.shape[1] * 2, sigma.shape[1] * 2)
        omega = np.zeros(len(sel), dtype=np.float64)
        top = dim - 1
        for l in range(dim // 2):
            lbar = l ^ top
            a = psi[:, l]
            b = psi[:, lbar]
            norm2 = np.abs(a) ** 2 + np.abs(b) ** 2
            good = norm2 > 0
            term = np.zeros(len(sel), dtype=np.float64)
            ac = a.conj()
            bc = b.conj()
            val = (ac * a * sigma[:, l, l] + ac * b * sigma[:, l, lbar]
                   + bc * a * sigma[:, lbar, l] + bc * b * sigma[:, lbar, lbar])
            term[good] = np.real(val[good]) / norm2[good]
            omega += term
        out[sel] = omega
    return out


@dataclass
class CertificationConfig:
    """Protocol parameters; threshold 1 - 3*eps/(4*tau) must lie in (0,1)."""

    m: int
    epsilon: float
    delta: float
    tau: float
    shots: int | None = None

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be at least 1")
        if not (0 < self.epsilon < 1) or not (0 < self.delta < 1):
            raise ValueError("epsilon and delta must lie in (0, 1)")
        thr = self.threshold()
        if not (0 < thr < 1):
            raise ValueError(f"certification threshold {thr} outside (0, 1)")

    def threshold(self) -> float:
        return 1.0 - 3.0 * self.epsilon / (4.0 * self.tau)

    def default_shots(self) -> int:
        return math.ceil(2 ** (2 * self.m + 4) * (self.tau ** 2 / self.epsilon ** 2)
                         * math.log(2.0 / self.delta))

    def default_shots_direct(self) -> int:
        return math.ceil(32.0 * (self.tau / self.epsilon) * math.log(1.0 / self.delta))


@dataclass
class EstimateReport:
    mean: float
    variance: float
    count: int
    verdict: str = "n/a"  # Certified | Failed | n/a
    fidelity_lower_bound: float | None = None
    threshold: float | None = None

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "mean": self.mean,
                "variance": self.variance, "count": self.count,
                "verdict": self.verdict,
                "fidelity_lower_bound": self.fidelity_lower_bound,
                "threshold": self.threshold}


def _report(omega: np.ndarray, config: CertificationConfig) -> EstimateReport:
    mean = float(np.mean(omega))
    var = float(np.var(omega, ddof=1)) if len(omega) > 1 else 0.0
    thr = config.threshold()
    verdict = "Certified" if mean >= thr else "Failed"
    return EstimateReport(mean=mean, variance=var, count=len(omega),
                          verdict=verdict,
                          fidelity_lower_bound=1.0 - config.tau * (1.0 - mean),
                          threshold=thr)


def certify(state: NoisyState, model, config: CertificationConfig,
            rng: np.random.Generator) -> EstimateReport:
    """Full protocol: collect, replay queries, threshold the mean overlap."""
    T = config.shots if config.shots is not None else config.default_shots()
    batch = collect_records(state, config.m, T, rng)
    omega = evaluate_overlaps(batch, model)
    return _report(omega, config)


def certify_direct(state: NoisyState, model, config: CertificationConfig,
                   rng: np.random.Generator) -> EstimateReport:
    """Interactive variant: the kept qubit is measured directly in the basis
    {|Psi_{k,z}><Psi_{k,z}|, I - ...}, so omega is a Bernoulli 0/1 value.
    Level 1 only; the model is required during collection."""
    if config.m != 1:
        raise InteractiveRequiredError("direct certification is level-1 only")
    if model is None:
        raise InteractiveRequiredError("direct certification needs the model mid-shot")
    n = state.n
    T = config.shots if config.shots is not None else config.default_shots_direct()
    ks = rng.integers(0, n, size=T)
    mixed = np.zeros(T, dtype=bool)
    if state.p_white > 0:
        mixed = rng.random(T) < state.p_white
    probs = state.base.probabilities()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    xs = np.searchsorted(cdf, rng.random(T), side="right").astype(np.uint64)
    if mixed.any():
        xs[mixed] = rng.integers(0, 1 << n, size=int(mixed.sum())).astype(np.uint64)
    kbit = (np.uint64(1) << ks.astype(np.uint64))
    x0 = xs & ~kbit
    x1 = x0 | kbit
    amps = state.base.amplitudes
    a0 = amps[x0.astype(np.int64)].copy()
    a1 = amps[x1.astype(np.int64)].copy()
    if mixed.any():
        hi = ((xs[mixed] & kbit[mixed]) > 0)
        a0[mixed] = np.where(hi, 0.0, 1.0)
        a1[mixed] = np.where(hi, 1.0, 0.0)
    pn = np.sqrt(np.abs(a0) ** 2 + np.abs(a1) ** 2)
    pn[pn == 0] = 1.0
    a0, a1 = a0 / pn, a1 / pn
    q0 = model.query_many(x0)
    q1 = model.query_many(x1)
    qn2 = np.abs(q0) ** 2 + np.abs(q1) ** 2
    ok = qn2 > 0
    ov = np.zeros(T)
    ov[ok] = (np.abs(q0[ok].conj() * a0[ok] + q1[ok].conj() * a1[ok]) ** 2
              / qn2[ok])
    omega = (rng.random(T) < ov).astype(np.float64)
    omega[~ok] = 0.0
    return _report(omega, config)


def hypothesis_select(batch: RecordBatch, models: list, tau: float,
                      epsilon: float) -> tuple:
    """Replay one dataset against every candidate model; return (argmax index,
    its report). Ties break to the lowest index."""
    if len(models) == 0:
        raise ValueError("model list must be nonempty")
    best_i = 0
    best_mean = -np.inf
    reports = []
    for i, model in enumerate(models):
        omega = evaluate_overlaps(batch, model)
        mean = float(np.mean(omega))
        var = float(np.var(omega, ddof=1)) if len(omega) > 1 else 0.0
        reports.append(EstimateReport(
            mean=mean, variance=var, count=len(omega),
            fidelity_lower_bound=1.0 - tau * (1.0 - mean + epsilon)))
        if mean > best_mean:
            best_mean = mean
            best_i = i
    return best_i, reports[best_i]
