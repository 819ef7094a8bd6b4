"""Fidelity, XEB, normalized shadow overlap, sparse observables, purity, MoM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .states import DenseState, NoisyState


class DegenerateXEBError(ValueError):
    pass


class SamplingUnavailableError(ValueError):
    pass


def exact_fidelity(state: NoisyState, target: DenseState) -> float:
    """<psi| rho |psi> for the pure-or-white-noise lab state."""
    ov = abs(np.vdot(target.amplitudes, state.base.amplitudes)) ** 2
    d = 1 << state.n
    return (1.0 - state.p_white) * ov + state.p_white / d


def phase_fidelity(true_phase_fn, pred_phase_fn, n: int, T: int,
                   rng: np.random.Generator) -> float:
    """|mean over T uniform strings of e^{i (pred - true)}|^2."""
    xs = rng.integers(0, 1 << n, size=T).astype(np.uint64)
    diff = np.asarray(pred_phase_fn(xs), dtype=float) - np.asarray(
        true_phase_fn(xs), dtype=float)
    return float(np.abs(np.mean(np.exp(1j * diff))) ** 2)


def xeb(samples: np.ndarray, ideal_p: np.ndarray) -> tuple:
    """Linear XEB, normalized between 1/d and sum p^2; returns (value, se).

    Raises for an exactly-uniform ideal distribution, where the denominator
    sum p^2 - 1/d degenerates.
    """
    p = np.asarray(ideal_p, dtype=float)
    d = p.shape[0]
    denom = float(np.sum(p * p) - 1.0 / d)
    if denom <= 1e-12 / d:
        raise DegenerateXEBError("uniform ideal distribution: XEB denominator is 0")
    vals = (p[np.asarray(samples, dtype=np.int64)] - 1.0 / d) / denom
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return mean, se


def normalized_shadow_overlap(omega_hat: float, m: int, n: int) -> float:
    """Affine map sending omega = 1 to 1 and omega = 2^-m to 2^-n."""
    d = 2.0 ** n
    return ((2.0 ** m / (2.0 ** m - 1.0)) * ((d - 1.0) / d)
            * (omega_hat - 2.0 ** (-m)) + 1.0 / d)


@dataclass
class SparseObservable:
    """A g-sparse observable given by a row oracle x -> [(y, <x|O|y>)]."""

    row: callable
    sparsity: int
    o2_bound: float  # estimate of <psi|O^2|psi>

    def spot_check_hermitian(self, xs) -> bool:
        for x in xs:
            for y, v in self.row(int(x)):
                back = dict(self.row(int(y)))
                if x not in back or abs(back[x] - np.conj(v)) > 1e-9:
                    return False
        return True


@dataclass
class MoMConfig:
    """Median-of-means parameters; defaults follow the estimator contract."""

    epsilon: float
    delta: float
    B: int | None = None  # batch size
    K: int | None = None  # batch count

    def resolved(self, o2_bound: float) -> tuple:
        B = self.B if self.B is not None else math.ceil(
            34.0 * o2_bound / self.epsilon ** 2)
        K = self.K if self.K is not None else math.ceil(
            2.0 * math.log(2.0 / self.delta))
        return max(B, 1), max(K, 1)


def median_of_means(samples: np.ndarray, B: int, K: int) -> complex:
    """Median over K batch means of size B; componentwise for complex data."""
    samples = np.asarray(samples)
    means = samples[: B * K].reshape(K, B).mean(axis=1)
    if np.iscomplexobj(samples):
        return complex(np.median(means.real), np.median(means.imag))
    return complex(float(np.median(means)), 0.0)


def _exact_sampler(model, rng: np.random.Generator):
    p = model.measurement_distribution(exact=True)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0

    def draw(count: int) -> np.ndarray:
        return np.searchsorted(cdf, rng.random(count), side="right").astype(np.uint64)

    return draw


def sparse_expectation(model, obs: SparseObservable, config: MoMConfig,
                       rng: np.random.Generator, sampler=None) -> dict:
    """MoM Monte-Carlo estimate of <psi|O|psi>.

    Each sample x ~ pi contributes sum_y O_xy Psi(y)/Psi(x). Samples hitting
    Psi(x)=0 are resampled and counted (measure zero under the exact pi).
    """
    draw = sampler if sampler is not None else _exact_sampler(model, rng)
    B, K = config.resolved(obs.o2_bound)
    total = B * K
    vals = np.zeros(total, dtype=complex)
    filled = 0
    resampled = 0
    while filled < total:
        xs = draw(total - filled)
        ax = model.query_many(xs)
        for x, a in zip(xs, ax):
            if a == 0:
                resampled += 1
                continue
            acc = 0.0 + 0.0j
            for y, v in obs.row(int(x)):
                acc += v * model.query(int(y)) / a
            vals[filled] = acc
            filled += 1
            if filled == total:
                break
    est = median_of_means(vals, B, K)
    return {"estimate": est, "B": B, "K": K, "samples": total,
            "resampled": resampled,
            "variance": float(np.var(vals.real, ddof=1)) if total > 1 else 0.0}


def purity(model, subsystem, n: int, shots: int, rng: np.random.Generator,
           sampler=None, phase_fn=None) -> dict:
    """Subsystem purity Tr(rho_A^2) from paired samples and amplitude ratios.

    For each pair (x, x') drawn from pi, the contribution is the real part of
    Psi(x'_A x_B)/Psi(x_A x_B) * Psi(x_A x'_B)/Psi(x'_A x'_B). Swapped strings
    leaving the support contribute through resampling-free zero handling:
    a zero denominator triggers a resample (counted); a zero numerator is a
    legitimate zero contribution.

    When phase_fn is given (uniform-magnitude families and trained phase
    predictors), the ratio product reduces to a phase difference and pairs are
    drawn uniformly.
    """
    a_mask = 0
    for q in subsystem:
        a_mask |= 1 << q
    b_mask = ((1 << n) - 1) ^ a_mask
    vals = np.zeros(shots)
    resampled = 0
    filled = 0
    if phase_fn is not None:
        x1 = rng.integers(0, 1 << n, size=shots).astype(np.uint64)
        x2 = rng.integers(0, 1 << n, size=shots).astype(np.uint64)
        # alt strings swap the A-bits between the two draws
        x1_alt = (x2 & np.uint64(a_mask)) | (x1 & np.uint64(b_mask))
        x2_alt = (x1 & np.uint64(a_mask)) | (x2 & np.uint64(b_mask))
        ph = (np.asarray(phase_fn(x1_alt), dtype=float)
              + np.asarray(phase_fn(x2_alt), dtype=float)
              - np.asarray(phase_fn(x1), dtype=float)
              - np.asarray(phase_fn(x2), dtype=float))
        vals = np.cos(ph)
        filled = shots
    else:
        draw = sampler if sampler is not None else _exact_sampler(model, rng)
        while filled < shots:
            count = shots - filled
            x1 = draw(count)
            x2 = draw(count)
            x1_alt = (x2 & np.uint64(a_mask)) | (x1 & np.uint64(b_mask))
            x2_alt = (x1 & np.uint64(a_mask)) | (x2 & np.uint64(b_mask))
            q1 = model.query_many(x1)
            q2 = model.query_many(x2)
            q1a = model.query_many(x1_alt)
            q2a = model.query_many(x2_alt)
            for k in range(count):
                if q1[k] == 0 or q2[k] == 0:
                    resampled += 1
                    continue
                vals[filled] = float(np.real(q1a[k] / q1[k] * q2a[k] / q2[k]))
                filled += 1
                if filled == shots:
                    break
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(shots)) if shots > 1 else 0.0
    clamped = min(max(mean, 0.0), 1.0 + 3.0 * se)
    return {"purity": clamped, "raw_mean": mean, "se": se,
            "resampled": resampled, "shots": shots}


def dense_subsystem_purity(state: DenseState, subsystem, n: int) -> float:
    """Oracle: Tr(rho_A^2) by dense partial trace."""
    a_idx = sorted(subsystem)
    b_idx = [q for q in range(n) if q not in a_idx]
    da, db = 1 << len(a_idx), 1 << len(b_idx)
    M = np.zeros((da, db), dtype=complex)
    for x in range(1 << n):
        a = 0
        for j, q in enumerate(a_idx):
            a |= ((x >> q) & 1) << j
        b = 0
        for j, q in enumerate(b_idx):
            b |= ((x >> q) & 1) << j
        M[a, b] = state.amplitudes[x]
    rho_a = M @ M.conj().T
    return float(np.real(np.trace(rho_a @ rho_a)))
