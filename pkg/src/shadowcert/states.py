"""Dense statevector engine: noise channels, partial Z measurement, shadows.

White noise is never materialized as a density matrix; it is the convex
mixture (1-p)|psi><psi| + p I/2^n and is simulated by sampling the branch
per shot. Measuring "all but the kept qubits" is implemented as one joint
Born sample of the full string followed by conditioning, which is
statistically identical and O(2^n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bits import BitString, QubitSubset

SQ2 = 1.0 / math.sqrt(2.0)

# the six Pauli eigenstates, keyed by serialization label
EIGENSTATES = {
    "0": np.array([1.0, 0.0], dtype=complex),
    "1": np.array([0.0, 1.0], dtype=complex),
    "+": np.array([SQ2, SQ2], dtype=complex),
    "-": np.array([SQ2, -SQ2], dtype=complex),
    "i+": np.array([SQ2, 1j * SQ2], dtype=complex),
    "i-": np.array([SQ2, -1j * SQ2], dtype=complex),
}
BASIS_OUTCOMES = {"Z": ("0", "1"), "X": ("+", "-"), "Y": ("i+", "i-")}
BASES = ("X", "Y", "Z")


class ZeroNormBranchError(ValueError):
    pass


@dataclass(frozen=True)
class DenseState:
    """A normalized pure state as a 2^n complex amplitude vector."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape != (1 << self.n,):
            raise ValueError("amplitude vector length must be 2^n")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state norm {norm} not 1 within 1e-10")

    @staticmethod
    def from_model(model) -> "DenseState":
        amps = model.amplitudes()
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("model has empty support")
        return DenseState(model.n, amps / norm)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class NoiseSpec:
    kind: str  # one of {"white", "coherent_haar", "coherent_phase"}
    p: float

    def __post_init__(self):
        if self.kind not in ("white", "coherent_haar", "coherent_phase"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("noise strength p must be in [0, 1]")


@dataclass(frozen=True)
class NoisyState:
    """A pure state plus a white-noise mixture weight p_white.

    p_white = 0 means the state is exactly `base`. Coherent noise channels
    produce a different pure `base` and p_white = 0.
    """

    base: DenseState
    p_white: float = 0.0

    @property
    def n(self) -> int:
        return self.base.n

    def density_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n density matrix; for small-n oracles only."""
        d = 1 << self.n
        rho = np.outer(self.base.amplitudes, self.base.amplitudes.conj())
        return (1.0 - self.p_white) * rho + self.p_white * np.eye(d) / d


def apply_noise(state: DenseState, noise: NoiseSpec,
                rng: np.random.Generator | None = None) -> NoisyState:
    """Apply one noise channel. Coherent variants renormalize a pure state."""
    d = 1 << state.n
    if noise.kind == "white":
        return NoisyState(state, noise.p)
    if rng is None:
        raise ValueError("coherent noise requires an rng")
    amps = state.amplitudes.copy()
    if noise.kind == "coherent_haar":
        amps = amps + noise.p * (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / d
    else:  # coherent_phase
        jitter = (np.pi / 2.0) * noise.p * rng.standard_normal(d)
        amps = amps * np.exp(1j * jitter)
        amps = amps + 0.75 * noise.p * (
            rng.standard_normal(d) + 1j * rng.standard_normal(d)) / math.sqrt(d)
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise ZeroNormBranchError("coherent noise produced the zero vector")
    return NoisyState(DenseState(state.n, amps / norm), 0.0)


def split_index(x: int, keep: QubitSubset, n: int) -> tuple:
    """Split a full index into (z over complement bits, l over kept bits)."""
    kept = keep.indices
    z = 0
    l = 0
    zi = 0
    li = 0
    for q in range(n):
        b = (x >> q) & 1
        if q in kept:
            l |= b << li
            li += 1
        else:
            z |= b << zi
            zi += 1
    return z, l


def merge_index(z: int, l: int, keep: QubitSubset, n: int) -> int:
    """Inverse of split_index."""
    kept = keep.indices
    x = 0
    zi = 0
    li = 0
    for q in range(n):
        if q in kept:
            if (l >> li) & 1:
                x |= 1 << q
            li += 1
        else:
            if (z >> zi) & 1:
                x |= 1 << q
            zi += 1
    return x


def fiber_indices(z: int, keep: QubitSubset, n: int) -> np.ndarray:
    """Full indices of all strings agreeing with z outside the kept qubits,
    ordered by the kept-bit value l."""
    r = keep.r
    return np.array([merge_index(z, l, keep, n) for l in range(1 << r)],
                    dtype=np.int64)


def measure_z_except(state: NoisyState, keep: QubitSubset,
                     rng: np.random.Generator) -> tuple:
    """Z-measure every qubit outside `keep`; return (z, post_state, weight).

    For white noise the branch (ideal vs maximally mixed) is sampled first;
    the maximally-mixed branch is simulated by a uniform computational basis
    state on the kept qubits, which is exact for any later measurement.
    """
    n = state.n
    r = keep.r
    if state.p_white > 0 and rng.random() < state.p_white:
        x = int(rng.integers(0, 1 << n))
        z, l = split_index(x, keep, n)
        post = np.zeros(1 << r, dtype=complex)
        post[l] = 1.0
        return BitString(z, n - r) if n > r else None, post, 2.0 ** (r - n)
    amps = state.base.amplitudes
    x = int(rng.choice(1 << n, p=np.abs(amps) ** 2))
    z, _ = split_index(x, keep, n)
    fiber = fiber_indices(z, keep, n)
    post = amps[fiber]
    w = float(np.sum(np.abs(post) ** 2))
    if w <= 0:
        raise ZeroNormBranchError("sampled a zero-probability branch")
    post = post / math.sqrt(w)
    return BitString(z, n - r) if n > r else None, post, w


@dataclass(frozen=True)
class ShadowFactor:
    """One qubit's randomized Pauli measurement: basis label + eigenstate."""

    basis: str
    outcome: str

    def matrix(self) -> np.ndarray:
        s = EIGENSTATES[self.outcome]
        return 3.0 * np.outer(s, s.conj()) - np.eye(2)


def shadow_matrix(factors: list) -> np.ndarray:
    """Tensor product of the per-qubit shadow factors (kept-qubit order;
    factor j acts on kept qubit j, the lowest-significance bit)."""
    out = np.array([[1.0 + 0j]])
    for f in factors:
        # little-endian: later qubits occupy higher-significance bits
        out = np.kron(f.matrix(), out)
    return out


def shadow_measure(post_state: np.ndarray, rng: np.random.Generator) -> list:
    """Uniform random X/Y/Z basis and Born outcome, independently per qubit."""
    v = np.asarray(post_state, dtype=complex)
    r = int(round(math.log2(v.shape[0])))
    factors = []
    for _ in range(r):
        basis = BASES[int(rng.integers(0, 3))]
        lab0, lab1 = BASIS_OUTCOMES[basis]
        # reduce qubit 0 of the current vector (original qubit j)
        pairs = v.reshape(-1, 2)
        w0 = pairs @ EIGENSTATES[lab0].conj()
        w1 = pairs @ EIGENSTATES[lab1].conj()
        total = np.sum(np.abs(w0) ** 2) + np.sum(np.abs(w1) ** 2)
        p0 = float(np.sum(np.abs(w0) ** 2) / total)
        if rng.random() < p0:
            factors.append(ShadowFactor(basis, lab0))
            v = w0
        else:
            factors.append(ShadowFactor(basis, lab1))
            v = w1
        nv = np.linalg.norm(v)
        if nv > 0:
            v = v / nv
    return factors
