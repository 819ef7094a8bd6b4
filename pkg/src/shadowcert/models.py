"""Amplitude oracles Psi(x) for every supported target-state family.

A query model returns a possibly unnormalized complex amplitude for any n-bit
string; queries are deterministic per instance and reentrant. norm_hint is
explicit metadata (normalizing a general model is intractable), so operations
that need the normalized measurement distribution either demand it or use
exact mode at small n.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bits import MAX_DENSE_N, popcount_array

MAX_EXACT_N = 14


class NeedsNormalizationError(ValueError):
    pass


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Stateless 64-bit mixer; the basis of all hashed pseudorandom phases."""
    x = np.atleast_1d(np.asarray(x, dtype=np.uint64))
    with np.errstate(over="ignore"):  # 64-bit wraparound is intended
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def hashed_phase(seed: int, x, levels: int = 2) -> np.ndarray:
    """Deterministic pseudorandom phase of string x: a multiple of 2*pi/levels.

    levels=2 gives binary phases {0, pi}. Pure function of (seed, x), so a
    model built on it can be queried lazily at 2^n scale.
    """
    x = np.asarray(x, dtype=np.uint64)
    h = _splitmix64(x ^ _splitmix64(np.uint64(seed & (2**64 - 1))))
    return (h % np.uint64(levels)).astype(np.float64) * (2.0 * np.pi / levels)


class QueryModel:
    """Abstract amplitude oracle. Subclasses implement query_many."""

    n: int
    norm_hint: float | None = None

    def query(self, x: int) -> complex:
        return complex(self.query_many(np.array([x], dtype=np.uint64))[0])

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def amplitudes(self) -> np.ndarray:
        """Dense unnormalized amplitude vector; only for n <= MAX_EXACT_N."""
        if self.n > MAX_EXACT_N:
            raise NeedsNormalizationError(f"dense amplitudes infeasible at n={self.n}")
        return self.query_many(np.arange(1 << self.n, dtype=np.uint64))

    def measurement_distribution(self, exact: bool = True) -> np.ndarray:
        """Normalized pi(x) = |<x|psi>|^2 as a dense probability vector."""
        if not exact:
            raise NeedsNormalizationError("only exact mode returns a dense vector")
        amps = self.amplitudes()
        p = np.abs(amps) ** 2
        total = p.sum()
        if total <= 0:
            raise NeedsNormalizationError("model has empty support")
        return p / total

    def descriptor(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)


@dataclass
class PhaseStateModel(QueryModel):
    """Uniform-magnitude phase state Psi(x) = e^{i phi(x)}.

    phase_source "pseudorandom": binary phases {0, pi} hashed from (seed, x).
    phase_source "correlated": each index i is paired with j = (i + offset) % n
    and a random multiple of pi/2 is added when both bits are set.
    """

    n: int
    phase_source: str = "pseudorandom"
    seed: int = 0
    pair_offset: int = 10
    norm_hint: float | None = None
    _pair_phases: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.phase_source not in ("pseudorandom", "correlated"):
            raise ValueError(f"unknown phase_source {self.phase_source!r}")
        self.norm_hint = float(2**self.n)
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))
        self._pair_phases = (np.pi / 2.0) * gen.integers(0, 4, size=self.n)

    def phases(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        if self.phase_source == "pseudorandom":
            return hashed_phase(self.seed, xs, levels=2)
        total = np.zeros(xs.shape, dtype=np.float64)
        for i in range(self.n):
            j = (i + self.pair_offset) % self.n
            bi = (xs >> np.uint64(i)) & np.uint64(1)
            bj = (xs >> np.uint64(j)) & np.uint64(1)
            total += self._pair_phases[i] * (bi & bj).astype(np.float64)
        return np.mod(total, 2.0 * np.pi)

    def phase(self, x: int) -> float:
        return float(self.phases(np.array([x], dtype=np.uint64))[0])

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        return np.exp(1j * self.phases(xs))

    def measurement_distribution(self, exact: bool = True) -> np.ndarray:
        d = 1 << self.n
        if self.n > MAX_EXACT_N:
            raise NeedsNormalizationError(f"dense vector infeasible at n={self.n}")
        return np.full(d, 1.0 / d)

    def descriptor(self) -> dict:
        return {"family": "phase", "n": self.n, "phase_source": self.phase_source,
                "seed": self.seed, "pair_offset": self.pair_offset}


@dataclass
class RotatedProductPhaseModel(QueryModel):
    """Phase state with non-uniform magnitudes from per-qubit rotations.

    Magnitude of x is prod_i (cos rot[i] if bit i = 0 else sin rot[i]); the
    phase of each amplitude is an independent hashed uniform multiple of
    2*pi/L with L large (effectively continuous).
    """

    n: int
    seed: int = 0
    rotation_mean: float = np.pi / 4
    rotation_std: float = 0.01 * np.pi
    norm_hint: float | None = None
    rotation: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))
        self.rotation = self.rotation_mean + self.rotation_std * gen.standard_normal(self.n)
        self.norm_hint = 1.0

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        mag = np.ones(xs.shape, dtype=np.float64)
        for i in range(self.n):
            bi = ((xs >> np.uint64(i)) & np.uint64(1)).astype(bool)
            mag *= np.where(bi, np.sin(self.rotation[i]), np.cos(self.rotation[i]))
        phase = hashed_phase(self.seed + 1, xs, levels=1 << 20)
        return mag * np.exp(1j * phase)

    def descriptor(self) -> dict:
        return {"family": "rotated-phase", "n": self.n, "seed": self.seed,
                "rotation_mean": self.rotation_mean, "rotation_std": self.rotation_std}


@dataclass
class GhzXModel(QueryModel):
    """alpha0 |0^n> + alpha1 |1^n> rewritten in the X basis: amplitude of x is
    (alpha0+alpha1)/sqrt(2^n) on even-weight x and (alpha0-alpha1)/sqrt(2^n)
    on odd-weight x."""

    n: int
    alpha0: complex = 1 / math.sqrt(2)
    alpha1: complex = 1 / math.sqrt(2)
    norm_hint: float | None = None

    def __post_init__(self):
        s = abs(self.alpha0) ** 2 + abs(self.alpha1) ** 2
        if abs(s - 1.0) > 1e-9:
            raise ValueError("|alpha0|^2 + |alpha1|^2 must be 1")
        self.norm_hint = 1.0

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        w = popcount_array(np.asarray(xs, dtype=np.uint64))
        even = (w % 2 == 0)
        scale = 1.0 / math.sqrt(2**self.n)
        return np.where(even, (self.alpha0 + self.alpha1) * scale,
                        (self.alpha0 - self.alpha1) * scale)

    def descriptor(self) -> dict:
        return {"family": "ghz-x", "n": self.n,
                "alpha0": [self.alpha0.real, self.alpha0.imag],
                "alpha1": [self.alpha1.real, self.alpha1.imag]}


@dataclass
class GhzZModel(QueryModel):
    """GHZ in the computational basis: support on 0^n and 1^n only."""

    n: int
    norm_hint: float | None = None

    def __post_init__(self):
        self.norm_hint = 1.0

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        top = np.uint64((1 << self.n) - 1)
        hit = (xs == np.uint64(0)) | (xs == top)
        return np.where(hit, 1.0 / math.sqrt(2), 0.0).astype(complex)

    def descriptor(self) -> dict:
        return {"family": "ghz-z", "n": self.n}


@dataclass
class HaarDenseModel(QueryModel):
    """Dense random state: i.i.d. complex Gaussian amplitudes, normalized."""

    n: int
    seed: int = 0
    norm_hint: float | None = None
    _amps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n > MAX_EXACT_N:
            raise ValueError(f"HaarDenseModel requires n <= {MAX_EXACT_N}")
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))
        d = 1 << self.n
        v = gen.standard_normal(d) + 1j * gen.standard_normal(d)
        self._amps = v / np.linalg.norm(v)
        self.norm_hint = 1.0

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        return self._amps[np.asarray(xs, dtype=np.int64)]

    def descriptor(self) -> dict:
        return {"family": "haar", "n": self.n, "seed": self.seed}


@dataclass
class CliffordTPhaseModel(QueryModel):
    """X-basis representation of an IQP+T circuit output state.

    Psi(b) = e^{2 pi i c(b)/8}/sqrt(2^n) where the eighth-count c(b) adds 1
    per T gate acting on a set bit, -1 (mod 8) per T-dagger, and 4 per CZ
    whose two neighboring bits are both set.
    """

    n: int
    t_pattern: tuple = ()
    cz_chain: bool = True
    norm_hint: float | None = None

    def __post_init__(self):
        self.t_pattern = tuple(int(t) for t in self.t_pattern)
        if len(self.t_pattern) == 0:
            self.t_pattern = (0,) * self.n
        if len(self.t_pattern) != self.n:
            raise ValueError("t_pattern length must equal n")
        if any(t not in (-1, 0, 1) for t in self.t_pattern):
            raise ValueError("t_pattern entries must be in {-1, 0, +1}")
        self.norm_hint = 1.0

    def eighth_counts(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        c = np.zeros(xs.shape, dtype=np.int64)
        for i, t in enumerate(self.t_pattern):
            if t != 0:
                c += t * ((xs >> np.uint64(i)) & np.uint64(1)).astype(np.int64)
        if self.cz_chain:
            for i in range(self.n - 1):
                bi = (xs >> np.uint64(i)) & np.uint64(1)
                bj = (xs >> np.uint64(i + 1)) & np.uint64(1)
                c += 4 * (bi & bj).astype(np.int64)
        return np.mod(c, 8)

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        c = self.eighth_counts(xs)
        return np.exp(2j * np.pi * c / 8.0) / math.sqrt(2**self.n)

    def measurement_distribution(self, exact: bool = True) -> np.ndarray:
        d = 1 << self.n
        if self.n > MAX_EXACT_N:
            raise NeedsNormalizationError(f"dense vector infeasible at n={self.n}")
        return np.full(d, 1.0 / d)

    def descriptor(self) -> dict:
        return {"family": "clifford-t", "n": self.n,
                "t_pattern": list(self.t_pattern), "cz_chain": self.cz_chain}


@dataclass
class DenseVectorModel(QueryModel):
    """Wraps an explicit amplitude vector (used for tests and enforcement)."""

    n: int
    amps: np.ndarray
    norm_hint: float | None = None

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape != (1 << self.n,):
            raise ValueError("amplitude vector length must be 2^n")
        if self.norm_hint is None:
            self.norm_hint = float(np.sum(np.abs(self.amps) ** 2))

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        return self.amps[np.asarray(xs, dtype=np.int64)]

    def descriptor(self) -> dict:
        return {"family": "dense-vector", "n": self.n,
                "amps": [[a.real, a.imag] for a in self.amps]}


@dataclass
class ScaledModel(QueryModel):
    """A model multiplied by a global scalar; phase ratios are unchanged."""

    base: QueryModel
    scale: complex

    def __post_init__(self):
        self.n = self.base.n
        if self.base.norm_hint is not None:
            self.norm_hint = self.base.norm_hint * abs(self.scale) ** 2

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        return self.scale * self.base.query_many(xs)

    def descriptor(self) -> dict:
        return {"family": "scaled", "scale": [self.scale.real, self.scale.imag],
                "base": self.base.descriptor()}


def model_from_descriptor(desc: dict) -> QueryModel:
    """Inverse of descriptor(): reconstructs a model from its JSON dict."""
    fam = desc["family"]
    if fam == "phase":
        return PhaseStateModel(n=desc["n"], phase_source=desc["phase_source"],
                               seed=desc["seed"], pair_offset=desc.get("pair_offset", 10))
    if fam == "rotated-phase":
        return RotatedProductPhaseModel(
            n=desc["n"], seed=desc["seed"],
            rotation_mean=desc.get("rotation_mean", np.pi / 4),
            rotation_std=desc.get("rotation_std", 0.01 * np.pi))
    if fam == "ghz-x":
        a0 = complex(*desc["alpha0"])
        a1 = complex(*desc["alpha1"])
        return GhzXModel(n=desc["n"], alpha0=a0, alpha1=a1)
    if fam == "ghz-z":
        return GhzZModel(n=desc["n"])
    if fam == "haar":
        return HaarDenseModel(n=desc["n"], seed=desc["seed"])
    if fam == "clifford-t":
        return CliffordTPhaseModel(n=desc["n"], t_pattern=tuple(desc["t_pattern"]),
                                   cz_chain=desc["cz_chain"])
    if fam == "dense-vector":
        amps = np.array([complex(re, im) for re, im in desc["amps"]])
        return DenseVectorModel(n=desc["n"], amps=amps)
    if fam == "scaled":
        return ScaledModel(base=model_from_descriptor(desc["base"]),
                           scale=complex(*desc["scale"]))
    raise ValueError(f"unknown model family {fam!r}")


def model_from_json(text: str) -> QueryModel:
    return model_from_descriptor(json.loads(text))
