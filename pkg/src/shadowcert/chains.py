"""Hypercube walk construction, spectra, MCMC, escape checks, congestion.

The walk over the measurement distribution pi moves between strings within
Hamming distance m (or exactly m in exact-jump mode). Edge weights
W(x,y) = (1/N) pi(x)pi(y)/(pi(x)+pi(y)) with the matching diagonal make pi
stationary; P = S^{-1} W is the transition matrix and the phase-dressed
L = F S^{1/2} P S^{-1/2} F^dag is the certification observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .bits import popcount_array, subset_count

SPECTRAL_DEGENERACY_TOL = 1e-9


class EmptySupportError(ValueError):
    pass


class ConstructionFailedError(RuntimeError):
    pass


def jump_masks(n: int, m: int, exact_jump: bool = False) -> np.ndarray:
    """Bitmasks of all admissible jumps (Hamming weight in [1,m] or == m)."""
    sizes = [m] if exact_jump else list(range(1, m + 1))
    out = []
    for r in sizes:
        for bits in combinations(range(n), r):
            mask = 0
            for b in bits:
                mask |= 1 << b
            out.append(mask)
    return np.array(sorted(out), dtype=np.uint64)


@dataclass
class Walk:
    """A walk restricted to the support S of pi, with dense W and P."""

    n: int
    m: int
    exact_jump: bool
    support: np.ndarray   # ascending full-space indices of S
    pi: np.ndarray        # stationary probabilities on S (sum 1)
    W: np.ndarray
    P: np.ndarray
    N: int

    def descriptor(self) -> dict:
        return {"n": self.n, "m": self.m, "exact_jump": self.exact_jump,
                "support_size": int(len(self.support)), "N": self.N}


def build_walk(pi_full: np.ndarray, n: int, m: int,
               exact_jump: bool = False) -> Walk:
    """Construct W and P from a full-space probability vector."""
    pi_full = np.asarray(pi_full, dtype=float)
    support = np.where(pi_full > 0)[0]
    if len(support) == 0:
        raise EmptySupportError("pi has empty support")
    s = len(support)
    pos = -np.ones(1 << n, dtype=np.int64)
    pos[support] = np.arange(s)
    pi = pi_full[support]
    N = subset_count(n, m, exact_jump)
    W = np.zeros((s, s))
    diag = np.zeros(s)
    for mask in jump_masks(n, m, exact_jump):
        y = support ^ int(mask)
        py = pi_full[y]
        denom = pi + py
        # off-support neighbors only feed the diagonal (term pi(x)^2/pi(x))
        diag += pi * pi / denom / N
        j = pos[y]
        on = j >= 0
        W[np.arange(s)[on], j[on]] = (pi[on] * py[on] / denom[on]) / N
    W[np.arange(s), np.arange(s)] = diag
    P = W / pi[:, None]
    return Walk(n, m, exact_jump, support, pi, W, P, N)


def walk_from_model(model, m: int, exact_jump: bool = False) -> Walk:
    return build_walk(model.measurement_distribution(exact=True), model.n, m,
                      exact_jump=exact_jump)


def symmetrized(walk: Walk) -> np.ndarray:
    """S^{-1/2} W S^{-1/2}: symmetric, similar to P (same spectrum)."""
    rt = np.sqrt(walk.pi)
    return walk.W / rt[:, None] / rt[None, :]


def build_observable_L(model, m: int, exact_jump: bool = False,
                       full: bool = False) -> np.ndarray:
    """L = F S^{1/2} P S^{-1/2} F^dag on the support of pi.

    With full=True the operator is embedded into the 2^n space with zero
    rows/columns off support, matching the protocol-defined observable.
    """
    walk = walk_from_model(model, m, exact_jump=exact_jump)
    amps = model.query_many(walk.support.astype(np.uint64))
    mags = np.abs(amps)
    if np.any(mags == 0):
        raise EmptySupportError("support mismatch between pi and model")
    phase = amps / mags
    L = symmetrized(walk) * phase[:, None] * phase.conj()[None, :]
    if not full:
        return L
    d = 1 << model.n
    Lf = np.zeros((d, d), dtype=complex)
    Lf[np.ix_(walk.support, walk.support)] = L
    return Lf


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray  # descending
    gap: float
    tau: float | None        # None when the top eigenvalue is degenerate
    degeneracy: int
    support_size: int

    def to_dict(self) -> dict:
        return {"eigenvalues": [float(v) for v in self.eigenvalues],
                "gap": self.gap, "tau": self.tau,
                "degeneracy": self.degeneracy,
                "support_size": self.support_size}


def spectral_report(walk: Walk) -> SpectralReport:
    vals = np.linalg.eigvalsh(symmetrized(walk))[::-1]
    if len(vals) == 1:
        # singleton support: gap = 1, tau = 1 by convention
        return SpectralReport(vals, 1.0, 1.0, 1, 1)
    gap = float(vals[0] - vals[1])
    degeneracy = int(np.sum(vals >= vals[0] - SPECTRAL_DEGENERACY_TOL))
    tau = 1.0 / gap if gap >= SPECTRAL_DEGENERACY_TOL else None
    return SpectralReport(vals, gap, tau, degeneracy, len(vals))


def mcmc_sample(model, m: int, steps: int, rng: np.random.Generator,
                x_init: int = 0, exact_jump: bool = False) -> int:
    """One chain trajectory of the walk, driven by |Psi|^2 ratios only."""
    masks = jump_masks(model.n, m, exact_jump)
    x = int(x_init)
    px = abs(model.query(x)) ** 2
    if steps <= 0:
        return x
    proposals = rng.integers(0, len(masks), size=steps)
    us = rng.random(steps)
    for t in range(steps):
        y = x ^ int(masks[proposals[t]])
        py = abs(model.query(y)) ** 2
        tot = px + py
        if tot > 0 and us[t] < py / tot:
            x, px = y, py
    return x


def porter_thomas(n: int, rng: np.random.Generator) -> tuple:
    """i.i.d. Exp(1) weights z(x) and the normalized pi = z / sum z."""
    if n > 20:
        raise ValueError("n > 20 materialized weight vectors unsupported")
    z = rng.exponential(1.0, size=1 << n)
    return z, z / z.sum()


# ---------------------------------------------------------------------------
# canonical path construction (shared by congestion and escape checking)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _flip_sequence(n: int, u: int, i: int) -> tuple:
    """Bit-flip order of the canonical construction from s toward t = s^u:
    flip bit i first, then sweep positions i+1..n-1, 0..i flipping wherever
    the current string still differs from t."""
    seq = [i]
    order = [(i + 1 + j) % n for j in range(n)]  # i+1, ..., wrapping to i
    for j in order:
        if j == i:
            if not (u >> i) & 1:
                seq.append(i)  # undo the initial flip
        elif (u >> j) & 1:
            seq.append(j)
    return tuple(seq)


def construction_path(s: int, t: int, i: int, n: int) -> list:
    """Vertex sequence of the i-th canonical candidate path from s to t."""
    u = s ^ t
    path = [s]
    x = s
    for j in _flip_sequence(n, u, i):
        x ^= 1 << j
        path.append(x)
    return path


@lru_cache(maxsize=None)
def _prefix_masks(n: int, u: int, i: int) -> tuple:
    """Cumulative XOR masks along the construction path for diff u, param i."""
    cum = [0]
    acc = 0
    for j in _flip_sequence(n, u, i):
        acc ^= 1 << j
        cum.append(acc)
    return tuple(cum)


def _simplify(path: list) -> list:
    """Remove loops so the path is simple (keeps the first visit)."""
    out = []
    seen = {}
    for v in path:
        if v in seen:
            del out[seen[v] + 1:]
            for w in list(seen):
                if seen[w] > seen[v]:
                    del seen[w]
        else:
            seen[v] = len(out)
            out.append(v)
    return out


@dataclass
class EscapeParams:
    """Parameters of the local escape property.

    A vertex is good when c_l 2^{-n} <= pi(x) <= c_u 2^{-n}. nu defaults to
    2^{-n} at the point of use.
    """

    alpha: float = 0.5
    c_u_prime: float = 5.0
    c_u: float = 5.0
    c_l: float = 1.0 / 11.0
    nu: float | None = None

    def __post_init__(self):
        if not (self.c_l < 1.0 < self.c_u):
            raise ValueError("need c_l < 1 < c_u")


class EscapeChecker:
    """Per-query checks of the local escape property against a fixed pi."""

    def __init__(self, pi_full: np.ndarray, n: int, params: EscapeParams):
        self.n = n
        self.params = params
        self.pi = np.asarray(pi_full, dtype=float)
        if abs(self.pi.sum() - 1.0) > 1e-9:
            raise ValueError("pi must be normalized (needs-normalization)")
        base = 2.0 ** (-n)
        self.good = (self.pi >= params.c_l * base) & (self.pi <= params.c_u * base)
        self.all_good = bool(self.good.all())
        # good-neighbor counts for condition (1)
        counts = np.zeros(1 << n, dtype=np.int64)
        idx = np.arange(1 << n)
        for j in range(n):
            counts += self.good[idx ^ (1 << j)]
        self.good_neighbor_counts = counts

    def _pairs_through(self, x: int):
        """All ordered pairs (s, t) of good vertices within distance 3 such
        that some canonical candidate path from s to t passes through x."""
        n = self.n
        found = set()
        for dist in (1, 2, 3):
            for bits in combinations(range(n), dist):
                u = 0
                for b in bits:
                    u |= 1 << b
                for i in range(n):
                    for cum in _prefix_masks(n, u, i):
                        s = x ^ cum
                        t = s ^ u
                        if (s, t) not in found and self.good[s] and self.good[t]:
                            found.add((s, t))
        return found

    def _count_all_good_paths(self, s: int, t: int, need: float) -> bool:
        n = self.n
        count = 0
        for i in range(n):
            ok = True
            for v in construction_path(s, t, i, n):
                if not self.good[v]:
                    ok = False
                    break
            if ok:
                count += 1
                if count >= need - 1e-12:
                    return True
        return False

    def check(self, x: int) -> tuple:
        """Returns (passes, violated-condition tag or None)."""
        n = self.n
        p = self.params
        if self.pi[x] > p.c_u_prime * 2.0 ** (-n) + 1e-15:
            return False, "condition-0"
        need = p.alpha * n
        if not self.all_good:
            for j in range(n):
                if self.good_neighbor_counts[x ^ (1 << j)] < need - 1e-12:
                    return False, "condition-1"
            for s, t in self._pairs_through(x):
                if not self._count_all_good_paths(s, t, need):
                    return False, "condition-2"
        return True, None


class EnforcedModel:
    """Wraps a model so queries failing the escape checks return sqrt(nu)
    magnitude (phase retained from the base model when nonzero)."""

    def __init__(self, base, params: EscapeParams | None = None):
        from .models import QueryModel  # noqa: F401  (interface reference)
        self.base = base
        self.n = base.n
        self.params = params if params is not None else EscapeParams()
        nu = self.params.nu if self.params.nu is not None else 2.0 ** (-self.n)
        self._nu = nu
        amps = base.query_many(np.arange(1 << self.n, dtype=np.uint64))
        total = float(np.sum(np.abs(amps) ** 2))
        if total <= 0:
            raise EmptySupportError("base model has empty support")
        self._checker = EscapeChecker(np.abs(amps) ** 2 / total, self.n, self.params)
        self.norm_hint = None

    def check(self, x: int) -> tuple:
        return self._checker.check(int(x))

    def query(self, x: int) -> complex:
        return complex(self.query_many(np.array([x], dtype=np.uint64))[0])

    def query_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        out = self.base.query_many(xs).astype(complex).copy()
        root_nu = math.sqrt(self._nu)
        for k, x in enumerate(xs):
            ok, _ = self._checker.check(int(x))
            if not ok:
                a = out[k]
                out[k] = root_nu * (a / abs(a)) if a != 0 else root_nu
        return out

    def descriptor(self) -> dict:
        return {"family": "enforced", "base": self.base.descriptor()}


def check_local_escape(pi_full: np.ndarray, n: int, x: int,
                       params: EscapeParams | None = None) -> tuple:
    params = params if params is not None else EscapeParams()
    return EscapeChecker(pi_full, n, params).check(x)


def enforce_escape(model, params: EscapeParams | None = None) -> EnforcedModel:
    return EnforcedModel(model, params)


# ---------------------------------------------------------------------------
# canonical-path congestion (warm-up estimator, level-1 walk)
# ---------------------------------------------------------------------------

def _designated_good_neighbor(x: int, bad: np.ndarray, n: int) -> int:
    for j in range(n):
        y = x ^ (1 << j)
        if not bad[y]:
            return y
    raise ConstructionFailedError(f"bad vertex {x} has no good neighbor")


def _best_core_path(s: int, t: int, bad: np.ndarray, n: int) -> list:
    """Among the n candidate paths from s to t, the one with the fewest bad
    internal vertices (ties to the lowest parameter index)."""
    best = None
    best_bad = None
    for i in range(n):
        p = construction_path(s, t, i, n)
        nb = sum(1 for v in p[1:-1] if bad[v])
        if best is None or nb < best_bad:
            best, best_bad = p, nb
            if nb == 0:
                break
    return best


def canonical_path(x: int, y: int, bad: np.ndarray, n: int,
                   cache: dict | None = None) -> list:
    """Simple path from x to y: bad endpoints detour through their designated
    good neighbor, then a good-good construction path connects the cores."""
    xg = x if not bad[x] else _designated_good_neighbor(x, bad, n)
    yg = y if not bad[y] else _designated_good_neighbor(y, bad, n)
    prefix = [x] if xg != x else []
    suffix = [y] if yg != y else []
    if xg == yg:
        core = [xg]
    else:
        key = (xg, yg)
        core = None
        if cache is not None:
            core = cache.get(key)
            if core is None:
                rev = cache.get((yg, xg))
                if rev is not None:
                    core = rev[::-1]
        if core is None:
            core = _best_core_path(xg, yg, bad, n)
            if cache is not None:
                cache[key] = core
    return _simplify(prefix + core + suffix)


def congestion_bound(z_weights: np.ndarray, n: int, m: int = 1) -> dict:
    """Exact max-over-edges congestion of the canonical path system.

    rho(Gamma) = max_e (1/Q(e)) * sum_{paths through e} pi(x) pi(y) |path|,
    with Q(e) = pi(u) P(u, v) for the level-m=1 walk. Paths are built for
    unordered pairs and traversed in both directions.
    """
    if m != 1:
        raise ValueError("congestion estimator is defined for the level-1 walk")
    z = np.asarray(z_weights, dtype=float)
    d = 1 << n
    if z.shape != (d,):
        raise ValueError("weight vector length must be 2^n")
    pi = z / z.sum()
    bad = z <= 1.0 / (64.0 * n)
    load = np.zeros((d, n))  # undirected edge {u, u^e_j} stored at (min, j)
    cache: dict = {}
    for x in range(d):
        for y in range(x + 1, d):
            path = canonical_path(x, y, bad, n, cache)
            w = pi[x] * pi[y] * (len(path) - 1)
            for a, b in zip(path, path[1:]):
                u = min(a, b)
                j = (a ^ b).bit_length() - 1
                load[u, j] += w
    # Q(e) = (1/n) pi(u) pi(v) / (pi(u) + pi(v)), symmetric in (u, v)
    idx = np.arange(d)
    rho = 0.0
    worst = None
    for j in range(n):
        v = idx ^ (1 << j)
        q = (pi * pi[v]) / (pi + pi[v]) / n
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(load[:, j] > 0, load[:, j] / q, 0.0)
        k = int(np.argmax(ratio))
        if ratio[k] > rho:
            rho = float(ratio[k])
            worst = (int(k), int(k ^ (1 << j)))
    return {"rho": rho, "worst_edge": worst, "bad_count": int(bad.sum()),
            "load": load, "pi": pi, "bad": bad}
