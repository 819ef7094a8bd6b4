"""Dual-input neural quantum state: learns phase differences of a
uniform-magnitude phase state from single-qubit X/Y measurement data.

The network sees a feature vector [b0 with bit i zeroed, one-hot(i),
F seeded random-phase features at b0 and at b1] and outputs Born
probabilities (p_x, p_y) of the post-measurement qubit. Training minimizes
the shadow-based log loss by plain SGD (batch size 1). Phase recovery uses
atan2 of the recentered outputs and path accumulation from a random
reference string; all downstream metrics are invariant to the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import normalized_shadow_overlap

EPS = 1e-10
DEFAULT_FEATURE_COUNT = 8


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


class IllConditionedAngleWarning(UserWarning):
    pass


@dataclass
class FeatureMap:
    """Deterministic encoder of (b0, i) into the network input vector."""

    n: int
    phase_fns: list  # F callables mapping a uint64 array to phases

    @property
    def width(self) -> int:
        return 2 * self.n + 2 * len(self.phase_fns)

    def encode(self, b0: np.ndarray, i: np.ndarray) -> np.ndarray:
        b0 = np.asarray(b0, dtype=np.uint64)
        i = np.asarray(i, dtype=np.int64)
        B = b0.shape[0]
        n = self.n
        out = np.zeros((B, self.width))
        for q in range(n):
            out[:, q] = ((b0 >> np.uint64(q)) & np.uint64(1)).astype(float)
        out[np.arange(B), n + i] = 1.0
        b1 = b0 | (np.uint64(1) << i.astype(np.uint64))
        # phases live in [0, 2*pi); dividing by pi puts them on the same
        # scale as the bit features, which matters for SGD trainability
        scale = 1.0 / np.pi
        for f, fn in enumerate(self.phase_fns):
            out[:, 2 * n + f] = np.asarray(fn(b0), dtype=float) * scale
            out[:, 2 * n + len(self.phase_fns) + f] = (
                np.asarray(fn(b1), dtype=float) * scale)
        return out


def default_feature_map(true_model, extra_seeds=None,
                        count: int = DEFAULT_FEATURE_COUNT) -> FeatureMap:
    """Random-phase features drawn from the same family as the target, for
    several seeds including the target's own (the trainable signal)."""
    from .models import PhaseStateModel
    n = true_model.n
    seeds = [true_model.seed + k for k in range(count)]
    if extra_seeds is not None:
        seeds = list(extra_seeds)
    fns = [PhaseStateModel(n=n, phase_source=true_model.phase_source,
                           seed=s, pair_offset=true_model.pair_offset).phases
           for s in seeds]
    return FeatureMap(n, fns)


@dataclass
class TrainingData:
    """Column-oriented training examples from r=1 protocol rounds."""

    b0: np.ndarray       # uint64, kept bit already zeroed
    i: np.ndarray        # kept-qubit index
    basis: np.ndarray    # 0 = X, 1 = Y
    outcome: np.ndarray  # 0 or 1

    def __len__(self):
        return self.b0.shape[0]


def simulate_training_data(phase_fn, n: int, T: int,
                           rng: np.random.Generator) -> TrainingData:
    """Uniform (b, i, basis); outcome Bernoulli with p = (1+cos d)/2 for X
    and (1+sin d)/2 for Y, d = phi(b0) - phi(b1)."""
    b = rng.integers(0, 1 << n, size=T).astype(np.uint64)
    i = rng.integers(0, n, size=T)
    basis = rng.integers(0, 2, size=T)
    b0 = b & ~(np.uint64(1) << i.astype(np.uint64))
    b1 = b0 | (np.uint64(1) << i.astype(np.uint64))
    d = np.asarray(phase_fn(b0), dtype=float) - np.asarray(phase_fn(b1), dtype=float)
    p = np.where(basis == 0, (1.0 + np.cos(d)) / 2.0, (1.0 + np.sin(d)) / 2.0)
    outcome = (rng.random(T) < p).astype(np.int64)
    return TrainingData(b0, i, basis, outcome)


class DualInputNet:
    """One tanh hidden layer of width 4n; two sigmoid outputs (p_x, p_y)."""

    def __init__(self, in_width: int, n: int, rng: np.random.Generator):
        h = 4 * n
        self.W1 = rng.standard_normal((h, in_width)) / math.sqrt(in_width)
        self.b1 = np.zeros(h)
        self.W2 = rng.standard_normal((2, h)) / math.sqrt(h)
        self.b2 = np.zeros(2)

    def params(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def set_params(self, p: dict) -> None:
        self.W1 = p["W1"].copy()
        self.b1 = p["b1"].copy()
        self.W2 = p["W2"].copy()
        self.b2 = p["b2"].copy()

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batched forward pass: x is (B, in_width); returns (B, 2) probs."""
        a1 = np.tanh(x @ self.W1.T + self.b1)
        z2 = a1 @ self.W2.T + self.b2
        return 1.0 / (1.0 + np.exp(-z2))

    def loss_and_grads(self, x: np.ndarray, basis: int, outcome: int) -> tuple:
        """Log loss on the output selected by `basis` plus exact gradients."""
        z1 = self.W1 @ x + self.b1
        a1 = np.tanh(z1)
        z2 = self.W2 @ a1 + self.b2
        p = 1.0 / (1.0 + np.exp(-z2))
        pk = p[basis]
        loss = -outcome * math.log(pk + EPS) - (1 - outcome) * math.log(1 - pk + EPS)
        dldp = -outcome / (pk + EPS) + (1 - outcome) / (1 - pk + EPS)
        dz2 = np.zeros(2)
        dz2[basis] = dldp * pk * (1.0 - pk)
        dW2 = np.outer(dz2, a1)
        da1 = self.W2.T @ dz2
        dz1 = da1 * (1.0 - a1 ** 2)
        dW1 = np.outer(dz1, x)
        return loss, {"W1": dW1, "b1": dz1, "W2": dW2, "b2": dz2}

    def sgd_step(self, x: np.ndarray, basis: int, outcome: int, lr: float) -> float:
        loss, g = self.loss_and_grads(x, basis, outcome)
        self.W1 -= lr * g["W1"]
        self.b1 -= lr * g["b1"]
        self.W2 -= lr * g["W2"]
        self.b2 -= lr * g["b2"]
        return loss

    def to_dict(self) -> dict:
        return {"W1": self.W1.tolist(), "b1": self.b1.tolist(),
                "W2": self.W2.tolist(), "b2": self.b2.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "DualInputNet":
        net = DualInputNet.__new__(DualInputNet)
        net.W1 = np.array(d["W1"])
        net.b1 = np.array(d["b1"])
        net.W2 = np.array(d["W2"])
        net.b2 = np.array(d["b2"])
        return net


def _batch_log_loss(probs: np.ndarray, basis: np.ndarray,
                    outcome: np.ndarray) -> float:
    pk = probs[np.arange(len(basis)), basis]
    o = outcome.astype(float)
    return float(np.mean(-o * np.log(pk + EPS) - (1 - o) * np.log(1 - pk + EPS)))


def _batch_shadow_estimate(probs: np.ndarray, basis: np.ndarray,
                           outcome: np.ndarray) -> float:
    """Protocol-consistent shadow overlap from predictions and outcomes:
    omega = 3 |<s|Psi_hat>|^2 - 1 per example, plus the constant 1/2 that a
    Z-basis round would contribute for uniform-magnitude states."""
    dpred = np.arctan2(2.0 * probs[:, 1] - 1.0, 2.0 * probs[:, 0] - 1.0)
    sgn = 2.0 * outcome.astype(float) - 1.0
    trig = np.where(basis == 0, np.cos(dpred), np.sin(dpred))
    omega = 3.0 * (1.0 + sgn * trig) / 2.0 - 1.0
    parts = []
    for bval in (0, 1):
        sel = basis == bval
        parts.append(float(np.mean(omega[sel])) if sel.any() else 0.5)
    return (parts[0] + parts[1] + 0.5) / 3.0


@dataclass
class EpochStats:
    epoch: int
    train_logloss: float
    val_logloss: float
    train_shadow: float
    val_shadow: float


def train(data: TrainingData, net: DualInputNet, fmap: FeatureMap,
          epochs: int, lr: float, rng: np.random.Generator,
          val_frac: float = 0.1) -> tuple:
    """SGD training with a validation split; returns (best net, trace)."""
    T = len(data)
    perm = rng.permutation(T)
    n_val = max(1, int(round(val_frac * T)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    feats = fmap.encode(data.b0, data.i)
    trace = []
    best = net.params()
    best = {k: v.copy() for k, v in best.items()}
    best_val = np.inf
    for epoch in range(1, epochs + 1):
        order = rng.permutation(train_idx)
        running = 0.0
        for t in order:
            loss = net.sgd_step(feats[t], int(data.basis[t]),
                                int(data.outcome[t]), lr)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}",
                    {k: float(np.linalg.norm(v)) for k, v in net.params().items()})
            running += loss
        p_tr = net.forward(feats[train_idx])
        p_va = net.forward(feats[val_idx])
        stats = EpochStats(
            epoch,
            _batch_log_loss(p_tr, data.basis[train_idx], data.outcome[train_idx]),
            _batch_log_loss(p_va, data.basis[val_idx], data.outcome[val_idx]),
            _batch_shadow_estimate(p_tr, data.basis[train_idx],
                                   data.outcome[train_idx]),
            _batch_shadow_estimate(p_va, data.basis[val_idx],
                                   data.outcome[val_idx]))
        trace.append(stats)
        if stats.val_logloss < best_val:
            best_val = stats.val_logloss
            best = {k: v.copy() for k, v in net.params().items()}
    net.set_params(best)
    return net, trace


def predict_phase_diff(net: DualInputNet, fmap: FeatureMap, b0: np.ndarray,
                       i: np.ndarray) -> np.ndarray:
    """phi(b0) - phi(b1) from the two outputs: atan2(2 p_y - 1, 2 p_x - 1)."""
    probs = net.forward(fmap.encode(b0, i))
    cx = 2.0 * probs[:, 0] - 1.0
    sy = 2.0 * probs[:, 1] - 1.0
    ill = (np.abs(cx) < 1e-6) & (np.abs(sy) < 1e-6)
    if ill.any():
        import warnings
        warnings.warn("recentered outputs near zero: angle ill-conditioned",
                      IllConditionedAngleWarning)
    return np.arctan2(sy, cx)


def predict_phase(net: DualInputNet, fmap: FeatureMap, bs: np.ndarray,
                  reference: int) -> np.ndarray:
    """Phases of the strings `bs` relative to the reference string, by
    accumulating predicted differences along the ascending bit-flip path."""
    bs = np.asarray(bs, dtype=np.uint64)
    n = fmap.n
    ref = np.uint64(reference)
    phase = np.zeros(bs.shape[0])
    for j in range(n):
        differ = ((bs ^ ref) >> np.uint64(j)) & np.uint64(1) == 1
        if not differ.any():
            continue
        mask_lt = np.uint64((1 << j) - 1)
        cur = (bs[differ] & mask_lt) | (ref & ~mask_lt)
        b0 = cur & ~np.uint64(1 << j)
        d = predict_phase_diff(net, fmap, b0,
                               np.full(int(differ.sum()), j, dtype=np.int64))
        # moving from cur to cur^e_j: phi gains -(phi(cur)-phi(next))
        ref_bit_set = (ref >> np.uint64(j)) & np.uint64(1) == 1
        sign = -1.0 if not ref_bit_set else 1.0
        # cur has bit j equal to the reference bit
        phase[differ] += sign * d
    return phase


def evaluate(net: DualInputNet, fmap: FeatureMap, true_phase_fn, n: int,
             test_T: int, rng: np.random.Generator,
             subsystem_sizes=None, purity_shots: int = 30000) -> dict:
    """Held-out fidelity, normalized shadow overlap, and purity curve."""
    from .estimators import purity as purity_est
    ref = int(rng.integers(0, 1 << n))
    d = 2.0 ** n

    def pred_fn(xs):
        return predict_phase(net, fmap, xs, ref)

    xs = rng.integers(0, 1 << n, size=test_T).astype(np.uint64)
    diff = pred_fn(xs) - np.asarray(true_phase_fn(xs), dtype=float)
    ref_true = float(np.asarray(true_phase_fn(
        np.array([ref], dtype=np.uint64)), dtype=float)[0])
    fidelity = float(np.abs(np.mean(np.exp(1j * (diff + ref_true)))) ** 2)

    b = rng.integers(0, 1 << n, size=test_T).astype(np.uint64)
    i = rng.integers(0, n, size=test_T)
    b0 = b & ~(np.uint64(1) << i.astype(np.uint64))
    b1 = b0 | (np.uint64(1) << i.astype(np.uint64))
    dp = predict_phase_diff(net, fmap, b0, i)
    dt = (np.asarray(true_phase_fn(b0), dtype=float)
          - np.asarray(true_phase_fn(b1), dtype=float))
    local_fid = (1.0 + np.cos(dp - dt)) / 2.0
    shadow = float(1.0 * (d - 1.0) / d * 2.0 * (np.mean(local_fid) - 0.5) + 1.0 / d)

    purities = []
    if subsystem_sizes:
        for size in subsystem_sizes:
            res = purity_est(None, list(range(size)), n, purity_shots, rng,
                             phase_fn=pred_fn)
            purities.append({"size": size, "purity": res["purity"],
                             "se": res["se"]})
    return {"fidelity": fidelity, "shadow_overlap": shadow,
            "purity_curve": purities}
