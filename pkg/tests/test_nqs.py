import math
import warnings

import numpy as np
import pytest

from oracles import spearman
from shadowcert import nqs
from shadowcert.bits import RandomSource
from shadowcert.estimators import dense_subsystem_purity
from shadowcert.models import PhaseStateModel
from shadowcert.states import DenseState


def popcounts(xs):
    xs = np.asarray(xs, dtype=np.uint64)
    return ((xs[:, None] >> np.arange(64, dtype=np.uint64)) & np.uint64(1)
            ).sum(axis=1).astype(float)


class ExactOracleNet:
    """Duck-typed stand-in for DualInputNet that reads the true phases of b0
    and b1 straight out of the feature columns and returns the exact Born
    probabilities."""

    def __init__(self, n):
        self.n = n

    def forward(self, x):
        d = math.pi * (x[:, 2 * self.n] - x[:, 2 * self.n + 1])
        return np.stack([(1.0 + np.cos(d)) / 2.0,
                         (1.0 + np.sin(d)) / 2.0], axis=1)


def test_feature_map_layout():
    n = 3
    model = PhaseStateModel(n=n, seed=0)
    fmap = nqs.default_feature_map(model, count=4)
    assert fmap.width == 2 * n + 2 * 4
    b0 = np.array([0b101, 0b000], dtype=np.uint64)
    i = np.array([1, 0])
    out = fmap.encode(b0, i)
    assert out.shape == (2, fmap.width)
    assert out[0, :n].tolist() == [1.0, 0.0, 1.0]
    assert out[0, n:2 * n].tolist() == [0.0, 1.0, 0.0]
    b1 = b0 | (np.uint64(1) << i.astype(np.uint64))
    for f, fn in enumerate(fmap.phase_fns):
        assert np.allclose(out[:, 2 * n + f], np.asarray(fn(b0)) / np.pi)
        assert np.allclose(out[:, 2 * n + 4 + f], np.asarray(fn(b1)) / np.pi)
    # encoding is a pure function of its inputs
    assert np.array_equal(out, fmap.encode(b0, i))
    custom = nqs.default_feature_map(model, extra_seeds=[9, 10])
    assert len(custom.phase_fns) == 2


def test_simulate_training_data_deterministic_cases():
    rng = RandomSource(1).generator()
    n, T = 4, 2000
    zero_fn = lambda xs: np.zeros(len(np.atleast_1d(xs)))
    data = nqs.simulate_training_data(zero_fn, n, T, rng)
    x_sel = data.basis == 0
    assert np.all(data.outcome[x_sel] == 1)  # d = 0: X outcome certain
    assert np.all(data.b0 & (np.uint64(1) << data.i.astype(np.uint64)) == 0)

    pi_fn = lambda xs: math.pi * popcounts(xs)  # d = -pi everywhere
    data2 = nqs.simulate_training_data(pi_fn, n, T, rng)
    assert np.all(data2.outcome[data2.basis == 0] == 0)

    half_fn = lambda xs: -math.pi / 2.0 * popcounts(xs)  # d = +pi/2
    data3 = nqs.simulate_training_data(half_fn, n, T, rng)
    assert np.all(data3.outcome[data3.basis == 1] == 1)
    assert len(data3) == T


def test_simulate_training_data_outcome_rates():
    n, T = 6, 100000
    model = PhaseStateModel(n=n, seed=5)
    data = nqs.simulate_training_data(model.phases, n, T,
                                      RandomSource(2).generator())
    b1 = data.b0 | (np.uint64(1) << data.i.astype(np.uint64))
    d = np.asarray(model.phases(data.b0)) - np.asarray(model.phases(b1))
    p = np.where(data.basis == 0, (1.0 + np.cos(d)) / 2.0,
                 (1.0 + np.sin(d)) / 2.0)
    se = math.sqrt(float(np.sum(p * (1.0 - p)))) / T
    assert abs(float(np.mean(data.outcome)) - float(np.mean(p))) <= 3.0 * se


def test_batch_log_loss_perfect_predictor():
    outcome = np.array([1, 0, 1, 1, 0])
    basis = np.array([0, 1, 0, 1, 0])
    probs = np.zeros((5, 2))
    probs[np.arange(5), basis] = outcome.astype(float)
    loss = nqs._batch_log_loss(probs, basis, outcome)
    assert abs(loss) < 1e-9


def test_gradients_match_finite_differences():
    rng = RandomSource(3).generator()
    n = 3
    fmap = nqs.default_feature_map(PhaseStateModel(n=n, seed=4), count=2)
    net = nqs.DualInputNet(fmap.width, n, rng)
    h = 1e-6
    for _ in range(100):
        x = rng.standard_normal(fmap.width)
        basis = int(rng.integers(0, 2))
        outcome = int(rng.integers(0, 2))
        _, grads = net.loss_and_grads(x, basis, outcome)
        direction = {k: rng.standard_normal(v.shape)
                     for k, v in net.params().items()}
        gv = sum(float(np.sum(grads[k] * direction[k])) for k in grads)
        base = {k: v.copy() for k, v in net.params().items()}
        net.set_params({k: base[k] + h * direction[k] for k in base})
        lp = net.loss_and_grads(x, basis, outcome)[0]
        net.set_params({k: base[k] - h * direction[k] for k in base})
        lm = net.loss_and_grads(x, basis, outcome)[0]
        net.set_params(base)
        fd = (lp - lm) / (2.0 * h)
        assert abs(gv - fd) <= 1e-5 * max(abs(gv), abs(fd), 1e-6)


def test_net_serialization_round_trip():
    rng = RandomSource(4).generator()
    net = nqs.DualInputNet(10, 3, rng)
    clone = nqs.DualInputNet.from_dict(net.to_dict())
    x = rng.standard_normal((5, 10))
    assert np.allclose(net.forward(x), clone.forward(x))


def test_training_diverged_error():
    rng = RandomSource(5).generator()
    n = 3
    fmap = nqs.default_feature_map(PhaseStateModel(n=n, seed=6), count=2)
    net = nqs.DualInputNet(fmap.width, n, rng)
    net.W1 = np.full_like(net.W1, np.nan)
    data = nqs.simulate_training_data(PhaseStateModel(n=n, seed=6).phases,
                                      n, 50, rng)
    with pytest.raises(nqs.TrainingDivergedError) as excinfo:
        nqs.train(data, net, fmap, 1, 0.05, rng)
    assert "W1" in excinfo.value.state


def test_predict_phase_diff_quadrants_and_warning():
    n = 2
    fmap = nqs.FeatureMap(n, [])
    def const_net(b2):
        return nqs.DualInputNet.from_dict({
            "W1": np.zeros((1, fmap.width)), "b1": np.zeros(1),
            "W2": np.zeros((2, 1)), "b2": np.array(b2, dtype=float)})
    b0 = np.array([0], dtype=np.uint64)
    i = np.array([1])
    assert abs(nqs.predict_phase_diff(const_net([40.0, 0.0]), fmap, b0, i)[0]
               - 0.0) < 1e-9
    assert abs(nqs.predict_phase_diff(const_net([0.0, 40.0]), fmap, b0, i)[0]
               - math.pi / 2.0) < 1e-9
    assert abs(nqs.predict_phase_diff(const_net([-40.0, 0.0]), fmap, b0, i)[0]
               - math.pi) < 1e-9
    with pytest.warns(nqs.IllConditionedAngleWarning):
        nqs.predict_phase_diff(const_net([0.0, 0.0]), fmap, b0, i)


def test_exact_oracle_net_recovers_phases_exhaustively():
    n = 8
    model = PhaseStateModel(n=n, seed=7)
    fmap = nqs.FeatureMap(n, [model.phases])
    net = ExactOracleNet(n)
    bs = np.arange(1 << n, dtype=np.uint64)
    for ref in (0, 173):
        pred = nqs.predict_phase(net, fmap, bs, ref)
        truth = (np.asarray(model.phases(bs))
                 - float(np.asarray(model.phases(
                     np.array([ref], dtype=np.uint64)))[0]))
        wrap = np.mod(pred - truth + math.pi, 2.0 * math.pi) - math.pi
        assert np.max(np.abs(wrap)) < 1e-8


def test_exact_oracle_net_evaluates_to_unit_scores():
    n = 10
    model = PhaseStateModel(n=n, seed=8)
    fmap = nqs.FeatureMap(n, [model.phases])
    net = ExactOracleNet(n)
    res = nqs.evaluate(net, fmap, model.phases, n, 2000,
                       RandomSource(9).generator(), subsystem_sizes=[3],
                       purity_shots=30000)
    assert abs(res["fidelity"] - 1.0) < 1e-9
    assert abs(res["shadow_overlap"] - 1.0) < 1e-9
    dense = dense_subsystem_purity(DenseState.from_model(model), [0, 1, 2], n)
    entry = res["purity_curve"][0]
    assert entry["size"] == 3
    assert abs(entry["purity"] - dense) <= 3.0 * entry["se"]


def test_untrained_net_scores_near_zero_fidelity():
    n = 20
    model = PhaseStateModel(n=n, seed=10)
    fmap = nqs.default_feature_map(model, count=4)
    net = nqs.DualInputNet(fmap.width, n, RandomSource(11).generator())
    res = nqs.evaluate(net, fmap, model.phases, n, 2000,
                       RandomSource(12).generator())
    assert res["fidelity"] < 0.05


def test_training_improves_validation_metrics():
    n = 8
    model = PhaseStateModel(n=n, seed=13)
    fmap = nqs.default_feature_map(model)
    rng = RandomSource(14).generator()
    data = nqs.simulate_training_data(model.phases, n, 20000, rng)
    net = nqs.DualInputNet(fmap.width, n, rng)
    net, trace = nqs.train(data, net, fmap, 5, 0.05, rng)
    assert [s.epoch for s in trace] == [1, 2, 3, 4, 5]
    assert trace[-1].val_logloss < trace[0].val_logloss
    assert trace[-1].val_shadow > trace[0].val_shadow
    assert trace[-1].val_logloss < math.log(2.0)


def test_val_shadow_tracks_true_fidelity_across_checkpoints():
    # the measurable validation shadow is a faithful proxy for the (normally
    # unknowable) true fidelity as training progresses
    n = 8
    model = PhaseStateModel(n=n, seed=15)
    fmap = nqs.default_feature_map(model)
    rng = RandomSource(16).generator()
    data = nqs.simulate_training_data(model.phases, n, 20000, rng)
    val = nqs.simulate_training_data(model.phases, n, 4000, rng)
    val_feats = fmap.encode(val.b0, val.i)
    net = nqs.DualInputNet(fmap.width, n, rng)
    feats = fmap.encode(data.b0, data.i)
    shadows, fids = [], []
    order = rng.permutation(len(data))
    chunk = 2000
    for ck in range(8):
        for t in order[ck * chunk:(ck + 1) * chunk]:
            net.sgd_step(feats[t], int(data.basis[t]), int(data.outcome[t]),
                         0.05)
        probs = net.forward(val_feats)
        shadows.append(nqs._batch_shadow_estimate(probs, val.basis,
                                                  val.outcome))
        res = nqs.evaluate(net, fmap, model.phases, n, 2000,
                           RandomSource(17 + ck).generator())
        fids.append(res["fidelity"])
    assert fids[-1] > fids[0]
    assert spearman(np.array(shadows), np.array(fids)) >= 0.9
