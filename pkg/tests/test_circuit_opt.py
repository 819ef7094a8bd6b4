import math

import numpy as np
import pytest

from oracles import dense_iqp_t_state
from shadowcert import chains, circuit_opt
from shadowcert.bits import RandomSource
from shadowcert.models import CliffordTPhaseModel


def candidate_dense_state(cand):
    """Dense oracle: apply T gates t_counts[i] times and CZs per parity to the
    uniform superposition, gate by gate."""
    from oracles import T_GATE, apply_1q, apply_cz
    n = cand.n
    psi = np.full(1 << n, 1.0 / math.sqrt(2 ** n), dtype=complex)
    for q in range(n):
        for _ in range(int(cand.t_counts[q]) % 8):
            psi = apply_1q(psi, T_GATE, q, n)
    for q in range(n - 1):
        if cand.cz_parity[q] % 2:
            psi = apply_cz(psi, q, q + 1, n)
    return psi


def test_target_counts_and_phase():
    n = 4
    tgt_model = CliffordTPhaseModel(n=n, t_pattern=(1, -1, 0, 1), cz_chain=True)
    tgt = circuit_opt.target_counts(tgt_model)
    assert tgt.t_counts.tolist() == [1, 7, 0, 1]
    assert tgt.cz_parity.tolist() == [1, 1, 1]
    assert circuit_opt.target_phase(tgt_model, 0) == 0
    only_cz = CliffordTPhaseModel(n=n, t_pattern=(0,) * n, cz_chain=True)
    assert circuit_opt.target_phase(only_cz, 0b0011) == 4
    one_t = CliffordTPhaseModel(n=n, t_pattern=(1, 0, 0, 0), cz_chain=False)
    assert circuit_opt.target_phase(one_t, 0b0001) == 1


def test_action_space_and_apply():
    n = 5
    acts = circuit_opt.action_space(n)
    assert len(acts) == 3 * n
    assert acts[-1].kind == "noop"
    cand = circuit_opt.CandidateState(n)
    c1 = circuit_opt.apply_action(cand, circuit_opt.Action("HTH", 2))
    assert c1.t_counts.tolist() == [0, 0, 1, 0, 0]
    c2 = circuit_opt.apply_action(c1, circuit_opt.Action("HTdgH", 2))
    assert c2.t_counts.tolist() == [0, 0, 0, 0, 0]
    c3 = circuit_opt.apply_action(cand, circuit_opt.Action("HCZH", 1))
    assert c3.cz_parity.tolist() == [0, 1, 0, 0]
    c4 = circuit_opt.apply_action(c3, circuit_opt.Action("HCZH", 1))
    assert c4.cz_parity.tolist() == [0, 0, 0, 0]
    assert cand.t_counts.tolist() == [0] * n  # apply_action copies
    noop = circuit_opt.apply_action(cand, circuit_opt.Action("noop"))
    assert noop.t_counts.tolist() == cand.t_counts.tolist()
    with pytest.raises(ValueError):
        circuit_opt.apply_action(cand, circuit_opt.Action("bogus", 0))


def test_score_fidelity_matches_dense_oracle():
    n = 6
    rng = np.random.default_rng(0)
    tgt_model = CliffordTPhaseModel(
        n=n, t_pattern=tuple(int(v) for v in rng.integers(-1, 2, size=n)),
        cz_chain=True)
    tgt = circuit_opt.target_counts(tgt_model)
    psi_t = dense_iqp_t_state(n, tgt_model.t_pattern, True)
    for _ in range(10):
        cand = circuit_opt.CandidateState(
            n, rng.integers(0, 8, size=n), rng.integers(0, 2, size=n - 1))
        got = circuit_opt.score_fidelity(cand, tgt, exact=True)
        psi_c = candidate_dense_state(cand)
        expect = abs(np.vdot(psi_t, psi_c)) ** 2
        assert abs(got - expect) < 1e-9
    exact_cand = circuit_opt.target_counts(tgt_model)
    assert abs(circuit_opt.score_fidelity(exact_cand, tgt, exact=True) - 1.0) < 1e-12


def test_score_fidelity_plateau_at_large_n():
    n = 20
    rng = RandomSource(1).generator()
    t_pattern = tuple(1 if k % 2 == 0 else -1 for k in range(n))
    tgt = circuit_opt.target_counts(
        CliffordTPhaseModel(n=n, t_pattern=t_pattern, cz_chain=True))
    empty = circuit_opt.CandidateState(n)
    assert circuit_opt.score_fidelity(empty, tgt, T=10000, rng=rng) < 0.05


def test_score_shadow_matches_dense_observable():
    n = 6
    rng = np.random.default_rng(1)
    tgt_model = CliffordTPhaseModel(
        n=n, t_pattern=tuple(int(v) for v in rng.integers(-1, 2, size=n)),
        cz_chain=True)
    tgt = circuit_opt.target_counts(tgt_model)
    L = chains.build_observable_L(tgt_model, 1, full=True)
    for _ in range(5):
        cand = circuit_opt.CandidateState(
            n, rng.integers(0, 8, size=n), rng.integers(0, 2, size=n - 1))
        psi_c = candidate_dense_state(cand)
        expect = float(np.real(np.vdot(psi_c, L @ psi_c)))
        got = circuit_opt.score_shadow(cand, tgt, exact=True)
        assert abs(got - expect) < 1e-9
    assert abs(circuit_opt.score_shadow(circuit_opt.target_counts(tgt_model),
                                        tgt, exact=True) - 1.0) < 1e-12


def test_score_shadow_single_wrong_t():
    # one local T off by one eighth costs (1/n)(1 - cos^2(pi/8)) exactly
    n = 10
    tgt_model = CliffordTPhaseModel(n=n, t_pattern=(0,) * n, cz_chain=False)
    tgt = circuit_opt.target_counts(tgt_model)
    cand = circuit_opt.apply_action(circuit_opt.CandidateState(n),
                                    circuit_opt.Action("HTH", 4))
    got = circuit_opt.score_shadow(cand, tgt, exact=True)
    expect = 1.0 - (1.0 - math.cos(math.pi / 8.0) ** 2) / n
    assert abs(got - expect) < 1e-12


def test_scores_invariant_under_inverse_pair():
    n = 5
    rng = np.random.default_rng(2)
    tgt = circuit_opt.target_counts(CliffordTPhaseModel(
        n=n, t_pattern=(1, 0, -1, 0, 1), cz_chain=True))
    cand = circuit_opt.CandidateState(
        n, rng.integers(0, 8, size=n), rng.integers(0, 2, size=n - 1))
    both = circuit_opt.apply_action(
        circuit_opt.apply_action(cand, circuit_opt.Action("HTH", 3)),
        circuit_opt.Action("HTdgH", 3))
    for score in (circuit_opt.score_fidelity, circuit_opt.score_shadow):
        assert abs(score(cand, tgt, exact=True)
                   - score(both, tgt, exact=True)) < 1e-12


def test_greedy_identity_target_converges_immediately():
    n = 4
    tgt_model = CliffordTPhaseModel(n=n, t_pattern=(0,) * n, cz_chain=False)
    cand, trace = circuit_opt.greedy_optimize(tgt_model, 10, "shadow",
                                              RandomSource(2).generator())
    assert trace[0].fidelity == 1.0
    assert trace[-1].action == "noop"
    assert len(trace) <= 3
    assert np.all(cand.t_counts == 0) and np.all(cand.cz_parity == 0)


def test_greedy_recovers_small_target():
    n = 6
    tgt_model = CliffordTPhaseModel(n=n, t_pattern=(1, -1, 0, 1, 0, -1),
                                    cz_chain=True)
    cand, trace = circuit_opt.greedy_optimize(tgt_model, 60, "shadow",
                                              RandomSource(3).generator())
    tgt = circuit_opt.target_counts(tgt_model)
    assert np.array_equal(cand.t_counts, tgt.t_counts)
    assert np.array_equal(cand.cz_parity, tgt.cz_parity)
    assert trace[-1].fidelity == 1.0
    # the shadow-objective trace is non-decreasing up to MC noise
    shadows = [r.shadow for r in trace]
    diffs = np.diff(shadows)
    assert np.all(diffs >= -0.02)
    with pytest.raises(ValueError):
        circuit_opt.greedy_optimize(tgt_model, 5, "bogus",
                                    RandomSource(0).generator())
