import numpy as np
import pytest

from cefr.basis import BasisSpec
from cefr.errors import ConfigError, DataError, NumericError
from cefr.modelselect import (POSITIVITY_REFUSAL, Candidate, cv_criterion,
                              select_model)
from cefr.numerics import SeededRng


def test_cv_criterion_zero_predictor():
    assert cv_criterion(np.zeros(5), np.ones(5), np.ones(5)) == 0.0


def test_cv_criterion_hand_case():
    # u=(2,2), t=(1,1), theta=(2,2): 4 - 8 = -4
    assert cv_criterion(np.array([2.0, 2.0]), np.array([2.0, 2.0]),
                        np.array([1.0, 1.0])) == -4.0


def test_cv_criterion_constant_predictor_quadratic():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(100) + 2.0
    t = np.abs(rng.standard_normal(100)) + 1.0
    for c in (-1.0, 0.5, 2.0):
        got = cv_criterion(np.full(100, c), u, t)
        assert abs(got - (c ** 2 * t.mean() - 2 * c * u.mean())) < 1e-12
    # the minimizing constant is mean(u)/mean(t)
    cs = np.linspace(-3, 3, 601)
    scores = [cv_criterion(np.full(100, c), u, t) for c in cs]
    assert abs(cs[int(np.argmin(scores))] - u.mean() / t.mean()) < 0.02


def test_cv_criterion_difference_identity():
    rng = np.random.default_rng(1)
    u = rng.standard_normal(50)
    t = rng.standard_normal(50)
    a = rng.standard_normal(50)
    b = rng.standard_normal(50)
    lhs = cv_criterion(a, u, t) - cv_criterion(b, u, t)
    rhs = np.mean(t * (a ** 2 - b ** 2)) - 2 * np.mean(u * (a - b))
    assert abs(lhs - rhs) < 1e-12


def test_cv_criterion_rejects_empty_and_mismatch():
    with pytest.raises(DataError):
        cv_criterion(np.empty(0), np.empty(0), np.empty(0))
    with pytest.raises(ValueError):
        cv_criterion(np.ones(3), np.ones(2), np.ones(3))


def test_rank_preservation_under_positive_denominator():
    # three predictors with pointwise-dominated errors keep their order
    # under the criterion computed on a fresh large sample
    for instance in range(20):
        rng = SeededRng(100 + instance)
        n = 100_000
        x = rng.normal(n)
        a0, a1 = 0.5 + 0.02 * instance, 0.3
        zeta = 1.0 + 0.8 / (1.0 + np.exp(-x))
        theta = a0 + a1 * np.sin(x)
        u = zeta * theta + rng.normal(n)
        t = zeta + rng.normal(n)
        preds = [theta, theta + 0.3, theta + 0.8]
        scores = [cv_criterion(p, u, t) for p in preds]
        assert scores[0] < scores[1] < scores[2]


def make_joint_data(seed=0, n=3000):
    rng = SeededRng(seed)
    v = rng.normal(n)[:, None]
    zeta = 1.2 + 0.5 / (1.0 + np.exp(-v[:, 0]))
    theta = 0.3 + 0.4 * v[:, 0] ** 2
    u = zeta * theta + rng.normal(n)
    t = zeta + 0.5 * rng.normal(n)
    return v, u, t


def test_selects_quadratic_over_linear_on_curved_target():
    v, u, t = make_joint_data()
    cands = [Candidate(BasisSpec(1, 1), 0.01), Candidate(BasisSpec(1, 2), 0.01)]
    res = select_model(cands, u, t, v, folds=5, rng=SeededRng(1),
                       denominator_positive=True)
    assert res.chosen.basis.max_degree == 2
    assert len(res.scores) == 2


def test_single_candidate_returned_unconditionally():
    v, u, t = make_joint_data(1, 200)
    cand = Candidate(BasisSpec(1, 1), 0.5)
    res = select_model([cand], u, t, v, folds=4, rng=SeededRng(2),
                       denominator_positive=True)
    assert res.chosen == cand


def test_tie_break_smallest_k_then_lambda():
    # a zero numerator signal makes every candidate score exactly zero,
    # so the (k, lambda) order decides
    rng = SeededRng(3)
    v = rng.normal(500)[:, None]
    u = np.zeros(500)
    t = np.abs(rng.normal(500)) + 0.5
    cands = [Candidate(BasisSpec(1, 3), 0.05), Candidate(BasisSpec(1, 2), 0.1),
             Candidate(BasisSpec(1, 2), 0.05)]
    res = select_model(cands, u, t, v, folds=4, rng=SeededRng(4),
                       denominator_positive=True)
    assert res.chosen.basis.max_degree == 2 and res.chosen.lam == 0.05


def test_positivity_gate_refuses():
    v, u, t = make_joint_data(3, 100)
    with pytest.raises(ConfigError, match="positive"):
        select_model([Candidate(BasisSpec(1, 1), 0.0)], u, t, v, folds=4,
                     rng=SeededRng(4), denominator_positive=False)
    assert "fix (k, lambda) manually" in POSITIVITY_REFUSAL


def test_degenerate_candidate_excluded_with_warning():
    rng = SeededRng(5)
    n = 200
    v = rng.normal(n)[:, None]
    u = rng.normal(n)
    t = np.zeros(n)  # singular weighted Gram at lam=0
    cands = [Candidate(BasisSpec(1, 1), 0.0), Candidate(BasisSpec(1, 1), 0.1)]
    with pytest.warns(UserWarning, match="excluded"):
        res = select_model(cands, u, t, v, folds=4, rng=SeededRng(6),
                           denominator_positive=True)
    assert res.chosen.lam == 0.1
    assert res.scores[0]["excluded"]


def test_all_candidates_excluded_raises():
    rng = SeededRng(7)
    n = 100
    v = rng.normal(n)[:, None]
    with pytest.warns(UserWarning):
        with pytest.raises(NumericError, match="excluded"):
            select_model([Candidate(BasisSpec(1, 1), 0.0)], rng.normal(n),
                         np.zeros(n), v, folds=4, rng=SeededRng(8),
                         denominator_positive=True)


def test_split_sample_selection():
    rng = SeededRng(9)
    n = 4000
    v_u = rng.normal(n)[:, None]
    v_t = rng.normal(n)[:, None]
    theta = lambda v: 1.0 + 0.5 * v[:, 0]
    zeta = lambda v: 1.5 + 0.3 * np.tanh(v[:, 0])
    u = zeta(v_u) * theta(v_u) + rng.normal(n)
    t = zeta(v_t) + rng.normal(n)
    cands = [Candidate(BasisSpec(1, d), 0.01) for d in (1, 2, 3)]
    res = select_model(cands, u, t, v_u, v_t, folds=5, rng=SeededRng(10),
                       denominator_positive=True)
    assert res.chosen.basis.max_degree in (1, 2)  # no cubic signal present


def test_signal_builder_supplies_candidate_signals():
    v, u, t = make_joint_data(11, 2000)
    cands = [Candidate(BasisSpec(1, 1), 0.01), Candidate(BasisSpec(1, 2), 0.01)]

    calls = []

    def builder(cand):
        calls.append(cand.basis.max_degree)
        return u, t

    res = select_model(cands, u, t, v, folds=5, rng=SeededRng(12),
                       denominator_positive=True, signal_builder=builder)
    assert sorted(set(calls)) == [1, 2]
    assert res.chosen.basis.max_degree == 2

    def bad_builder(cand):
        return u[:-1], t

    with pytest.raises(ValueError, match="lengths"):
        select_model(cands, u, t, v, folds=5, rng=SeededRng(13),
                     denominator_positive=True, signal_builder=bad_builder)
