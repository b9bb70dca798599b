import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnopt.monitoring import (
    CompletionParams,
    OnlineCompleter,
    SampleMask,
    completion_error,
    dump_mask,
    dump_matrix,
    load_mask,
    load_matrix,
    make_mask,
    mask_column,
    naive_complete,
    observed_count,
    residual_feed,
    svt_complete,
)
from sdnopt.netmodel import from_edges
from sdnopt.traffic import generate_best_effort


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 30), st.floats(0.01, 1.0), st.integers(0, 1000))
def test_mask_has_exact_count_per_epoch(L, T, xi, seed):
    mask = make_mask(L, T, xi, seed)
    assert mask.shape == (L, T)
    assert (mask.observed.sum(axis=0) == math.ceil(round(xi * L, 9))).all()


def test_observed_count_is_robust_to_float_error():
    assert observed_count(10, 0.3) == 3
    assert observed_count(20, 0.2) == 4
    assert observed_count(7, 1.0) == 7


def test_mask_bad_xi():
    for xi in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            make_mask(5, 5, xi, 0)


def test_mask_is_seeded():
    a = make_mask(20, 30, 0.4, 3).observed
    assert np.array_equal(a, make_mask(20, 30, 0.4, 3).observed)
    assert not np.array_equal(a, make_mask(20, 30, 0.4, 4).observed)
    col = mask_column(10, 0.5, np.random.default_rng(0))
    assert col.sum() == 5


def test_svt_full_observation_recovers_matrix():
    M = generate_best_effort(20, 40, 2, 3.0, 0.0, seed=1)
    res = svt_complete(M, np.ones(M.shape, bool), CompletionParams(tol=1e-6, max_iters=2000))
    assert res.converged
    assert np.linalg.norm(res.values - M) / np.linalg.norm(M) <= 1e-5


def test_svt_all_zero():
    res = svt_complete(np.zeros((5, 6)), make_mask(5, 6, 0.5, 0))
    assert res.converged and not res.values.any()


def test_svt_is_unit_free():
    M = generate_best_effort(20, 60, 2, 1.0, 0.0, seed=2)
    mask = make_mask(20, 60, 0.5, 2)
    a = svt_complete(np.where(mask.observed, M, 0), mask).values
    b = svt_complete(np.where(mask.observed, M * 1000, 0), mask).values
    assert np.allclose(b, a * 1000, rtol=1e-8, atol=1e-8)


def test_svt_recovers_low_rank_from_half():
    M = generate_best_effort(20, 100, 2, 10.0, 0.0, seed=0)
    mask = make_mask(20, 100, 0.5, 0)
    res = svt_complete(np.where(mask.observed, M, 0), mask)
    assert completion_error(res.values, M, mask, "unobserved") <= 1e-2


def test_svt_input_checks():
    with pytest.raises(ValueError):
        svt_complete(np.zeros((3, 3)), np.zeros((3, 4), bool))
    with pytest.raises(ValueError):
        svt_complete(np.ones((3, 3)), np.zeros((3, 3), bool))
    with pytest.raises(ValueError):
        svt_complete(np.ones((3, 3)), np.ones((3, 3), bool), CompletionParams(tau=-1))


def _naive_ref(M, obs):
    out = np.zeros_like(M)
    for i in range(M.shape[0]):
        last = 0.0
        for t in range(M.shape[1]):
            if obs[i, t]:
                last = M[i, t]
            out[i, t] = last
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 12), st.integers(0, 10_000))
def test_naive_matches_loop_oracle(L, T, seed):
    rng = np.random.default_rng(seed)
    M = rng.uniform(0, 5, (L, T))
    obs = rng.random((L, T)) < 0.4
    assert np.array_equal(naive_complete(M, obs), _naive_ref(M, obs))


def _error_ref(est, truth, obs, scope):
    num = den = 0.0
    for i in range(truth.shape[0]):
        for t in range(truth.shape[1]):
            if scope == "unobserved" and obs[i, t]:
                continue
            num += (est[i, t] - truth[i, t]) ** 2
            den += truth[i, t] ** 2
    return math.sqrt(num) / math.sqrt(den)


def test_completion_error_matches_double_loop(rng):
    truth = rng.uniform(1, 2, (6, 9))
    est = truth + rng.normal(0, 0.1, truth.shape)
    obs = rng.random(truth.shape) < 0.5
    for scope in ("all", "unobserved"):
        assert completion_error(est, truth, obs, scope) == pytest.approx(_error_ref(est, truth, obs, scope),
                                                                          rel=1e-12)
    with pytest.raises(ValueError):
        completion_error(est, truth, obs, "some")
    z = np.zeros((2, 2))
    assert completion_error(z, z, np.ones((2, 2), bool)) == 0.0


def test_residual_feed_modes():
    topo = from_edges(2, [(0, 1, 10, 1), (1, 0, 10, 1)])
    guaranteed = np.array([2.0, 1.0])
    truth = np.array([3.0, 20.0])
    est = np.array([1.0, 1.0])
    assert residual_feed("full-info", truth, est, topo, guaranteed).tolist() == [5.0, 0.0]
    assert residual_feed("mc", truth, est, topo, guaranteed).tolist() == [7.0, 8.0]
    assert residual_feed("no-info", truth, est, topo, guaranteed).tolist() == [8.0, 9.0]
    with pytest.raises(ValueError):
        residual_feed("psychic", truth, est, topo, guaranteed)


def test_online_completer_is_causal_and_exact_on_measured():
    L, T = 30, 40
    M = generate_best_effort(L, T, 2, 5.0, 0.0, seed=5)
    rng = np.random.default_rng(5)
    oc = OnlineCompleter(L, 0.5, window=20)
    for t in range(T):
        col = mask_column(L, 0.5, rng)
        est = oc.push(M[:, t], col)
        assert np.array_equal(est[col], M[col, t])
        assert est.shape == (L,) and est.min() >= 0
        assert len(oc.values[-oc.window:]) <= 20
    # the first epochs may be poor but the window eventually pins the structure
    assert np.linalg.norm(est - M[:, -1]) / np.linalg.norm(M[:, -1]) < 0.1


def test_matrix_and_mask_round_trip(rng):
    M = rng.uniform(0, 3, (4, 5))
    assert np.array_equal(load_matrix(dump_matrix(M, "{:.17g}")), M)
    mask = make_mask(4, 5, 0.5, 1)
    back = load_mask(dump_mask(mask))
    assert np.array_equal(back.observed, mask.observed)
    assert back.xi == 0.5
    assert isinstance(back, SampleMask)
