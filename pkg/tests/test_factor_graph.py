import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latent_evidence.errors import DimensionError, ParameterError, SizeError
from latent_evidence.factor_graph import (
    FactorGraphSpec,
    ImportanceScores,
    SelectionMask,
    budget_projection,
    kkt_residual,
    map_bruteforce,
    map_exact_dp,
    scale_forward,
    scale_forward_tape,
    scale_objective,
    score_assignment,
)
from oracles import budget_projection_bisection, scale_cvxpy, sliding_window_oracle

S4 = np.array([1.0, -0.5, 0.8, -2.0])


def scores(s, r=None, bounds=()):
    return ImportanceScores(np.asarray(s, float), None if r is None else np.atleast_1d(r), frozenset(bounds))


# -- scoring and exact MAP -----------------------------------------------------

def test_score_assignment_examples():
    sc = scores(S4, 0.6)
    assert score_assignment(np.zeros(4), sc) == 0.0
    assert score_assignment(SelectionMask(np.array([1, 0, 1, 0.0])), sc) == pytest.approx(1.8)
    assert score_assignment(np.array([1, 1, 0, 0.0]), sc) == pytest.approx(1.1)


def test_bruteforce_examples():
    mask, val = map_bruteforce(scores([-1, -1], 0.0), FactorGraphSpec(2, 2))
    assert val == 0 and not mask.values.any()
    mask, val = map_bruteforce(scores(S4, 0.6), FactorGraphSpec(4, 2))
    assert mask.values.tolist() == [1, 0, 1, 0] and val == pytest.approx(1.8)
    mask, val = map_bruteforce(scores(S4, 1.5), FactorGraphSpec(4, 2))
    assert mask.values.tolist() == [1, 1, 0, 0] and val == pytest.approx(2.0)


def test_dp_examples():
    mask, val = map_exact_dp(scores(S4, 0.6), FactorGraphSpec(4, 0))
    assert val == 0 and not mask.values.any()
    mask, val = map_exact_dp(scores(S4, 0.6), FactorGraphSpec(4, 2))
    assert mask.values.tolist() == [1, 0, 1, 0] and val == pytest.approx(1.8)


def test_bruteforce_size_limit():
    with pytest.raises(SizeError):
        map_bruteforce(scores(np.zeros(25)), FactorGraphSpec(25))


def test_dp_matches_enumeration_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 13))
        s = rng.uniform(-2, 2, n)
        r = rng.uniform(0, 1, n - 1)
        k = int(rng.integers(0, n + 1))
        sc = scores(s, r)
        spec = FactorGraphSpec(n, k)
        # independent enumeration over itertools.product
        best, best_mask = -np.inf, None
        for bits in itertools.product((0, 1), repeat=n):
            if sum(bits) > k:
                continue
            v = s @ bits + r @ (np.array(bits[:-1]) * np.array(bits[1:]))
            if v > best + 1e-12:
                best, best_mask = v, bits
        mask, val = map_exact_dp(sc, spec)
        assert val == pytest.approx(best, abs=1e-12)
        assert score_assignment(mask, sc) == pytest.approx(best, abs=1e-12)


def test_ties_prefer_lexicographically_smallest():
    # every single selection scores 1; the first index wins
    sc = scores(np.ones(4), 0.0)
    for solver in (map_bruteforce, map_exact_dp):
        mask, _ = solver(sc, FactorGraphSpec(4, 1))
        assert mask.values.tolist() == [1, 0, 0, 0]
    # zero-score unit: selecting it or not ties; the smaller index list (0,) < (0, 1)
    sc = scores([1.0, 0.0], 0.0)
    for solver in (map_bruteforce, map_exact_dp):
        assert solver(sc, FactorGraphSpec(2, 2))[0].values.tolist() == [1, 0]


def test_strong_pair_gives_single_window(rng):
    for _ in range(100):
        n = int(rng.integers(2, 15))
        s = rng.uniform(-2, 2, n)
        k = int(rng.integers(1, n + 1))
        r = np.full(n - 1, 2 * np.abs(s).sum() + 1 + rng.uniform(0, 1))
        mask, _ = map_exact_dp(scores(s, r), FactorGraphSpec(n, k))
        sel = np.flatnonzero(mask.values)
        assert np.all(np.diff(sel) == 1)
        start, best = sliding_window_oracle(s, k)
        if k == 1 and best <= 0:
            # no pair bonus is reachable, so the empty mask wins
            assert sel.size == 0
            continue
        assert sel.size == k and s[sel].sum() == pytest.approx(best)


def test_boundary_cuts_pair_bonus():
    sc = scores([0.1, 0.1], 5.0, bounds=[0])
    assert sc.pair.tolist() == [0.0]
    mask, val = map_exact_dp(sc, FactorGraphSpec(2, 2))
    assert val == pytest.approx(0.2)


def test_invalid_scores():
    with pytest.raises(ParameterError):
        scores([1.0, 2.0], -0.1)
    with pytest.raises(DimensionError):
        ImportanceScores(np.ones(4), np.ones(2))
    with pytest.raises(DimensionError):
        map_exact_dp(scores([1.0, 2.0]), FactorGraphSpec(3))
    with pytest.raises(ParameterError):
        FactorGraphSpec(3, 4)


# -- budget projection ----------------------------------------------------------

def test_budget_projection_examples():
    np.testing.assert_allclose(budget_projection(np.array([0.3, 0.2]), 1), [0.3, 0.2])
    np.testing.assert_allclose(budget_projection(np.array([2.0, -1.0]), 1), [1.0, 0.0])
    np.testing.assert_allclose(budget_projection(np.array([0.9, 0.8]), 1), [0.55, 0.45], atol=1e-12)


def test_budget_projection_matches_bisection_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 20))
        v = rng.uniform(-1, 2, n)
        k = rng.uniform(0, n)
        np.testing.assert_allclose(budget_projection(v, k), budget_projection_bisection(v, k), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=12), st.floats(0, 12))
def test_budget_projection_is_nearest_feasible(vs, k):
    v = np.array(vs)
    p = budget_projection(v, k)
    assert p.min() >= 0 and p.max() <= 1 and p.sum() <= k + 1e-9
    # variational inequality for a projection onto a convex set
    rng = np.random.default_rng(len(vs))
    for _ in range(20):
        q = budget_projection(rng.uniform(-1, 2, v.size), k)
        assert (v - p) @ (q - p) <= 1e-8


# -- SCALE -----------------------------------------------------------------------

def test_scale_examples():
    np.testing.assert_allclose(scale_forward(scores([2, -3], 0.0), FactorGraphSpec(2, 2)).values, [1, 0])
    np.testing.assert_allclose(scale_forward(scores([0.9, 0.8], 0.0), FactorGraphSpec(2, 1)).values,
                               [0.55, 0.45], atol=1e-9)


def test_scale_matches_convex_solver(rng):
    for _ in range(40):
        n = int(rng.integers(2, 12))
        s = rng.uniform(-1, 2, n)
        r = rng.uniform(0, 1.5, n - 1)
        k = int(rng.integers(0, n + 1))
        sc = scores(s, r)
        spec = FactorGraphSpec(n, k)
        mu = scale_forward(sc, spec).values
        ref_mu, ref_val = scale_cvxpy(s, r, k)
        assert scale_objective(mu, sc, spec) >= ref_val - 1e-6
        np.testing.assert_allclose(mu, ref_mu, atol=1e-4)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10_000), st.floats(0, 2))
def test_scale_feasible_and_reductions(n, seed, rmax):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-2, 3, n)
    r = rng.uniform(0, rmax, n - 1)
    k = int(rng.integers(0, n + 1))
    mu = scale_forward(scores(s, r), FactorGraphSpec(n, k)).values
    assert mu.min() >= 0 and mu.max() <= 1 and mu.sum() <= k + 1e-9
    np.testing.assert_allclose(scale_forward(scores(s, 0.0 * r), FactorGraphSpec(n, k)).values,
                               budget_projection(s, k), atol=1e-6)
    np.testing.assert_allclose(scale_forward(scores(s, 0.0 * r), FactorGraphSpec(n)).values,
                               np.clip(s, 0, 1), atol=1e-6)


def test_scale_budget_monotone(rng):
    for _ in range(50):
        n = int(rng.integers(2, 15))
        sc = scores(rng.uniform(-1, 2, n), rng.uniform(0, 1, n - 1))
        totals = [scale_forward(sc, FactorGraphSpec(n, k)).values.sum() for k in range(n + 1)]
        assert np.all(np.diff(totals) >= -1e-9)


def test_scale_beats_random_feasible_points(rng):
    for _ in range(5):
        n = int(rng.integers(3, 10))
        k = int(rng.integers(1, n))
        sc = scores(rng.uniform(-1, 2, n), rng.uniform(0, 1, n - 1))
        spec = FactorGraphSpec(n, k)
        best = scale_objective(scale_forward(sc, spec).values, sc, spec)
        for _ in range(1000):
            q = budget_projection(rng.uniform(-0.5, 1.5, n), k)
            assert scale_objective(q, sc, spec) <= best + 1e-9


def test_kkt_residual_small_at_solution_and_large_elsewhere(rng):
    n = 8
    sc = scores(rng.uniform(-1, 2, n), rng.uniform(0, 1, n - 1))
    spec = FactorGraphSpec(n, 3)
    mask, tape = scale_forward_tape(sc, spec)
    assert tape.residual <= 1e-8
    assert kkt_residual(np.full(n, 0.3), sc, spec) > 1e-3


def test_scale_without_pair_factor_ignores_r(rng):
    s = rng.uniform(-1, 2, 6)
    a = scale_forward(scores(s, np.ones(5)), FactorGraphSpec(6, 2, use_pair=False)).values
    np.testing.assert_allclose(a, budget_projection(s, 2), atol=1e-9)
