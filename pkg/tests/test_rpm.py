import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nigp.dist import IgParams, ig_survival_inverse
from nigp.rpm import (
    BaseMeasure,
    DiscreteMeasure,
    TruncationBudgetExceeded,
    TruncationRule,
    batch_quantile,
    ferguson_klass_jumps,
    finite_sum_jumps,
    gamma_arrivals,
    measure_cdf,
    measure_quantile,
    sample_dirichlet_stick,
    sample_nigp_ferguson_klass,
    sample_nigp_finite,
    sample_partition_masses,
    sup_distance,
    sup_distance_batch,
)
from nigp.specfun import levy_tail_inverse, xi

U = BaseMeasure.uniform()
N01 = BaseMeasure.normal()


def _rng(seed):
    return np.random.default_rng(seed)


def _check_measure(P):
    assert P.atoms.shape == P.weights.shape
    assert np.all(P.weights >= 0)
    assert abs(P.weights.sum() - 1.0) <= 1e-12


# -- base measures -------------------------------------------------------------------


@pytest.mark.parametrize("H", [U, N01, BaseMeasure.uniform(-2.0, 3.0), BaseMeasure.normal(1.0, 0.1)])
def test_base_measure_generalized_inverse(H):
    u = np.linspace(0.01, 0.99, 99)
    assert np.all(H.cdf(H.quantile(u)) >= u - 1e-15)
    x = H.quantile(u)
    assert np.all(H.quantile(H.cdf(x)) <= x + 1e-12 * np.maximum(1, np.abs(x)))
    assert np.all(np.diff(H.cdf(np.linspace(-5, 5, 101))) >= 0)


def test_base_measure_round_trip_and_errors():
    for H in (U, N01):
        assert BaseMeasure.from_dict(H.to_dict()).to_dict() == H.to_dict()
    with pytest.raises(ValueError):
        BaseMeasure.from_dict({"kind": "cauchy"})
    with pytest.raises(ValueError):
        BaseMeasure.uniform(1.0, 1.0)
    with pytest.raises(ValueError):
        BaseMeasure.normal(0.0, 0.0)


def test_base_mass():
    assert U.mass(0.0, 0.3) == pytest.approx(0.3)
    assert U.mass(None, None) == 1.0
    assert N01.mass(None, 0.0) == 0.5


# -- discrete measures ---------------------------------------------------------------


def test_discrete_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([0.0, 1.0], [0.5])
    with pytest.raises(ValueError):
        DiscreteMeasure([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(ValueError):
        DiscreteMeasure([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure([], [])


def test_discrete_measure_immutable():
    P = DiscreteMeasure([0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        P.weights[0] = 1.0


def test_discrete_measure_serialization_round_trip():
    P = sample_nigp_finite(3.0, 20, N01, _rng(1))
    for back in (DiscreteMeasure.from_csv(P.to_csv()), DiscreteMeasure.from_json(P.to_json())):
        assert np.array_equal(back.atoms, P.atoms) and np.array_equal(back.weights, P.weights)
    assert P.to_csv().splitlines()[0] == "atom,weight"


def test_cdf_extremes_and_right_continuity():
    P = sample_nigp_finite(2.0, 10, U, _rng(2))
    assert measure_cdf(P, -1.0) == 0.0
    assert measure_cdf(P, 2.0) == 1.0
    Q = DiscreteMeasure([0.0], [1.0])
    assert measure_cdf(Q, 0.0) == 1.0


def test_quantile_examples():
    P = DiscreteMeasure([1.0, 2.0, 3.0, 4.0], [0.25] * 4)
    assert measure_quantile(P, 0.5) == 2.0
    R = sample_nigp_finite(2.0, 5, U, _rng(3))
    for theta in R.atoms:
        c = measure_cdf(R, theta)
        if c < 1.0:
            assert measure_quantile(R, c) <= theta
    t = np.linspace(0.01, 0.99, 50)
    assert np.all(np.diff(measure_quantile(R, t)) >= 0)
    with pytest.raises(ValueError):
        measure_quantile(R, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50))
def test_cdf_and_quantile_are_generalized_inverses(seed, n):
    P = sample_nigp_finite(1.0, n, N01, _rng(seed))
    t = np.linspace(0.005, 0.995, 37)
    q = measure_quantile(P, t)
    assert np.all(measure_cdf(P, q) >= t - 1e-12)
    for tt, x in zip(t, q):
        below = P.atoms[P.atoms < x]
        if below.size:
            assert measure_cdf(P, below.max()) < tt + 1e-12


def test_batch_quantile_matches_scalar():
    draws = [sample_nigp_finite(5.0, 30, N01, _rng(s)) for s in range(5)]
    atoms = np.stack([P.atoms for P in draws])
    weights = np.stack([P.weights for P in draws])
    levels = (0.1, 0.5, 0.9)
    expect = np.array([[measure_quantile(P, t) for t in levels] for P in draws])
    assert np.array_equal(batch_quantile(atoms, weights, levels), expect)


def test_sup_distance_examples():
    P = DiscreteMeasure([0.0], [1.0])
    assert sup_distance(P, N01) == pytest.approx(0.5)
    R = sample_nigp_finite(4.0, 40, U, _rng(4))
    assert sup_distance(R, U) >= abs(R.mass(None, 0.5) - 0.5)


def test_sup_distance_against_dense_grid():
    P = sample_nigp_finite(3.0, 25, N01, _rng(5))
    x = np.sort(np.concatenate([np.linspace(-6, 6, 20001), P.atoms, np.nextafter(P.atoms, -np.inf)]))
    brute = np.max(np.abs(measure_cdf(P, x) - N01.cdf(x)))
    assert sup_distance(P, N01) == pytest.approx(brute, abs=1e-12)


def test_sup_distance_batch_rows():
    draws = [sample_nigp_finite(5.0, 30, U, _rng(s)) for s in range(4)]
    atoms = np.stack([P.atoms for P in draws])
    weights = np.stack([P.weights for P in draws])
    np.testing.assert_array_equal(sup_distance_batch(atoms, weights, U), [sup_distance(P, U) for P in draws])


# -- arrivals --------------------------------------------------------------------------


def test_gamma_arrivals():
    g = gamma_arrivals(10, _rng(6))
    assert np.all(g.increments > 0) and g.gammas.size == 11
    assert np.all(np.diff(g.gammas) > 0)
    with pytest.raises(ValueError):
        gamma_arrivals(0, _rng(6))


def test_gamma_arrivals_law_of_large_numbers():
    rng = _rng(7)
    devs = [abs(gamma_arrivals(n, rng).gammas[-1] / n - 1) for n in (10**3, 10**4, 10**5)]
    assert devs[-1] < 0.02


def test_fifth_arrival_mean():
    g = np.cumsum(_rng(8).standard_exponential((10**5, 5)), axis=1)[:, 4]
    assert abs(g.mean() - 5) <= 4 * g.std() / math.sqrt(g.size)


def test_truncation_rule_validation():
    with pytest.raises(ValueError):
        TruncationRule(n_jumps=0)
    with pytest.raises(ValueError):
        TruncationRule(rel_tol=0.0)
    assert TruncationRule.from_dict(TruncationRule(n_jumps=5).to_dict()) == TruncationRule(n_jumps=5)


# -- finite-sum sampler ------------------------------------------------------------------


@pytest.mark.parametrize("a", [0.5, 1.0, 10.0, 100.0])
@pytest.mark.parametrize("n", [10, 100, 1000])
def test_finite_sum_weights_positive_and_strictly_decreasing(a, n):
    for seed in range(5):
        P = sample_nigp_finite(a, n, U, _rng(seed))
        _check_measure(P)
        assert P.weights.size == n
        assert np.all(P.weights > 0)
        assert np.all(np.diff(P.weights) < 0)


def test_finite_sum_terms_match_scalar_inverse():
    incr = _rng(9).standard_exponential(8)
    gam = np.cumsum(incr)
    params = IgParams.for_finite_sum(2.0, 7)
    expect = [ig_survival_inverse(params, g / gam[-1]) for g in gam[:-1]]
    np.testing.assert_allclose(finite_sum_jumps(2.0, 7, incr), expect, rtol=1e-11)


def test_finite_sum_batched_rows_match_single():
    incr = _rng(10).standard_exponential((3, 51))
    batch = finite_sum_jumps(4.0, 50, incr)
    for r in range(3):
        np.testing.assert_array_equal(batch[r], finite_sum_jumps(4.0, 50, incr[r]))


def test_finite_sum_needs_enough_increments():
    with pytest.raises(ValueError):
        finite_sum_jumps(1.0, 10, np.ones(10))


def test_finite_sum_finite_n_variance():
    # atoms are iid from H, so Var P(A) = H(1-H)[(1 - 1/n)/xi(a) + 1/n] exactly
    a, n, h = 10.0, 20, 0.3
    rng = _rng(11)
    incr = rng.standard_exponential((20000, n + 1))
    atoms = rng.random((20000, n))
    w = finite_sum_jumps(a, n, incr)
    p = (w * (atoms <= h)).sum(axis=1) / w.sum(axis=1)
    assert abs(p.mean() - h) <= 4 * p.std() / math.sqrt(p.size)
    d2 = (p - p.mean()) ** 2
    target = h * (1 - h) * ((1 - 1 / n) / xi(a) + 1 / n)
    assert abs(d2.mean() - target) <= 4 * d2.std() / math.sqrt(p.size)


@pytest.mark.slow
def test_finite_sum_moments_example():
    a, n = 100.0, 5000
    rng = _rng(12)
    p = np.array([sample_nigp_finite(a, n, U, rng).mass(0.0, 0.3) for _ in range(10**4)])
    assert abs(p.mean() - 0.3) <= 4 * p.std(ddof=1) / math.sqrt(p.size)
    assert p.var(ddof=1) == pytest.approx(0.21 / xi(a), rel=0.10)


def test_first_term_approaches_levy_inverse_pathwise():
    # the gap is driven by Gamma_{n+1}/n - 1 ~ n^{-1/2}
    rng = _rng(13)
    diffs = []
    for _ in range(40):
        incr = rng.standard_exponential(10**4 + 1)
        ref = levy_tail_inverse(1.0, incr[0])
        diffs.append([abs(finite_sum_jumps(1.0, n, incr)[0] / ref - 1) for n in (10**2, 10**3, 10**4)])
    med = np.median(diffs, axis=0)
    assert med[0] > med[1] > med[2]


def test_pathwise_coupling_at_fixed_depth():
    # first 100 unnormalized terms on A = (0, 0.3] against L^{-1}(Gamma_i), same arrivals and atoms
    rng = _rng(14)
    a, depth = 10.0, 100
    errors = []
    for _ in range(50):
        incr = rng.standard_exponential(10**4 + 1)
        atoms = U.sample(rng, depth)
        in_a = atoms <= 0.3
        fk = ferguson_klass_jumps(a, np.cumsum(incr[:depth]))[in_a].sum()
        errors.append([abs(finite_sum_jumps(a, n, incr)[:depth][in_a].sum() - fk) for n in (10**2, 10**3, 10**4)])
    med = np.median(errors, axis=0)
    assert med[0] > med[1] > med[2]


# -- Ferguson-Klass and Dirichlet ---------------------------------------------------------


def test_ferguson_klass_jumps_decreasing_and_normalized():
    P = sample_nigp_ferguson_klass(10.0, U, TruncationRule(), _rng(15))
    _check_measure(P)
    assert np.all(np.diff(P.weights) < 0)
    # stopping rule: the last jump is a small share of the running total
    assert P.weights[-1] < 1e-8 * 1.0001


def test_ferguson_klass_fixed_depth():
    P = sample_nigp_ferguson_klass(1.0, U, TruncationRule(n_jumps=37), _rng(16))
    assert len(P) == 37


def test_ferguson_klass_budget():
    with pytest.raises(TruncationBudgetExceeded):
        sample_nigp_ferguson_klass(1000.0, U, TruncationRule(rel_tol=1e-12, cap=2000), _rng(17))


def test_dirichlet_moments():
    a, rng = 5.0, _rng(18)
    p = np.array([sample_dirichlet_stick(a, U, TruncationRule(), rng).mass(0.0, 0.3) for _ in range(10**4)])
    assert abs(p.mean() - 0.3) <= 4 * p.std(ddof=1) / math.sqrt(p.size)
    assert p.var(ddof=1) == pytest.approx(0.21 / (a + 1), rel=0.10)


def test_dirichlet_sums_to_one_with_fixed_depth():
    P = sample_dirichlet_stick(2.0, N01, TruncationRule(n_jumps=10), _rng(19))
    _check_measure(P)
    assert len(P) == 10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["finite", "fk", "dp"]))
def test_every_sampler_yields_valid_measures(seed, which):
    rng = _rng(seed)
    if which == "finite":
        P = sample_nigp_finite(3.0, 64, N01, rng)
    elif which == "fk":
        P = sample_nigp_ferguson_klass(3.0, N01, TruncationRule(), rng)
    else:
        P = sample_dirichlet_stick(3.0, N01, TruncationRule(), rng)
    _check_measure(P)


# -- exact partition law ---------------------------------------------------------------------


def test_partition_masses_moments():
    a, rng = 100.0, _rng(20)
    z = sample_partition_masses(a, [0.3, 0.2, 0.5], rng, size=50000)
    assert np.allclose(z.sum(axis=1), 1.0, atol=1e-14)
    p = z[:, 0]
    assert abs(p.mean() - 0.3) <= 4 * p.std() / math.sqrt(p.size)
    assert p.var() == pytest.approx(0.21 / xi(a), rel=0.03)
    cross = np.mean(z[:, 0] * z[:, 1])
    assert cross == pytest.approx(0.06 * (xi(a) - 1) / xi(a), rel=0.01)


def test_partition_zero_mass_cell():
    z = sample_partition_masses(10.0, [0.0, 0.4, 0.6], _rng(21), size=100)
    assert np.all(z[:, 0] == 0.0)


def test_partition_agrees_with_finite_sum_in_law():
    # finite-sum at large n and the exact two-cell law give the same P(A) distribution
    a, rng = 5.0, _rng(22)
    exact = sample_partition_masses(a, [0.4, 0.6], rng, size=3000)[:, 0]
    incr = rng.standard_exponential((3000, 2001))
    atoms = rng.random((3000, 2000))
    w = finite_sum_jumps(a, 2000, incr)
    finite = (w * (atoms <= 0.4)).sum(axis=1) / w.sum(axis=1)
    assert stats.ks_2samp(exact, finite).pvalue > 1e-3
