import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from gedlab.divergence import (
    DimensionError,
    DiscreteDist,
    DivergenceKind,
    DivergenceSpec,
    DomainError,
    GaussianDist,
    GridDensity,
    check_metric_like,
    divergence,
    hellinger_discrete,
    hellinger_sq_discrete,
    hellinger_sq_gaussian,
    hellinger_sq_table,
    l2_distance,
    tv_distance,
    tv_table,
)


def prob_vectors(n):
    return st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: np.asarray(v) / np.sum(v)
    )


# ---------------------------------------------------------------------------
# spec and carriers
# ---------------------------------------------------------------------------


def test_spec_constants():
    assert DivergenceSpec.tv().c_d == 1 and DivergenceSpec.tv().cap == 1
    assert DivergenceSpec.hellinger().c_d == 1
    assert DivergenceSpec.hellinger_sq().c_d == 2
    assert DivergenceSpec.l2(3.0).cap == 3.0


def test_spec_rejects_bad_constants():
    with pytest.raises(DomainError):
        DivergenceSpec(DivergenceKind.TV, c_d=0.5)
    with pytest.raises(DomainError):
        DivergenceSpec(DivergenceKind.TV, cap=0.0)


def test_spec_roundtrip():
    s = DivergenceSpec.hellinger_sq()
    assert DivergenceSpec.from_dict(s.to_dict()) == s


def test_discrete_dist_validation():
    with pytest.raises(DomainError):
        DiscreteDist(np.array([0.5, 0.6]))
    with pytest.raises(DomainError):
        DiscreteDist(np.array([1.5, -0.5]))
    DiscreteDist(np.array([0.5, 0.5 + 5e-13]))


def test_grid_density_validation():
    g = np.linspace(0, 1, 101)
    GridDensity(g, np.ones_like(g))
    with pytest.raises(DomainError):
        GridDensity(g, 2 * np.ones_like(g))
    with pytest.raises(DomainError):
        GridDensity(np.linspace(0, 2, 101), 0.5 * np.ones(101))


def test_discrete_sampling_frequencies():
    rng = np.random.default_rng(0)
    d = DiscreteDist(np.array([0.2, 0.5, 0.3]), np.array([0.0, 0.5, 1.0]))
    draws = np.array([d.sample(rng) for _ in range(20000)])
    freq = [np.mean(draws == v) for v in (0.0, 0.5, 1.0)]
    np.testing.assert_allclose(freq, [0.2, 0.5, 0.3], atol=0.015)


def test_grid_density_sampling_matches_cdf():
    rng = np.random.default_rng(1)
    tri = GridDensity.from_function(lambda y: 2 * y, n=2001)
    draws = np.array([tri.sample(rng) for _ in range(4000)])
    # triangle density 2y has CDF y^2
    assert stats.kstest(draws, lambda y: np.clip(y, 0, 1) ** 2).pvalue > 0.01


# ---------------------------------------------------------------------------
# total variation and Hellinger on discrete laws
# ---------------------------------------------------------------------------


def test_tv_examples():
    assert tv_distance(DiscreteDist.bernoulli(0.3), DiscreteDist.bernoulli(0.3)) == 0
    assert tv_distance(DiscreteDist(np.array([1.0, 0.0])), DiscreteDist(np.array([0.0, 1.0]))) == 1
    assert tv_distance(DiscreteDist.bernoulli(0.5), DiscreteDist.bernoulli(0.75)) == pytest.approx(0.25, abs=1e-15)


def test_tv_dimension_mismatch():
    with pytest.raises(DimensionError):
        tv_distance(DiscreteDist.bernoulli(0.5), DiscreteDist(np.ones(3) / 3))


def test_hellinger_examples():
    p = DiscreteDist(np.array([0.2, 0.3, 0.5]))
    assert hellinger_sq_discrete(p, p) == 0
    assert hellinger_sq_discrete(DiscreteDist(np.array([1.0, 0.0])), DiscreteDist(np.array([0.0, 1.0]))) == 1
    # 1 - sum sqrt(p q) by hand: sqrt(0.5 * 1) + sqrt(0.5 * 0)
    assert hellinger_sq_discrete(DiscreteDist.bernoulli(0.5), DiscreteDist.bernoulli(0.0)) == pytest.approx(
        1 - math.sqrt(0.5), abs=1e-15
    )


@given(prob_vectors(4), prob_vectors(4))
def test_hellinger_equals_one_minus_bhattacharyya(p, q):
    P, Q = DiscreteDist(p), DiscreteDist(q)
    assert hellinger_sq_discrete(P, Q) == pytest.approx(1 - np.sum(np.sqrt(p * q)), abs=1e-12)
    assert hellinger_discrete(P, Q) ** 2 == pytest.approx(hellinger_sq_discrete(P, Q), abs=1e-14)


@given(prob_vectors(3), prob_vectors(3))
def test_tv_hellinger_sandwich(p, q):
    P, Q = DiscreteDist(p), DiscreteDist(q)
    h2, tv = hellinger_sq_discrete(P, Q), tv_distance(P, Q)
    assert h2 <= tv + 1e-12
    assert tv <= math.sqrt(2 * h2) + 1e-12


def test_tables_match_scalar_versions():
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(5), size=20)
    q = rng.dirichlet(np.ones(5), size=20)
    h = hellinger_sq_table(p, q)
    t = tv_table(p, q)
    for i in range(20):
        assert h[i] == pytest.approx(hellinger_sq_discrete(DiscreteDist(p[i]), DiscreteDist(q[i])), abs=1e-15)
        assert t[i] == pytest.approx(tv_distance(DiscreteDist(p[i]), DiscreteDist(q[i])), abs=1e-15)


# ---------------------------------------------------------------------------
# Gaussian
# ---------------------------------------------------------------------------


def test_gaussian_identity_and_far_limit():
    assert hellinger_sq_gaussian(GaussianDist(0, 1), GaussianDist(0, 1)) == 0
    assert hellinger_sq_gaussian(GaussianDist(0, 1), GaussianDist(100, 1)) == pytest.approx(1, abs=1e-12)


def test_gaussian_half_point():
    sigma = 0.7
    mu = math.sqrt(8 * sigma**2 * math.log(2))
    assert hellinger_sq_gaussian(GaussianDist(0, sigma), GaussianDist(mu, sigma)) == pytest.approx(0.5, abs=1e-14)


def _hellinger_sq_quadrature(m1, s1, m2, s2):
    bc, _ = integrate.quad(lambda y: math.sqrt(stats.norm.pdf(y, m1, s1) * stats.norm.pdf(y, m2, s2)), -40, 40,
                           limit=200, points=[m1, m2])
    return 1 - bc


@pytest.mark.parametrize("m1,s1,m2,s2", [(0, 1, 1, 1), (0.3, 0.5, -0.2, 0.5), (0, 1, 0.5, 2), (1, 0.3, 0, 0.8)])
def test_gaussian_against_quadrature(m1, s1, m2, s2):
    got = hellinger_sq_gaussian(GaussianDist(m1, s1), GaussianDist(m2, s2))
    assert got == pytest.approx(_hellinger_sq_quadrature(m1, s1, m2, s2), abs=1e-9)


def test_gaussian_rejects_bad_sigma():
    with pytest.raises(DomainError):
        GaussianDist(0.0, 0.0)


# ---------------------------------------------------------------------------
# L2 on grids
# ---------------------------------------------------------------------------


def test_l2_uniform_vs_triangle():
    uni = GridDensity.from_function(lambda y: np.ones_like(y), n=4001)
    tri = GridDensity.from_function(lambda y: 2 * y, n=4001)
    assert l2_distance(uni, uni) == 0
    assert l2_distance(uni, tri) == pytest.approx(1 / math.sqrt(3), abs=1e-6)


def test_l2_grid_refinement_converges():
    def f(y):
        return 1 + 0.5 * np.cos(2 * np.pi * y)

    def g(y):
        return 1 + 0.5 * np.sin(2 * np.pi * y)

    # int (0.5 cos - 0.5 sin)^2 over [0, 1] = 0.25
    exact = 0.5
    coarse = l2_distance(GridDensity.from_function(f, n=513), GridDensity.from_function(g, n=513))
    fine = l2_distance(GridDensity.from_function(f, n=1025), GridDensity.from_function(g, n=1025))
    assert abs(fine - coarse) < 1e-4
    assert fine == pytest.approx(exact, abs=1e-4)


def test_l2_grid_mismatch():
    a = GridDensity.from_function(lambda y: np.ones_like(y), n=101)
    b = GridDensity.from_function(lambda y: np.ones_like(y), n=201)
    with pytest.raises(DimensionError):
        l2_distance(a, b)


# ---------------------------------------------------------------------------
# metric-like axioms
# ---------------------------------------------------------------------------


def _random_triples(rng, n, k):
    for _ in range(n):
        yield tuple(DiscreteDist(rng.dirichlet(np.full(k, 0.5))) for _ in range(3))


@pytest.mark.parametrize("spec", [DivergenceSpec.tv(), DivergenceSpec.hellinger(), DivergenceSpec.hellinger_sq()])
def test_axioms_on_random_discrete_triples(spec):
    rep = check_metric_like(spec, _random_triples(np.random.default_rng(11), 300, 4))
    assert rep.n_triples == 300
    assert rep.max_violation <= 1e-10


def test_axioms_detect_a_broken_constant():
    # squared Hellinger is not a metric: with C_D = 1 the triangle must fail somewhere
    spec = DivergenceSpec(DivergenceKind.HELLINGER_SQ, 1.0, 1.0)
    p, q, r = (DiscreteDist.bernoulli(v) for v in (0.0, 0.5, 1.0))
    assert check_metric_like(spec, [(p, q, r)]).triangle > 0.1


@settings(max_examples=200)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 3))
def test_gaussian_hellinger_is_metric_like(m1, m2, m3, s):
    spec = DivergenceSpec.hellinger()
    rep = check_metric_like(spec, [(GaussianDist(m1, s), GaussianDist(m2, s), GaussianDist(m3, s))])
    assert rep.max_violation <= 1e-10


def test_dispatch_matches_direct_calls():
    p, q = DiscreteDist.bernoulli(0.2), DiscreteDist.bernoulli(0.9)
    assert divergence(DivergenceSpec.tv(), p, q) == tv_distance(p, q)
    assert divergence(DivergenceSpec.hellinger_sq(), p, q) == hellinger_sq_discrete(p, q)
    assert divergence(DivergenceSpec.hellinger(), p, q) == hellinger_discrete(p, q)
