import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from gecer import (
    CoefficientSet,
    ConfigError,
    Dataset,
    DimensionError,
    ExpectileGrid,
    InputDomainError,
    PenaltyConfig,
)
from gecer.model_core import (
    build_weights,
    composite_loss,
    composite_loss_gradient,
    composite_objective,
    degrees_of_freedom,
    effective_interactions,
    expectile_loss,
    mcp_derivative,
    mcp_penalty,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
levels = st.floats(0.01, 0.99)


def random_instance(rng, n=5, p=2, q=1, L=3, mode="hierarchical"):
    data = Dataset(rng.normal(size=n), rng.normal(size=(n, q)), rng.normal(size=(n, p)))
    inter = rng.normal(size=(q, p))
    kw = {"gamma": inter} if mode == "hierarchical" else {"eta": inter}
    coef = CoefficientSet(rng.normal(size=L), rng.normal(size=q), rng.normal(size=p), **kw)
    return data, coef


# ---- expectile loss and weights ----

@pytest.mark.parametrize("u, tau, expected", [(1.0, 0.5, 0.5), (-2.0, 0.25, 3.0), (0.0, 0.9, 0.0)])
def test_expectile_loss_examples(u, tau, expected):
    assert expectile_loss(u, tau) == expected


def test_expectile_loss_rejects_bad_input():
    with pytest.raises(InputDomainError):
        expectile_loss(np.inf, 0.5)
    with pytest.raises(InputDomainError):
        expectile_loss(1.0, 1.0)


@pytest.mark.parametrize("res, tau, expected", [
    ([1, -1], 0.9, [0.9, 0.1]),
    ([0], 0.3, [0.3]),
    ([-5, -1, 2], 0.5, [0.5, 0.5, 0.5]),
])
def test_build_weights_examples(res, tau, expected):
    np.testing.assert_allclose(build_weights(res, tau), expected, rtol=0, atol=1e-15)


@given(finite, levels)
def test_loss_reflection(u, tau):
    assert expectile_loss(u, tau) == pytest.approx(expectile_loss(-u, 1 - tau), rel=1e-12)


@given(finite)
def test_loss_half_is_half_square(u):
    assert expectile_loss(u, 0.5) == u * u / 2


@given(st.lists(finite, min_size=1, max_size=30), levels)
def test_weights_reproduce_loss(res, tau):
    res = np.array(res)
    w = build_weights(res, tau)
    assert set(np.unique(w)) <= {tau, 1 - tau}
    assert np.sum(w * res * res) == pytest.approx(np.sum(expectile_loss(res, tau)), rel=1e-12, abs=1e-300)


# ---- MCP ----

def test_mcp_examples():
    assert mcp_penalty(0.0, 1.0, 3.0) == 0.0
    assert mcp_penalty(3.0, 1.0, 3.0) == 1.5
    with pytest.raises(ConfigError):
        mcp_penalty(1.0, 1.0, 1.0)


def test_mcp_matches_integral_definition():
    # rho(t) = int_0^t lam (1 - x/(r lam))_+ dx
    lam, r = 0.7, 2.5
    for t in (0.1, 0.9, 1.75, 2.0, 5.0):
        val, _ = quad(lambda x: lam * max(0.0, 1 - x / (r * lam)), 0, t, points=[r * lam])
        assert mcp_penalty(t, lam, r) == pytest.approx(val, abs=1e-12)


@given(st.floats(-10, 10), st.floats(0.01, 3), st.floats(1.01, 10))
def test_mcp_properties(v, lam, r):
    assert mcp_penalty(v, lam, r) == mcp_penalty(-v, lam, r)
    assert mcp_penalty(v, lam, r) <= lam * abs(v) + 1e-12
    assert mcp_penalty(abs(v) + 0.1, lam, r) >= mcp_penalty(v, lam, r) - 1e-12


@given(st.floats(0.05, 3), st.floats(1.1, 10))
def test_mcp_continuous_at_kink(lam, r):
    kink = r * lam
    assert mcp_penalty(kink - 1e-9, lam, r) == pytest.approx(mcp_penalty(kink + 1e-9, lam, r), abs=1e-8)


@given(st.floats(0.05, 3), st.floats(1.1, 10), st.floats(0.02, 0.98))
def test_mcp_derivative_matches_finite_difference(lam, r, frac):
    # points well inside (0, r lam) or beyond it
    for v in (frac * r * lam, (1 + frac) * r * lam):
        h = 1e-6 * max(1.0, v)
        fd = (mcp_penalty(v + h, lam, r) - mcp_penalty(v - h, lam, r)) / (2 * h)
        assert float(mcp_derivative(v, lam, r)) == pytest.approx(fd, abs=1e-6)


# ---- interactions and hierarchy ----

def test_effective_interaction_examples():
    coef = CoefficientSet([0.0], [0.0], [0.0, 2.0], gamma=[[5.0, 0.5]])
    np.testing.assert_array_equal(effective_interactions(coef), [[0.0, 1.0]])
    coef = CoefficientSet([0.0], [0.0], [1.0, 2.0], gamma=[[0.0, 0.0]])
    np.testing.assert_array_equal(effective_interactions(coef), [[0.0, 0.0]])
    coef = CoefficientSet([0.0], [0.0], [0.0, 0.0], eta=[[1.0, -1.0]])
    np.testing.assert_array_equal(effective_interactions(coef), [[1.0, -1.0]])


@given(st.lists(st.sampled_from([0.0, 1.0, -2.5]), min_size=1, max_size=8), st.integers(1, 3),
       st.integers(0, 2 ** 31))
def test_hierarchy_is_structural(beta, q, seed):
    beta = np.array(beta)
    gamma = np.random.default_rng(seed).normal(size=(q, beta.size)) * 100
    eta = effective_interactions(CoefficientSet(np.zeros(1), np.zeros(q), beta, gamma=gamma))
    assert np.all(eta[:, beta == 0] == 0)


def test_coefficient_set_requires_one_interaction_block():
    with pytest.raises(DimensionError):
        CoefficientSet([0.0], [0.0], [0.0])
    with pytest.raises(DimensionError):
        CoefficientSet([0.0], [0.0], [0.0], gamma=[[0.0]], eta=[[0.0]])


def test_interaction_design_is_elementwise_product():
    rng = np.random.default_rng(3)
    data = Dataset(rng.normal(size=6), rng.normal(size=(6, 2)), rng.normal(size=(6, 4)))
    for k in range(2):
        for j in range(4):
            np.testing.assert_array_equal(data.interaction(k)[:, j], data.z[:, k] * data.x[:, j])


# ---- dataset and grid validation ----

def test_dataset_validation():
    with pytest.raises(DimensionError):
        Dataset(np.zeros(3), np.zeros((2, 1)), np.zeros((3, 1)))
    with pytest.raises(InputDomainError):
        Dataset(np.array([0.0, np.nan]), np.zeros((2, 1)), np.zeros((2, 1)))
    d = Dataset(np.zeros(3), np.zeros((3, 0)), np.zeros((3, 0)))
    assert (d.n, d.q, d.p) == (3, 0, 0)


def test_grid_validation_and_spacing():
    assert ExpectileGrid.equally_spaced(9).levels == tuple(l / 10 for l in range(1, 10))
    for bad in [(0.5, 0.5), (0.0, 0.5), (0.6, 0.4), (1.0,)]:
        with pytest.raises(ConfigError):
            ExpectileGrid(bad)
    with pytest.raises(ConfigError):
        PenaltyConfig(1.0, 1.0, r=1.0)
    with pytest.raises(ConfigError):
        PenaltyConfig(-1.0, 1.0)


# ---- composite objective ----

def test_objective_zero_at_zero():
    data = Dataset(np.zeros(4), np.ones((4, 2)), np.ones((4, 3)))
    coef = CoefficientSet.zeros(5, 2, 3)
    grid = ExpectileGrid.equally_spaced(5)
    assert composite_objective(data, coef, grid, PenaltyConfig(1.0, 1.0)) == 0.0


def test_objective_half_level_is_rss_over_4n():
    rng = np.random.default_rng(0)
    data, coef = random_instance(rng, n=20, p=3, q=2, L=1)
    grid = ExpectileGrid.single(0.5)
    res = data.y - coef.intercepts[0] - data.z @ coef.alpha - data.x @ coef.beta - np.einsum(
        "ij,ij->i", data.x, data.z @ (coef.gamma * coef.beta))
    expected = np.sum(res ** 2) / (4 * data.n)
    assert composite_objective(data, coef, grid, PenaltyConfig(0, 0)) == pytest.approx(expected, rel=1e-12)


def naive_objective(data, coef, taus, lam1, lam2, r):
    """Term-by-term loop over levels, subjects, E and G factors."""
    n, q, p = data.n, data.q, data.p
    hier = coef.gamma is not None
    total = 0.0
    for l, tau in enumerate(taus):
        for i in range(n):
            f = coef.intercepts[l]
            for k in range(q):
                f += data.z[i, k] * coef.alpha[k]
            for j in range(p):
                f += data.x[i, j] * coef.beta[j]
                for k in range(q):
                    eta = coef.beta[j] * coef.gamma[k, j] if hier else coef.eta[k, j]
                    f += data.z[i, k] * data.x[i, j] * eta
            u = data.y[i] - f
            total += (tau if u >= 0 else 1 - tau) * u * u
    total /= 2 * n

    def rho(v, lam):
        a = abs(v)
        return lam * a - a * a / (2 * r) if a <= r * lam else r * lam * lam / 2

    total += sum(rho(b, lam1) for b in coef.beta)
    inter = coef.gamma if hier else coef.eta
    total += sum(rho(g, lam2) for g in inter.ravel())
    return total


@pytest.mark.parametrize("mode", ["hierarchical", "non-hierarchical"])
@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_naive_summation(mode, seed):
    rng = np.random.default_rng(seed)
    data, coef = random_instance(rng, n=5, p=2, q=1, L=3, mode=mode)
    grid = ExpectileGrid((0.2, 0.5, 0.85))
    pen = PenaltyConfig(0.4, 0.3, 2.5)
    expected = naive_objective(data, coef, grid.levels, 0.4, 0.3, 2.5)
    assert composite_objective(data, coef, grid, pen) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31), st.permutations(range(4)))
def test_objective_invariant_to_level_order(seed, perm):
    rng = np.random.default_rng(seed)
    taus = np.array([0.1, 0.3, 0.6, 0.8])
    data, coef = random_instance(rng, n=8, p=3, q=2, L=4)
    pen = PenaltyConfig(0.5, 0.5)
    base = composite_objective(data, coef, ExpectileGrid(tuple(taus)), pen)
    # permute levels together with their intercepts; use the naive oracle, which
    # accepts any order
    permuted = coef.copy()
    permuted.intercepts = coef.intercepts[list(perm)]
    other = naive_objective(data, permuted, taus[list(perm)], 0.5, 0.5, 3.0)
    assert other == pytest.approx(base, rel=1e-12)


def test_dimension_mismatch_raises():
    data = Dataset(np.zeros(3), np.zeros((3, 1)), np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        composite_loss(data, CoefficientSet.zeros(1, 1, 3), ExpectileGrid.single(0.5))
    with pytest.raises(DimensionError):
        composite_loss(data, CoefficientSet.zeros(2, 1, 2), ExpectileGrid.single(0.5))


@pytest.mark.parametrize("mode", ["hierarchical", "non-hierarchical"])
def test_gradient_matches_finite_differences(mode):
    rng = np.random.default_rng(11)
    data, coef = random_instance(rng, n=15, p=3, q=2, L=3, mode=mode)
    grid = ExpectileGrid((0.2, 0.5, 0.8))
    grad = composite_loss_gradient(data, coef, grid)
    for name in ("intercepts", "alpha", "beta", "gamma" if mode == "hierarchical" else "eta"):
        arr = getattr(coef, name)
        g = getattr(grad, name)
        for idx in np.ndindex(arr.shape):
            plus, minus = coef.copy(), coef.copy()
            getattr(plus, name)[idx] += 1e-6
            getattr(minus, name)[idx] -= 1e-6
            fd = (composite_loss(data, plus, grid) - composite_loss(data, minus, grid)) / 2e-6
            assert g[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_degrees_of_freedom_counts_effective_terms():
    coef = CoefficientSet([0.0], [1.0, 1.0], [0.0, 2.0, 1.0], gamma=[[3.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
    # beta: 2 nonzero; eta: (0,1) and (1,2) nonzero, (0,0) killed by beta_0 = 0
    assert degrees_of_freedom(coef) == 4
