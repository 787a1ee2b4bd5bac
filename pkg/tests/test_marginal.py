import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothbf.density import estimate_marginals, kernel_weights
from smoothbf.errors import DataError
from smoothbf.kernels import Biweight, BoundaryKernel
from smoothbf.marginal import (local_linear_marginal, marginal_fit, noise_weights, normalize,
                               nw_marginal)
from smoothbf.numerics import Grid1D, GridFn, integrate

GRID = Grid1D(0.0, 1.0, 101)


def bk(h=0.15, mode="corrected"):
    return BoundaryKernel(Biweight(), h, 0.0, 1.0, "K", mode)


@pytest.mark.parametrize("mode", ["corrected", "conventional"])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_linear_reproduction(mode, seed, a, b):
    x = np.random.default_rng(seed).uniform(size=300)
    k = bk(0.2, mode)
    marg = estimate_marginals(x, k, GRID)
    level, slope = local_linear_marginal(x, a + b * x, k, marg)
    np.testing.assert_allclose(level.values, a + b * GRID.points, atol=1e-8)
    np.testing.assert_allclose(slope.values, b, atol=1e-8)


def test_constant_response():
    x = np.random.default_rng(0).uniform(size=200)
    level, slope = local_linear_marginal(x, np.full(200, 2.5), bk(), grid=GRID)
    np.testing.assert_allclose(level.values, 2.5, atol=1e-10)
    np.testing.assert_allclose(slope.values, 0.0, atol=1e-8)
    np.testing.assert_allclose(nw_marginal(x, np.full(200, 2.5), bk(), GRID).values, 2.5,
                               atol=1e-12)


def test_small_instance_against_normal_equations():
    rng = np.random.default_rng(11)
    x = np.array([0.3, 0.4, 0.5, 0.6, 0.7]) + rng.uniform(-0.02, 0.02, 5)
    y = rng.normal(size=5)
    g = Grid1D(0.0, 1.0, 21)
    k = BoundaryKernel(Biweight(), 0.45, 0.0, 1.0, "K", "conventional")
    level, slope = local_linear_marginal(x, y, k, estimate_marginals(x, k, g, clip=False))
    for i, u in enumerate(g.points):
        w = Biweight()((x - u) / 0.45) / 0.45
        Z = np.column_stack([np.ones(5), x - u])
        coef = np.linalg.solve(Z.T @ (w[:, None] * Z), Z.T @ (w * y))
        assert level.values[i] == pytest.approx(coef[0], rel=1e-9, abs=1e-10)
        assert slope.values[i] == pytest.approx(coef[1], rel=1e-9, abs=1e-10)


def test_weighted_sums_are_the_marginal_densities():
    x = np.random.default_rng(1).uniform(size=100)
    k = bk()
    marg = estimate_marginals(x, k, GRID)
    W, D = kernel_weights(x, k, GRID)
    np.testing.assert_array_equal(marg.weights, W)
    np.testing.assert_array_equal(W.sum(axis=1) / 100, marg.p_hat.values)
    np.testing.assert_array_equal((W * D).sum(axis=1) / 100, marg.p_star.values)


def test_normalize():
    x = np.random.default_rng(2).uniform(size=300)
    marg = estimate_marginals(x, bk(), GRID)
    c = GridFn(GRID, np.full(GRID.m, 4.0))
    np.testing.assert_allclose(normalize(c, marg).values, 0.0, atol=1e-12)
    f = GridFn(GRID, np.random.default_rng(3).normal(size=GRID.m))
    once = normalize(f, marg)
    assert abs(integrate(once * marg.p_tilde)) <= 1e-10 * integrate(marg.p_tilde)
    np.testing.assert_allclose(normalize(once, marg).values, once.values, atol=1e-14)


def test_marginal_fit_is_centred():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=300)
    y = np.sin(3 * x) + 0.1 * rng.normal(size=300)
    marg = estimate_marginals(x, bk(), GRID)
    mf = marginal_fit(x, y, bk(), marg)
    assert abs(integrate(mf.m_tilde * marg.p_tilde)) < 1e-12


def test_nw_is_not_linear_at_the_boundary():
    rng = np.random.default_rng(5)
    x = rng.beta(1, 3, 400)
    y = 1.0 + 2.0 * x
    k = bk(0.2, "conventional")
    nw = nw_marginal(x, y, k, GRID)
    ll, _ = local_linear_marginal(x, y, k, grid=GRID)
    assert abs(nw.values[0] - 1.0) > 0.05
    assert abs(ll.values[0] - 1.0) < 1e-8


def test_nw_local_average():
    x = np.array([0.49, 0.5, 0.51, 0.9, 0.95])
    y = np.array([1.0, 2.0, 3.0, 50.0, 60.0])
    k = BoundaryKernel(Biweight(), 0.05, 0.0, 1.0, "K", "conventional")
    g = Grid1D(0.45, 0.55, 11)
    w = Biweight()((x[:3] - 0.5) / 0.05)
    assert nw_marginal(x, y, k, g).values[5] == pytest.approx(w @ y[:3] / w.sum())


def test_noise_weights_rows():
    x = np.random.default_rng(6).uniform(size=200)
    marg = estimate_marginals(x, bk(), GRID)
    np.testing.assert_allclose(noise_weights(marg).sum(axis=1), 1.0, rtol=1e-12)


def test_response_validation():
    x = np.random.default_rng(7).uniform(size=50)
    with pytest.raises(DataError):
        local_linear_marginal(x, np.ones(49), bk(), grid=GRID)
    with pytest.raises(DataError):
        local_linear_marginal(x, np.full(50, np.nan), bk(), grid=GRID)
    with pytest.raises(DataError):
        local_linear_marginal(x, np.ones(50), bk())
