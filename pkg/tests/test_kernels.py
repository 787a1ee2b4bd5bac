import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from smoothbf.errors import ConfigError, DomainError
from smoothbf.kernels import (CONVENTIONAL, Biweight, BoundaryKernel, C_K_ell, biweight,
                              eval_conventional, eval_Kh, eval_Lh, make_L, mu_K, mu_L_star,
                              quad_moment)

K = biweight()
L = make_L(K)
SQ2 = np.sqrt(2.0)


def qmom(kern, ell, a, b):
    """Independent quadrature oracle."""
    lo, hi = max(a, -kern.support), min(b, kern.support)
    if hi <= lo:
        return 0.0
    pts = [p for p in (-1 / SQ2, 0.0, 1 / SQ2, -1.0, 1.0) if lo < p < hi]
    return quad(lambda t: t**ell * float(kern(t)), lo, hi, points=pts or None,
                epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def test_biweight_values():
    assert K(0.0) == 0.9375
    assert K(1.5) == 0.0 and K(-1.0) == 0.0
    assert K(0.5) == pytest.approx(0.52734375)


def test_biweight_moments():
    assert K.moment(0, -1, 1) == pytest.approx(1.0, abs=1e-12)
    assert K.moment(2, -1, 1) == pytest.approx(1 / 7, abs=1e-12)
    assert K.moment(1, 0, 1) == pytest.approx(5 / 32, abs=1e-12)
    assert qmom(K, 2, -1, 1) == pytest.approx(1 / 7, abs=1e-12)
    assert qmom(K, 1, 0, 1) == pytest.approx(5 / 32, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 4), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_biweight_closed_form_matches_quadrature(ell, a, b):
    a, b = min(a, b), max(a, b)
    assert K.moment(ell, a, b) == pytest.approx(qmom(K, ell, a, b), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2))
def test_kernels_are_symmetric(u):
    assert K(u) == pytest.approx(K(-u), abs=1e-15)
    assert L(u) == pytest.approx(L(-u), abs=1e-15)


def test_constants():
    assert K.second_moment == pytest.approx(1 / 7, abs=1e-15)
    assert K.roughness == pytest.approx(quad(lambda t: K(t) ** 2, -1, 1)[0], abs=1e-12)
    assert K.roughness == pytest.approx(5 / 7, abs=1e-15)


def test_compensating_kernel():
    assert L.support == pytest.approx(SQ2)
    for ell, want in enumerate((1.0, 0.0, -1 / 7)):
        assert L.moment(ell, -SQ2, SQ2) == pytest.approx(want, abs=1e-10)
        assert qmom(L, ell, -SQ2, SQ2) == pytest.approx(want, abs=1e-10)
    assert L(0.0) == pytest.approx(0.9375 * (2 * SQ2 - SQ2 / 2), abs=1e-12)
    assert L(0.0) == pytest.approx(1.988738, abs=1e-6)
    assert L(1.5) == 0.0 and L(-1.42) == 0.0
    assert L.second_moment == pytest.approx(-1 / 7)
    assert L(1.2) < 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_L_scaling_identity_matches_quadrature(ell, a, b):
    a, b = min(a, b), max(a, b)
    assert L.moment(ell, a, b) == pytest.approx(qmom(L, ell, a, b), abs=1e-11)


def test_generic_quadrature_path():
    assert quad_moment(K, 2, -1, 1) == pytest.approx(1 / 7, abs=1e-12)


def bk(h=0.1, lo=0.0, hi=1.0, side="K", mode="corrected"):
    return BoundaryKernel(K if side == "K" else L, h, lo, hi, side, mode)


def test_mu_K_values():
    k = bk()
    np.testing.assert_allclose([mu_K(k, 0.5, ell) for ell in range(3)], [1, 0, 1 / 7],
                               atol=1e-14)
    assert mu_K(k, 0.0, 0) == pytest.approx(0.5)
    assert mu_K(k, 0.0, 1) == pytest.approx(5 / 32)
    assert mu_K(k, 0.0, 2) == pytest.approx(1 / 14)
    assert mu_K(k, 1.0, 1) == pytest.approx(-5 / 32)
    with pytest.raises(DomainError):
        mu_K(k, 1.2, 0)
    with pytest.raises(ConfigError):
        mu_K(bk(side="L"), 0.5, 0)


def test_mu_L_star_values():
    b = bk(side="L")
    np.testing.assert_allclose([mu_L_star(b, 0.5, ell) for ell in range(3)], [1, 0, -1 / 7],
                               atol=1e-12)
    assert mu_L_star(b, 1.0, 0) == pytest.approx(0.5)
    # the right tail first moment of L vanishes for the biweight base
    right_tail = qmom(L, 1, 0, SQ2)
    assert mu_L_star(b, 0.0, 1) == pytest.approx(-right_tail, abs=1e-12)
    assert mu_L_star(b, 1.0, 1) == pytest.approx(right_tail, abs=1e-12)


def test_eval_Kh_examples():
    k = bk()
    assert eval_Kh(k, np.array([0.5]), np.array([0.55]))[0, 0] == pytest.approx(5.2734375)
    # mu2 / (mu0 mu2 - mu1^2) * K(0) / h with mu = (1/2, 5/32, 1/14)
    assert eval_Kh(k, np.array([0.0]), np.array([0.0]))[0, 0] == pytest.approx(1600 / 27)
    with pytest.raises(ConfigError):
        eval_Kh(bk(side="L"), [0.5], [0.5])


def test_eval_Lh_examples():
    b = bk(side="L")
    u = np.linspace(0.3, 0.7, 9)
    np.testing.assert_allclose(eval_Lh(b, u, np.array([0.5]))[:, 0], L((0.5 - u) / 0.1) / 0.1,
                               rtol=1e-13)
    # right edge, u = v: (mu*2 - 0) / (mu*0 mu*2 - mu*1^2) L(0) / h
    m0, m1, m2 = 0.5, qmom(L, 1, 0, SQ2), -1 / 14
    want = m2 / (m0 * m2 - m1**2) * L(0.0) / 0.1
    assert eval_Lh(b, np.array([1.0]), np.array([1.0]))[0, 0] == pytest.approx(want)
    assert want == pytest.approx(39.7747564417433)


def test_eval_conventional():
    assert eval_conventional(K, 0.2, 0.3, 0.3) == pytest.approx(0.9375 / 0.2)
    assert eval_conventional(K, 0.2, 0.2, 0.3) == pytest.approx(2.63671875)
    assert eval_conventional(K, 0.2, 0.0, 0.25) == 0.0
    with pytest.raises(ConfigError):
        eval_conventional(K, 0.0, 0.1, 0.1)


def _moment_check_points(h):
    return np.concatenate([[0.0, h / 2, 0.5, 1.0 - h / 2, 1.0],
                           np.random.default_rng(3).uniform(0, 1, 45)])


@pytest.mark.parametrize("h", [0.05, 0.2, 0.45])
def test_K_moment_conditions_by_quadrature(h):
    k = bk(h)
    for u in _moment_check_points(h):
        for ell, want in ((0, 1.0), (1, 0.0)):
            val = quad(lambda v: (v - u) ** ell * k(np.array([u]), np.array([v]))[0, 0],
                       max(0.0, u - h), min(1.0, u + h), epsabs=1e-13, limit=200)[0]
            assert val == pytest.approx(want, abs=1e-8)


@pytest.mark.parametrize("h", [0.05, 0.2, 0.3])
def test_L_moment_conditions_by_quadrature(h):
    b = bk(h, side="L")
    s = SQ2 * h
    for v in _moment_check_points(h):
        pts = [p for p in (v - h / SQ2, v, v + h / SQ2, v - h, v + h) if 0 < p < 1]
        for ell, want in ((0, 1.0), (1, 0.0)):
            val = quad(lambda u: (v - u) ** ell * b(np.array([u]), np.array([v]))[0, 0],
                       max(0.0, v - s), min(1.0, v + s), points=pts or None,
                       epsabs=1e-13, limit=200)[0]
            assert val == pytest.approx(want, abs=1e-8)


def test_corrected_equals_conventional_in_interior():
    for side in "KL":
        c, p = bk(0.1, side=side), bk(0.1, side=side, mode=CONVENTIONAL)
        u = np.linspace(0.2, 0.8, 13)
        v = np.linspace(0.2, 0.8, 17)
        np.testing.assert_allclose(c(u, v), p(u, v), atol=1e-13, rtol=1e-14)


def test_conventional_mode_is_plain_kernel():
    p = bk(0.1, mode=CONVENTIONAL)
    u, v = np.array([0.0, 0.02]), np.array([0.0, 0.05])
    np.testing.assert_allclose(p(u, v), eval_conventional(K, 0.1, u[:, None], v[None, :]))


def test_C_K_ell():
    k = bk(0.1)
    x = np.linspace(0, 1, 51)
    np.testing.assert_allclose(C_K_ell(k, x, 0), 1.0, atol=1e-12)
    np.testing.assert_allclose(C_K_ell(k, x, 1), 0.0, atol=1e-12)
    inner = x[(x >= 0.1 - 1e-12) & (x <= 0.9 + 1e-12)]
    np.testing.assert_allclose(C_K_ell(k, inner, 2), 1 / 7, atol=1e-12)
    mu3 = 0.9375 * (1 / 4 - 2 / 6 + 1 / 8)
    det = 1 / 28 - (5 / 32) ** 2
    assert C_K_ell(k, 0.0, 2) == pytest.approx(((1 / 14) ** 2 - 5 / 32 * mu3) / det)


@pytest.mark.parametrize("h, lo, hi", [(0.0, 0, 1), (0.5, 0, 1), (-0.1, 0, 1), (0.1, 1, 0)])
def test_bandwidth_validation(h, lo, hi):
    with pytest.raises(ConfigError):
        BoundaryKernel(Biweight(), h, lo, hi)


def test_on_grid_requires_L_and_matching_grid():
    from smoothbf.numerics import Grid1D
    with pytest.raises(ConfigError):
        bk().on_grid(Grid1D(0, 1, 11))
    with pytest.raises(ConfigError):
        bk(side="L").on_grid(Grid1D(0, 2, 11))
