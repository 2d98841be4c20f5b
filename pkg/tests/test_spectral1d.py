import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abloop.spectral1d import (LongitudinalProblem, RootBracketError, TransverseProblem, is_smooth,
                               solve_comparison, solve_longitudinal, solve_longitudinal_fd, solve_U_pm,
                               transverse_grid_oracle, transverse_oracle_extrapolated, transverse_secular)


def circle_oracle(c0, n=5):
    k = np.arange(-10, 11)
    return np.sort((k - c0) ** 2 - 0.25)[:n]


@pytest.mark.parametrize("c0", [0.0, 0.25, 0.5, 0.8])
def test_circle_comparison(circle, c0):
    np.testing.assert_allclose(solve_comparison(circle, c0, 5), circle_oracle(c0), atol=1e-10)


def test_periodic_ignores_flux(circle):
    np.testing.assert_allclose(solve_comparison(circle, 0.3, 3, bc="periodic"), [-0.25, 0.75, 0.75], atol=1e-10)


def test_fd_agrees_with_fourier(wobbly):
    from abloop.spectral1d import comparison_problem

    prob = comparison_problem(wobbly, 0.3, 4, n_q=4096)  # FD nodes are sample points
    a = solve_longitudinal(prob).eigenvalues
    b = solve_longitudinal_fd(prob, n=2048).eigenvalues
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_nonsmooth_falls_back():
    q = np.where(np.arange(512) < 256, 0.0, 1.0)
    assert not is_smooth(q)
    res = solve_longitudinal(LongitudinalProblem(2 * np.pi, 1.0, q, "periodic", 0.0, 2))
    assert "nonsmooth-q" in res.flags


def test_stiffness_must_be_positive():
    with pytest.raises(ValueError):
        LongitudinalProblem(1.0, 0.0, np.zeros(8))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0))
def test_flux_symmetry(c0):
    from abloop.curve import build_frame, perturbed_circle_spec

    f = _frame()
    np.testing.assert_allclose(solve_comparison(f, c0, 3), solve_comparison(f, 1 - c0, 3), atol=1e-9)


_cache = {}


def _frame():
    from abloop.curve import build_frame, perturbed_circle_spec

    if "f" not in _cache:
        _cache["f"] = build_frame(perturbed_circle_spec(0.3))
    return _cache["f"]


def test_u_pm_ordering(wobbly):
    mu = solve_comparison(wobbly, 0.25, 3)
    up = solve_U_pm(wobbly, 0.25, 0.05, "+", 3)
    um = solve_U_pm(wobbly, 0.25, 0.05, "-", 3)
    assert np.all(um <= mu) and np.all(mu <= up)


def test_dirichlet_zero_coupling():
    r = transverse_grid_oracle(TransverseProblem(0.5, 0.0), m=2000, n_eigs=1)
    assert r.eigenvalues[0] == pytest.approx((np.pi / 1.0) ** 2, rel=1e-5)


def test_secular_matches_oracle():
    for boundary in ("dirichlet", "robin"):
        p = TransverseProblem(0.4, 20.0, boundary, 1.0)
        z = transverse_secular(p).zeta
        ext, err = transverse_oracle_extrapolated(p, n_eigs=1)
        assert abs(ext[0] - z) <= 1e-6 * abs(z)


def test_line_delta_limit():
    z = transverse_secular(TransverseProblem(5.0, 10.0)).zeta
    assert z == pytest.approx(-25.0, abs=1e-12)


def test_regime_enforced():
    p = TransverseProblem(0.3, 8.0)
    assert not p.in_regime()
    with pytest.raises(ValueError, match="regime"):
        transverse_secular(p)
    assert "outside-proposition-regime" in transverse_secular(p, strict=False).flags


def test_robin_without_root():
    with pytest.raises(RootBracketError):
        transverse_secular(TransverseProblem(2.0, 10.0, "robin", 1.0), strict=False)


@settings(max_examples=25, deadline=None)
@given(st.floats(9.0, 80.0), st.floats(0.1, 0.5))
def test_secular_residual_and_order(beta, a):
    p = TransverseProblem(a, beta, "dirichlet")
    m = TransverseProblem(a, beta, "robin", 1.0)
    if p.in_regime() and m.in_regime():
        zp, zm = transverse_secular(p), transverse_secular(m)
        assert zm.zeta <= -beta**2 / 4 <= zp.zeta
        assert zp.residual < 1e-8 * beta
