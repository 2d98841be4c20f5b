import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abloop.curve import (CurveError, CurveSpec, StripError, build_frame, circle_spec, coeff_bounds,
                          effective_potential, gauge_phase, gauge_phase_ds, omega, strip_fields,
                          strip_map, theta)


def test_circle_frame(circle):
    assert circle.gamma_plus == pytest.approx(1.0)
    assert circle.a1 == pytest.approx(1.0)
    assert circle.closure_residual < 1e-10
    r = np.hypot(circle.x, circle.y)
    np.testing.assert_allclose(r, 1.0, atol=1e-12)


def test_tangent_angle_is_minus_curvature_primitive(wobbly):
    s = wobbly.s
    H_expected = -(s * -1.0 + 0.3 * np.sin(2 * s) / 2)
    np.testing.assert_allclose(wobbly.H, H_expected, atol=1e-12)


def test_unit_tangent(wobbly):
    p = wobbly.at(np.linspace(0, wobbly.length, 50))
    np.testing.assert_allclose(np.hypot(p.tx, p.ty), 1.0, atol=1e-12)


def test_straight_line_rejected():
    with pytest.raises(CurveError, match="does not close"):
        build_frame(CurveSpec(5.0, "fourier", ((0.0, 0.0),)))


def test_perturbed_circle_closes(wobbly):
    assert wobbly.gamma_plus == pytest.approx(1.3)
    assert wobbly.closure_residual < 1e-10
    assert abs(np.mean(wobbly.gamma) * wobbly.length + 2 * math.pi) < 1e-10


def test_samples_and_fourier_agree():
    s = np.arange(64) * 2 * np.pi / 64
    spec = CurveSpec(2 * np.pi, "samples", tuple(-1 + 0.2 * np.cos(2 * s)))
    f1 = build_frame(spec)
    f2 = build_frame(CurveSpec(2 * np.pi, "fourier", ((-1, 0), (0, 0), (0.2, 0))))
    np.testing.assert_allclose(f1.at(1.234).x, f2.at(1.234).x, atol=1e-12)


def test_json_roundtrip(tmp_path):
    spec = circle_spec(2.0)
    spec.dump(tmp_path / "c.json")
    back = CurveSpec.load(tmp_path / "c.json")
    assert back.length == pytest.approx(spec.length)
    assert back.coefficients()[1] == pytest.approx(spec.coefficients()[1])


def test_malformed_json(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(CurveError):
        CurveSpec.load(tmp_path / "bad.json")
    (tmp_path / "missing.json").write_text('{"length": 1}')
    with pytest.raises(CurveError, match="missing"):
        CurveSpec.load(tmp_path / "missing.json")


def test_strip_map_circle(circle):
    m = strip_map(circle, np.linspace(0, 6, 7), 0.5)
    np.testing.assert_allclose(np.hypot(m.x, m.y), 0.5, atol=1e-12)
    np.testing.assert_allclose(m.jacobian, 0.5)
    assert strip_map(circle, 1.0, 0.995).near_degenerate
    with pytest.raises(StripError):
        strip_map(circle, 1.0, 1.0)


def test_theta_identity(wobbly):
    rng = np.random.default_rng(3)
    s = rng.uniform(0, wobbly.length, 1000)
    u = rng.uniform(-0.7, 0.7, 1000)
    m = strip_map(wobbly, s, u)
    np.testing.assert_allclose(theta(wobbly, s, u) * (m.x**2 + m.y**2), 1.0, rtol=1e-12)


def test_circle_theta_closed_form(circle):
    u = np.linspace(-0.6, 0.6, 9)
    np.testing.assert_allclose(theta(circle, 0.3, u), (1 - u) ** -2, rtol=1e-12)


def test_omega_variants(wobbly):
    s = np.linspace(0, 6, 11)
    d1, d2 = omega(wobbly, s, 0.0, "derived")
    p1, p2 = omega(wobbly, s, 0.0, "paper")
    np.testing.assert_allclose(d2, p2)
    _, d2u = omega(wobbly, s, 0.3, "derived")
    _, p2u = omega(wobbly, s, 0.3, "paper")
    np.testing.assert_allclose(p2u, d2u / (1 + 0.3 * wobbly.at(s).gamma))


def test_omega_squares_sum_to_theta(wobbly):
    s, u = np.meshgrid(np.linspace(0, 6, 13), np.linspace(-0.5, 0.5, 7))
    o1, o2 = omega(wobbly, s, u)
    J = 1 + u * wobbly.at(s).gamma
    np.testing.assert_allclose((J * o1) ** 2 + o2**2, theta(wobbly, s, u), rtol=1e-12)


def test_gauge_phase(wobbly, circle):
    assert np.all(gauge_phase(wobbly, 0.5, np.linspace(0, 6, 5), 0.0) == 0)
    assert np.all(gauge_phase(wobbly, 0.0, 1.0, 0.3) == 0)
    np.testing.assert_allclose(gauge_phase(circle, 0.5, np.linspace(0, 6, 5), 0.2), 0.0, atol=1e-14)
    # independent rule
    from scipy.integrate import quad
    ref = quad(lambda v: 0.5 * omega(wobbly, 1.1, v)[1], 0, 0.2, epsabs=1e-13)[0]
    assert gauge_phase(wobbly, 0.5, 1.1, 0.2) == pytest.approx(ref, abs=1e-10)
    np.testing.assert_allclose(gauge_phase(wobbly, 0.5, 0.0, 0.3), gauge_phase(wobbly, 0.5, wobbly.length, 0.3),
                               atol=1e-12)


def test_gauge_phase_ds_matches_differences(wobbly):
    h = 1e-4
    s = np.array([0.3, 1.7, 4.0])
    fd = (gauge_phase(wobbly, 0.4, s + h, 0.3) - gauge_phase(wobbly, 0.4, s - h, 0.3)) / (2 * h)
    np.testing.assert_allclose(gauge_phase_ds(wobbly, 0.4, s, 0.3), fd, atol=1e-7)


def test_derived_cross_coefficient_vanishes(wobbly):
    u = np.linspace(-0.3, 0.3, 7)
    f = strip_fields(wobbly, 0.4, np.linspace(0, 6, 9), u)
    h = 1e-5
    Kp = gauge_phase(wobbly, 0.4, f.s[:, None], u[None, :] + h)
    Km = gauge_phase(wobbly, 0.4, f.s[:, None], u[None, :] - h)
    np.testing.assert_allclose(0.4 * f.omega2 - (Kp - Km) / (2 * h), 0, atol=1e-8)


def test_effective_potential(wobbly, circle):
    s = np.linspace(0, 6, 9)
    np.testing.assert_allclose(effective_potential(wobbly, s, 0.0), -0.25 * wobbly.at(s).gamma ** 2)
    u = 0.3
    np.testing.assert_allclose(effective_potential(circle, s, u), -0.25 * (1 - u) ** -2)
    # finite-difference oracle on gamma
    h = 1e-4
    g = lambda t: wobbly.at(t).gamma
    s0, u0 = 0.7, 0.2
    dg = (g(s0 + h) - g(s0 - h)) / (2 * h)
    d2g = (g(s0 + h) - 2 * g(s0) + g(s0 - h)) / h**2
    J = 1 + u0 * g(s0)
    V = 0.5 * u0 * d2g / J**3 - 1.25 * u0**2 * dg**2 / J**4 - 0.25 * g(s0) ** 2 / J**2
    assert effective_potential(wobbly, s0, u0) == pytest.approx(V, abs=1e-6)


def test_coeff_bounds(circle, wobbly):
    b = coeff_bounds(circle, 0.25, 0.1)
    assert b.N < 1e-12
    assert b.M == pytest.approx(0.25 * (1 / 0.9**2 - 1), rel=0.05)
    bp = coeff_bounds(circle, 0.25, 0.1, bc="periodic")
    assert bp.N > 0.4
    with pytest.raises(ValueError):
        coeff_bounds(wobbly, 0.25, 0.4)
    small = coeff_bounds(wobbly, 1e-6, 1e-4)
    assert small.N < 1e-5 and small.M < 1e-3


def test_coeff_bounds_linear_in_a(wobbly):
    a = np.geomspace(1e-3, 1e-1, 5)
    nm = [coeff_bounds(wobbly, 0.25, x).N + coeff_bounds(wobbly, 0.25, x).M for x in a]
    slope = np.polyfit(np.log(a), np.log(nm), 1)[0]
    assert slope >= 0.9


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 3.0))
def test_circle_radius_property(R):
    f = build_frame(circle_spec(R))
    assert f.gamma_plus == pytest.approx(1 / R)
    np.testing.assert_allclose(np.hypot(f.x, f.y), R, rtol=1e-10)
