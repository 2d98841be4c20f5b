import math

import numpy as np
import pytest

from abloop.bracketing import (BracketConfig, bracket, check_est1, check_est2, est2_bounds,
                               halfwidth_schedule, loglog_slope, tau)


def test_schedule_values(circle):
    assert halfwidth_schedule(100.0) == pytest.approx(6 * math.log(100) / 100)
    a = halfwidth_schedule(math.e, circle)
    assert a.clamped and a.raw == pytest.approx(6 / math.e)
    assert float(a) == pytest.approx(0.99 * 0.5)
    assert not halfwidth_schedule(100.0, circle).clamped
    with pytest.raises(ValueError):
        halfwidth_schedule(1.0)


def test_schedule_monotone_beyond_e():
    b = np.geomspace(3, 1e4, 40)
    a = [halfwidth_schedule(x) for x in b]
    assert np.all(np.diff(a) < 0)


def test_config_invariants(circle):
    with pytest.raises(ValueError):
        BracketConfig(circle, 0.25, -1.0)
    with pytest.raises(ValueError):
        BracketConfig(circle, 0.25, 20.0, a=0.6)
    with pytest.raises(ValueError):
        BracketConfig(circle, 0.25, 20.0, n=0)
    assert BracketConfig(circle, 0.25, 20.0).clamped


def test_construction_identity(circle):
    cfg = BracketConfig(circle, 0.25, 80.0, n=3)
    for sign in "+-":
        t = tau(cfg, sign)
        np.testing.assert_allclose(t.tau, t.zeta + t.mu_pm, rtol=1e-14, atol=0)
        assert t.ordering_ok


def test_bracket_ordering_and_error(circle):
    rep = bracket(BracketConfig(circle, 0.25, 100.0, n=2))
    assert rep.ordered
    assert rep.flags == ()
    assert np.all(rep.err_plus > 0) and np.all(rep.err_minus < 0)
    rep2 = bracket(BracketConfig(circle, 0.25, 200.0, n=2))
    assert np.all(np.abs(rep2.err_plus) < np.abs(rep.err_plus))


def test_out_of_regime_is_flagged(circle):
    rep = bracket(BracketConfig(circle, 0.25, 6.0, a=0.3))
    assert any(f.startswith("est2") for f in rep.flags)
    assert np.all(np.isfinite(rep.plus.tau))


def test_loglog_slope():
    x = np.geomspace(1, 100, 5)
    assert loglog_slope(x, 3 * x**1.5) == pytest.approx(1.5)


def test_est1_circle(circle):
    r = check_est1(circle, 1, np.geomspace(1e-3, 1e-1, 5), (0.25, 0.5))
    assert r.passed and 0.9 <= r.min_slope <= 1.2
    assert np.isfinite(r.constant)
    d = r.deviations[(0.25, "+")]
    assert d[0] < d[-1] and d[0] < 1e-2


def test_est1_periodic_breaks_down(circle):
    r = check_est1(circle, 1, np.geomspace(1e-3, 1e-1, 5), (0.25, 0.75), bc="periodic")
    assert not r.passed


def test_est2_example():
    r = check_est2(10.0, 1.0, 1.0)
    assert r.ok
    assert r.negative_count == {"plus": 1, "minus": 1}
    lo, hi = r.margins["plus-scaled"]
    assert lo > 0 and hi > 0


def test_est2_skip_out_of_regime():
    r = check_est2(2.0, 0.5, 1.0)
    assert "plus:skip-outside-regime" in r.flags and "minus:skip-outside-regime" in r.flags
    assert r.ok


def test_est2_bounds_shape():
    b = est2_bounds(10.0, 1.0, "printed")
    assert b["plus"][0] == -25.0 and b["minus"][1] == -25.0
    assert est2_bounds(10.0, 1.0, "scaled") == b
