import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abloop.asymptotics import (BASE_COLUMNS, FLUX_COLUMNS, SweepReport, beta_sweep, emit_report,
                                fit_envelope, flux_sweep, power_slope)


@given(st.floats(1e-6, 1e6))
@settings(max_examples=30, deadline=None)
def test_fit_residual_is_scale_free(k):
    b = np.array([20.0, 40.0, 80.0, 160.0])
    e = np.array([0.3, 0.2, 0.09, 0.05])
    C1, r1 = fit_envelope(b, e)
    C2, r2 = fit_envelope(b, k * e)
    assert r2 == pytest.approx(r1, abs=1e-12)
    assert C2 == pytest.approx(k * C1, rel=1e-10)


def test_exact_envelope_fits_perfectly():
    b = np.geomspace(10, 1000, 6)
    C, r = fit_envelope(b, 0.7 * np.log(b) / b)
    assert C == pytest.approx(0.7) and r < 1e-12
    assert power_slope(b, 3 / b**2) == pytest.approx(-2.0)


def test_axis_validation(circle):
    with pytest.raises(ValueError):
        beta_sweep(circle, 0.25, [40.0, 20.0])
    with pytest.raises(ValueError):
        beta_sweep(circle, 0.25, [0.5, 20.0])
    with pytest.raises(ValueError):
        flux_sweep(circle, 20.0, [0.0, 0.5])


def test_single_point_has_no_fit(circle):
    rep = beta_sweep(circle, 0.25, [20.0], grid=(9, 41), threads=1)
    assert rep.fit == {} and rep.verdicts["fit"] is None and rep.verdicts["monotone"] is None
    assert rep.verdicts["sandwich"] is True
    r = rep.records[0]
    assert r.kappa_minus <= r.kappa_plus and r.tau_minus <= r.tau_plus
    assert r.err == pytest.approx(max(abs(r.kappa_plus + 100 - r.mu), abs(r.kappa_minus + 100 - r.mu)))


def test_empty_report_header_only(tmp_path):
    rep = SweepReport("beta", np.array([]), [])
    paths = emit_report(rep, tmp_path)
    assert [p.name for p in paths] == ["sweep_beta.csv"]
    assert (tmp_path / "sweep_beta.csv").read_text() == ",".join(BASE_COLUMNS) + "\n"


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(SweepReport("beta", np.array([]), []), blocker / "sub")


@pytest.fixture(scope="module")
def small_flux(circle):
    return flux_sweep(circle, 20.0, [0.3, 0.5, 0.7], n=1, grid=(9, 41))


def test_flux_sweep_schema_and_symmetry(small_flux, tmp_path):
    rep = small_flux
    assert rep.columns == FLUX_COLUMNS
    mid = rep.series("lambda_mid")
    assert mid[0] == pytest.approx(mid[2], abs=1e-8)
    assert rep.fit["oddness_1"] < 0.05
    # at beta=20 the bracket is still too wide to resolve the flux dependence
    assert rep.fit["variation_1"] == pytest.approx(0.16, abs=0.01)
    assert rep.verdicts["nonconstant_1"] is False
    paths = emit_report(rep, tmp_path, stem="f")
    rows = list(csv.reader(open(paths[0])))
    assert tuple(rows[0]) == FLUX_COLUMNS and len(rows) == 4


def test_reports_are_reproducible(small_flux, tmp_path):
    a = emit_report(small_flux, tmp_path / "a")
    b = emit_report(small_flux, tmp_path / "b")
    for p, q in zip(a, b):
        assert p.read_bytes() == q.read_bytes()
    assert [p.suffix for p in a] == [".csv", ".svg"]
