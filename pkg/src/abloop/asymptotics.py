"""Coupling and flux sweeps, envelope fits, CSV/SVG reports."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bracketing import BracketConfig, bracket
from .curve import FrameField, StripError
from .spectral1d import solve_comparison
from .strip2d import StripGrid, auto_grid, converged_eigs

BASE_COLUMNS = ("param", "j", "mu", "zeta_plus", "zeta_minus", "tau_plus", "tau_minus",
                "kappa_plus", "kappa_minus", "err", "regime_flags")
FLUX_COLUMNS = BASE_COLUMNS + ("lambda_mid", "current")
FIT_RESIDUAL_MAX = 0.25
ODDNESS_TOL = 0.05
VARIATION_FACTOR = 10.0

NAN = float("nan")


@dataclass(frozen=True)
class SweepRecord:
    param: float
    j: int
    mu: float
    zeta_plus: float = NAN
    zeta_minus: float = NAN
    tau_plus: float = NAN
    tau_minus: float = NAN
    kappa_plus: float = NAN
    kappa_minus: float = NAN
    err: float = NAN
    regime_flags: tuple = ()
    kappa_tol: float = NAN
    lambda_mid: float = NAN
    current: float = NAN

    def row(self, columns) -> list:
        out = []
        for c in columns:
            v = getattr(self, c)
            if c == "regime_flags":
                out.append(";".join(v))
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(v)
        return out


@dataclass
class SweepReport:
    kind: str                     # "beta" or "flux"
    axis: np.ndarray
    records: list
    fit: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def series(self, name: str, j: int = 1) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records if r.j == j])

    @property
    def passed(self) -> bool:
        return all(v for v in self.verdicts.values() if v is not None)

    @property
    def columns(self) -> tuple:
        return FLUX_COLUMNS if self.kind == "flux" else BASE_COLUMNS


# -- fits ---------------------------------------------------------------------

def fit_envelope(betas, errors) -> tuple[float, float]:
    """Least squares for ``log(e beta / ln beta) = log C``.

    Returns ``(C, rms)``; the residual is the root-mean-square deviation in
    natural-log units, so scaling every error leaves it unchanged.
    """
    b, e = np.asarray(betas, float), np.asarray(errors, float)
    y = np.log(e * b / np.log(b))
    c = y.mean()
    return float(math.exp(c)), float(np.sqrt(np.mean((y - c) ** 2)))


def power_slope(betas, errors) -> float:
    return float(np.polyfit(np.log(betas), np.log(errors), 1)[0])


# -- single points ----------------------------------------------------------------

def _point(frame, c0, beta, n, *, bc, coeffs, method, grid_spec, a=None):
    flags = []
    mu = solve_comparison(frame, c0, n, bc=bc)
    nan = np.full(n, NAN)
    tp = tm = nan
    zp = zm = NAN
    cfg = BracketConfig(frame, c0, beta, a, n, bc, coeffs)
    a = float(cfg.a)
    try:
        rep = bracket(cfg)
        tp, tm = rep.plus.tau, rep.minus.tau
        zp, zm = rep.plus.zeta, rep.minus.zeta
        flags.extend(rep.flags)
    except ValueError as exc:
        flags.append("bracket:unavailable")
        flags.append(str(exc).split(";")[0].replace(",", " "))
        if cfg.clamped:
            flags.insert(0, "a-clamped")
    kp = km = nan
    tol = nan
    try:
        grid = _grid_for(beta, a, method, grid_spec)
        cp = converged_eigs(frame, c0, a, beta, "b+", grid, n, coeffs=coeffs)
        cm = converged_eigs(frame, c0, a, beta, "b-", grid, n, coeffs=coeffs)
        kp, km = cp.values, cm.values
        tol = np.maximum(cp.tol, cm.tol)
        flags.append(f"grid:{grid.n_s}x{grid.n_u}:{grid.method}")
        ok = (np.all(tm - tol <= km) if np.all(np.isfinite(tm)) else True) \
            and np.all(km <= kp + tol) \
            and (np.all(kp <= tp + tol) if np.all(np.isfinite(tp)) else True)
        flags.append("sandwich:ok" if ok else "sandwich:violated")
    except StripError as exc:
        flags.append("skip:resolution")
        flags.append(str(exc).split(";")[0].replace(",", " "))
    return dict(a=a, mu=mu, tp=tp, tm=tm, zp=zp, zm=zm, kp=kp, km=km, tol=tol, flags=tuple(flags))


def _grid_for(beta, a, method, grid_spec):
    if grid_spec is None:
        return auto_grid(beta, a, method)
    ns, nu = grid_spec
    return StripGrid(ns, nu, a, method)


def _run(fn, params, threads):
    threads = threads or os.cpu_count() or 1
    if threads == 1 or len(params) <= 1:
        results = [fn(p) for p in params]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, params))
    return dict(sorted(zip(params, results)))


def _records(param, pt, n, beta):
    recs = []
    for j in range(n):
        kp, km = float(pt["kp"][j]), float(pt["km"][j])
        err = max(abs(kp + beta**2 / 4 - pt["mu"][j]), abs(km + beta**2 / 4 - pt["mu"][j]))
        recs.append(SweepRecord(float(param), j + 1, float(pt["mu"][j]), float(pt["zp"]), float(pt["zm"]),
                                float(pt["tp"][j]), float(pt["tm"][j]), kp, km, float(err), pt["flags"],
                                float(pt["tol"][j])))
    return recs


def _check_axis(values, lo=None, hi=None):
    v = np.asarray(values, float)
    if v.ndim != 1:
        raise ValueError("sweep axis must be one-dimensional")
    if len(v) > 1 and np.any(np.diff(v) <= 0):
        raise ValueError("sweep axis must be strictly increasing")
    if lo is not None and np.any(v <= lo) or hi is not None and np.any(v >= hi):
        raise ValueError(f"sweep axis must lie in ({lo}, {hi})")
    return v


# -- sweeps ------------------------------------------------------------------------

def beta_sweep(frame: FrameField, c0: float, betas, n: int = 1, *, bc: str = "twisted",
               coeffs: str = "derived", method: str = "spectral", grid=None,
               threads: int | None = None) -> SweepReport:
    """Error ``e_j = max_+- |kappa_j^+- + beta^2/4 - mu_j|`` along ``betas`` and its envelope fit."""
    betas = _check_axis(betas, lo=1.0)
    pts = _run(lambda b: _point(frame, c0, b, n, bc=bc, coeffs=coeffs, method=method, grid_spec=grid),
               [float(b) for b in betas], threads)
    records = [r for b, pt in pts.items() for r in _records(b, pt, n, b)]
    rep = SweepReport("beta", betas, records, provenance=_prov(frame, "beta", c0=c0, n=n, bc=bc,
                                                                  coeffs=coeffs, method=method, grid=grid))
    e = rep.series("err", 1)
    ok = np.isfinite(e) & (e > 0)
    rep.verdicts["sandwich"] = all("sandwich:violated" not in r.regime_flags for r in records) \
        if records else None
    if ok.sum() >= 2:
        C, res = fit_envelope(betas[ok], e[ok])
        rep.fit.update(C=C, residual=res, slope=power_slope(betas[ok], e[ok]),
                       C_envelope=float(np.max(e[ok] * betas[ok] / np.log(betas[ok]))))
        w = np.maximum(np.abs(rep.series("tau_plus") + betas**2 / 4 - rep.series("mu")),
                       np.abs(rep.series("tau_minus") + betas**2 / 4 - rep.series("mu")))
        if np.all(np.isfinite(w)):
            Ct, rt = fit_envelope(betas, w)
            rep.fit.update(C_tau=Ct, residual_tau=rt)
        rep.verdicts["monotone"] = bool(ok.all() and np.all(np.diff(e) < 0))
        rep.verdicts["fit"] = res <= FIT_RESIDUAL_MAX
    else:
        rep.verdicts["monotone"] = None
        rep.verdicts["fit"] = None
    return rep


def flux_sweep(frame: FrameField, beta: float, c0s, n: int = 1, *, bc: str = "twisted",
               coeffs: str = "derived", method: str = "spectral", grid=None,
               threads: int | None = None) -> SweepReport:
    """Bracket midpoints of ``lambda_n`` over the flux grid and their flux derivative."""
    c0s = _check_axis(c0s, lo=0.0, hi=1.0)
    pts = _run(lambda c: _point(frame, c, beta, n, bc=bc, coeffs=coeffs, method=method, grid_spec=grid),
               [float(c) for c in c0s], threads)
    base = [r for c, pt in pts.items() for r in _records(c, pt, n, beta)]
    records, fit, verdicts = [], {}, {}
    for j in range(1, n + 1):
        rj = [r for r in base if r.j == j]
        mid = np.array([0.5 * (r.kappa_plus + r.kappa_minus) for r in rj])
        cur = np.gradient(mid, c0s) if len(rj) > 1 else np.full(len(rj), NAN)
        for r, m, i in zip(rj, mid, cur):
            records.append(replace(r, lambda_mid=float(m), current=float(i)))
        width = np.array([0.5 * abs(r.kappa_plus - r.kappa_minus) + r.kappa_tol for r in rj])
        var = float(np.nanmax(mid) - np.nanmin(mid)) if len(rj) else NAN
        tol = float(np.nanmax(width)) if len(rj) else NAN
        mus = np.array([r.mu for r in rj])
        fit[f"variation_{j}"] = var
        fit[f"bracket_tol_{j}"] = tol
        fit[f"mu_variation_{j}"] = float(mus.max() - mus.min()) if len(rj) else NAN
        verdicts[f"nonconstant_{j}"] = bool(var > VARIATION_FACTOR * tol) if len(rj) > 1 else None
        odd = _oddness(c0s, cur)
        fit[f"oddness_{j}"] = odd
        verdicts[f"odd_{j}"] = None if odd is None else bool(odd <= ODDNESS_TOL)
    records.sort(key=lambda r: (r.param, r.j))
    return SweepReport("flux", c0s, records, fit, verdicts,
                       _prov(frame, "flux", beta=beta, n=n, bc=bc, coeffs=coeffs, method=method, grid=grid))


def _oddness(c0s, cur):
    """``max |I(c) + I(1-c)| / max |I|`` over mirrored grid pairs, or None."""
    pairs = [(i, k) for i, c in enumerate(c0s) for k, d in enumerate(c0s) if i <= k and abs(c + d - 1) < 1e-9]
    scale = np.max(np.abs(cur)) if len(cur) else 0.0
    if not pairs or not scale > 0:
        return None
    return float(max(abs(cur[i] + cur[k]) for i, k in pairs) / scale)


def _prov(frame, kind, **kw):
    g = kw.get("grid")
    kw["grid"] = "auto" if g is None else f"{g[0]}x{g[1]}"
    return {"sweep": kind, "curve": frame.spec.label, "length": frame.length, **kw}


# -- reports --------------------------------------------------------------------------

def emit_report(report: SweepReport, out_dir, *, formats=("csv", "svg"), stem: str | None = None) -> list[Path]:
    """Write ``<stem>.csv`` and (if non-empty) ``<stem>.svg`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    stem = stem or f"sweep_{report.kind}"
    paths = []
    if "csv" in formats:
        p = out / f"{stem}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(report.columns)
            for r in report.records:
                w.writerow(r.row(report.columns))
        paths.append(p)
    if "svg" in formats and report.records:
        p = out / f"{stem}.svg"
        _plot(report, p)
        paths.append(p)
    return paths


def _plot(report: SweepReport, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "abloop", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(10, 7), dpi=100)
        js = sorted({r.j for r in report.records})
        if report.kind == "beta":
            for j in js:
                b, e = report.axis, report.series("err", j)
                ax.loglog(b, e, "o-", label=f"e_{j}")
            if "C" in report.fit:
                b = np.geomspace(report.axis[0], report.axis[-1], 50)
                ax.loglog(b, report.fit["C"] * np.log(b) / b, "--", label="C ln(beta)/beta")
            ax.set_xlabel("beta")
            ax.set_ylabel("|kappa + beta^2/4 - mu|")
        else:
            for j in js:
                c = report.axis
                ax.plot(c, report.series("lambda_mid", j), "o-", label=f"lambda_{j} midpoint")
                ax.fill_between(c, report.series("kappa_minus", j), report.series("kappa_plus", j), alpha=0.3)
            ax.set_xlabel("c0 (flux / flux quantum)")
            ax.set_ylabel("eigenvalue")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
