"""Command-line front end.

Exit status: 0 success, 2 computed but an acceptance rule failed, 1 the run
could not be set up or computed.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .asymptotics import BASE_COLUMNS, beta_sweep, emit_report, flux_sweep
from .bracketing import check_est2, halfwidth_schedule
from .curve import CurveError, CurveSpec, StripError, build_frame, circle_spec, perturbed_circle_spec
from .spectral1d import (RootBracketError, TransverseProblem, solve_comparison,
                         transverse_oracle_extrapolated, transverse_secular)
from .strip2d import EigenSolverError, StripGrid, lemma2_check, sandwich_check

COMMANDS = ("spectrum", "transverse", "bracket", "sweep-beta", "sweep-flux", "lemma2")
DEFAULT_OUT = "abloop-out"
DEFAULTS = {
    "curve": "circle", "c0": 0.25, "c0s": None, "beta": None, "betas": None, "a": None, "n": None,
    "grid": None, "method": None, "bc": "twisted", "coeffs": "derived", "out": None, "threads": None,
    "gamma_plus": 1.0,
}
BUILTIN_CURVES = {"circle": circle_spec, "perturbed-circle": perturbed_circle_spec}


class ConfigError(Exception):
    """Invalid configuration; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="abloop", description="Spectral suite for the Aharonov-Bohm operator "
                "with a strong delta interaction on a loop.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with any of the options below; flags win")
    p.add_argument("--curve", help="curve JSON file, or 'circle' / 'perturbed-circle'")
    p.add_argument("--c0", type=float, help="flux in units of the flux quantum")
    p.add_argument("--c0s", type=_floats, help="comma-separated flux grid for sweep-flux")
    p.add_argument("--beta", type=float, help="coupling strength")
    p.add_argument("--betas", type=_floats, help="comma-separated couplings for sweep-beta")
    p.add_argument("--a", type=float, help="strip halfwidth (default: schedule 6 ln(beta)/beta)")
    p.add_argument("-n", type=int, help="number of eigenvalues")
    p.add_argument("--grid", help="strip grid NSxNU")
    p.add_argument("--method", choices=("fv", "spectral"), help="strip discretization")
    p.add_argument("--bc", choices=("twisted", "periodic"))
    p.add_argument("--coeffs", choices=("derived", "paper"))
    p.add_argument("--gamma-plus", dest="gamma_plus", type=float,
                   help="curvature bound for the transverse command")
    p.add_argument("--out", help="output directory (default $ABLOOP_OUT or ./abloop-out)")
    p.add_argument("--threads", type=int, help="worker threads for sweeps (default: all cores)")
    return p


def resolve(argv) -> dict:
    """Defaults < environment < config file < flags."""
    args = build_parser().parse_args(argv)
    cfg = dict(DEFAULTS)
    cfg["out"] = os.environ.get("ABLOOP_OUT", DEFAULT_OUT)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for k in ("betas", "c0s"):
            if k in loaded and loaded[k] is not None:
                loaded[k] = _floats(loaded[k])
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for k, v in vars(args).items():
        if k not in ("command", "config") and v is not None:
            cfg[k] = v
    cfg["command"] = args.command
    return cfg


def load_curve(name):
    if name in BUILTIN_CURVES:
        return BUILTIN_CURVES[name]()
    path = Path(name)
    if not path.is_file():
        raise ConfigError(f"curve file not found: {name}")
    return CurveSpec.load(path)


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"{cfg['command']} needs --{missing[0].replace('_', '-')}")


def _grid(cfg):
    if cfg.get("grid") is None:
        return None
    try:
        ns, nu = (int(x) for x in str(cfg["grid"]).lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--grid must look like NSxNU, got {cfg['grid']!r}") from exc
    return ns, nu


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _echo(cfg, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


# -- commands ---------------------------------------------------------------------

def cmd_spectrum(cfg, frame, out):
    n = cfg["n"] or 5
    mu = solve_comparison(frame, cfg["c0"], n, bc=cfg["bc"])
    for j, m in enumerate(mu, 1):
        print(f"mu_{j} = {m:.12g}")
    _write_csv(out / "spectrum.csv", ("j", "mu"), [(j, repr(float(m))) for j, m in enumerate(mu, 1)])
    return 0


def cmd_transverse(cfg, frame, out):
    _need(cfg, "beta", "a")
    beta, a, gp = cfg["beta"], cfg["a"], cfg["gamma_plus"]
    rows, status = [], 0
    for sign, prob in (("+", TransverseProblem(a, beta, "dirichlet")),
                       ("-", TransverseProblem(a, beta, "robin", gp))):
        if prob.in_regime():
            r = transverse_secular(prob)
            print(f"zeta{sign} = {r.zeta:.10f}  secular residual {r.residual:.2e}")
            rows.append((sign, repr(float(r.zeta)), "secular", True))
            continue
        # diagnostics only: the grid oracle also sees boundary states
        vals, err = transverse_oracle_extrapolated(prob, n_eigs=2)
        print(f"zeta{sign} = {vals[0]:.10f}  (outside regime; grid oracle, est. error {err[0]:.1e})")
        rows.append((sign, repr(float(vals[0])), "grid-oracle", False))
    est = check_est2(beta, a, gp)
    for k, (lo, hi) in est.margins.items():
        print(f"EST2 {k}: margins lower {lo:.3e}, upper {hi:.3e}")
    for k, v in est.negative_count.items():
        print(f"negative eigenvalues ({k}): {v}")
    if est.flags:
        print("flags: " + ", ".join(est.flags))
    if not est.ok:
        status = 2
    _write_csv(out / "transverse.csv", ("sign", "zeta", "source", "in_regime"), rows)
    return status


def cmd_bracket(cfg, frame, out):
    _need(cfg, "beta")
    n = cfg["n"] or 2
    method = cfg["method"] or "spectral"
    beta = cfg["beta"]
    a = cfg["a"] if cfg["a"] is not None else halfwidth_schedule(beta, frame)
    g = _grid(cfg)
    grid = StripGrid(g[0], g[1], float(a), method) if g else None
    rep = sandwich_check(frame, cfg["c0"], beta, n, grid, a=cfg["a"], bc=cfg["bc"],
                         coeffs=cfg["coeffs"], method=method)
    rows = []
    for j in range(n):
        e = max(abs(rep.kappa_plus[j] + beta**2 / 4 - rep.mu[j]), abs(rep.kappa_minus[j] + beta**2 / 4 - rep.mu[j]))
        print(f"j={j + 1}: tau- {rep.minus.tau[j]:.8f} <= kappa- {rep.kappa_minus[j]:.8f} <= "
              f"kappa+ {rep.kappa_plus[j]:.8f} <= tau+ {rep.plus.tau[j]:.8f}  (tol {rep.kappa_tol[j]:.1e})")
        flags = list(rep.flags) + [f"sandwich:{'ok' if rep.sandwich['ok'] else 'violated'}"]
        rows.append([beta, j + 1] + [repr(float(x)) for x in (
            rep.mu[j], rep.plus.zeta, rep.minus.zeta, rep.plus.tau[j], rep.minus.tau[j],
            rep.kappa_plus[j], rep.kappa_minus[j], e)] + [";".join(flags)])
    _write_csv(out / "bracket.csv", BASE_COLUMNS, rows)
    print(f"sandwich {'holds' if rep.sandwich['ok'] else 'VIOLATED'}; flags: {', '.join(rep.flags) or 'none'}")
    return 0 if rep.sandwich["ok"] else 2


def cmd_sweep_beta(cfg, frame, out):
    _need(cfg, "betas")
    method = cfg["method"] or "spectral"
    rep = beta_sweep(frame, cfg["c0"], cfg["betas"], cfg["n"] or 1, bc=cfg["bc"], coeffs=cfg["coeffs"],
                     method=method, grid=_grid(cfg), threads=cfg["threads"])
    for r in rep.records:
        print(f"beta={r.param:g} j={r.j}: kappa- {r.kappa_minus:.8f} kappa+ {r.kappa_plus:.8f} "
              f"err {r.err:.3e} [{';'.join(r.regime_flags)}]")
    if rep.fit:
        print(f"fit e = C ln(beta)/beta: C = {rep.fit['C']:.4g}, log-space residual {rep.fit['residual']:.3f}, "
              f"power-law slope {rep.fit['slope']:.3f}, envelope C_max = {rep.fit['C_envelope']:.4g}")
    print("verdicts: " + ", ".join(f"{k}={v}" for k, v in rep.verdicts.items()))
    emit_report(rep, out)
    gate = [rep.verdicts.get("monotone"), rep.verdicts.get("sandwich")]
    return 2 if any(v is False for v in gate) else 0


def cmd_sweep_flux(cfg, frame, out):
    _need(cfg, "beta")
    method = cfg["method"] or "spectral"
    c0s = cfg["c0s"] or list(np.round(np.arange(1, 10) / 10, 12))
    rep = flux_sweep(frame, cfg["beta"], c0s, cfg["n"] or 1, bc=cfg["bc"], coeffs=cfg["coeffs"],
                     method=method, grid=_grid(cfg), threads=cfg["threads"])
    for r in rep.records:
        print(f"c0={r.param:g} j={r.j}: lambda in [{r.kappa_minus:.8f}, {r.kappa_plus:.8f}] "
              f"current {r.current:.6g} [{';'.join(r.regime_flags)}]")
    print("fit: " + ", ".join(f"{k}={v:.4g}" for k, v in rep.fit.items() if v is not None))
    print("verdicts: " + ", ".join(f"{k}={v}" for k, v in rep.verdicts.items()))
    emit_report(rep, out)
    return 0 if rep.passed else 2


def cmd_lemma2(cfg, frame, out):
    _need(cfg, "beta", "a")
    g = _grid(cfg) or (48, 33)
    rep = lemma2_check(frame, cfg["c0"], cfg["a"], cfg["beta"], StripGrid(g[0], g[1], cfg["a"], "fv"),
                       k=cfg["n"] or 3, coeffs=cfg["coeffs"])
    print(f"similarity error {rep.similarity_error:.2e}; b vs bt differences {rep.differences[0]:.3e} -> "
          f"{rep.differences[1]:.3e} (rate {rep.rate:.3f}); ground-state overlaps {rep.overlaps}")
    print("checks: " + ", ".join(f"{k}={v}" for k, v in rep.passed.items()))
    _write_csv(out / "lemma2.csv", ("j", "kappa_b", "kappa_bt"),
               [(j + 1, repr(float(x)), repr(float(y))) for j, (x, y) in enumerate(zip(rep.kappa_b, rep.kappa_bt))])
    return 0 if rep.ok else 2


HANDLERS = {"spectrum": cmd_spectrum, "transverse": cmd_transverse, "bracket": cmd_bracket,
            "sweep-beta": cmd_sweep_beta, "sweep-flux": cmd_sweep_flux, "lemma2": cmd_lemma2}


def run(cfg: dict) -> int:
    out = Path(cfg["out"])
    frame = None if cfg["command"] == "transverse" else build_frame(load_curve(cfg["curve"]))
    _echo(cfg, out)
    return HANDLERS[cfg["command"]](cfg, frame, out)


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
        return run(cfg)
    except (ConfigError, CurveError, StripError, RootBracketError, EigenSolverError, ValueError,
            OSError) as exc:
        print(f"abloop: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
