"""Decoupled bracketing operators ``U+- (x) 1 + 1 (x) T+-`` and their checks.

``tau_j^+- = zeta^+- + mu_j^+-`` are the exact j-th eigenvalues of the
separable bounds once the transverse ground state is isolated; the strip
eigenvalues satisfy ``tau_j^- <= kappa_j^- <= kappa_j^+ <= tau_j^+``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curve import FrameField
from .spectral1d import (TransverseProblem, TransverseResult, solve_comparison, solve_U_pm,
                         transverse_oracle_extrapolated, transverse_secular)

A_CLAMP = 0.99
DEFAULT_FLUX_GRID = (0.1, 0.25, 0.5, 0.75, 0.9)


class Schedule(float):
    """Strip halfwidth carrying its clamp flag."""

    clamped: bool
    raw: float

    def __new__(cls, value, raw, clamped):
        obj = super().__new__(cls, value)
        obj.raw = raw
        obj.clamped = clamped
        return obj


def admissible_halfwidth(frame: FrameField) -> float:
    """Supremum of admissible halfwidths: ``min(a1, 1/(2 gamma_+))``."""
    return min(frame.a1, 1.0 / (2.0 * frame.gamma_plus))


def halfwidth_schedule(beta: float, frame: FrameField | None = None) -> Schedule:
    """``a(beta) = 6 ln(beta) / beta``, clamped to ``0.99 * min(a1, 1/(2 gamma_+))``."""
    if not beta > 1:
        raise ValueError(f"halfwidth schedule undefined for beta <= 1 (beta={beta})")
    raw = 6.0 * math.log(beta) / beta
    if frame is None:
        return Schedule(raw, raw, False)
    cap = A_CLAMP * admissible_halfwidth(frame)
    if raw >= cap:
        return Schedule(cap, raw, True)
    return Schedule(raw, raw, False)


@dataclass(frozen=True)
class BracketConfig:
    frame: FrameField
    c0: float
    beta: float
    a: float | None = None
    n: int = 2
    bc: str = "twisted"
    coeffs: str = "derived"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.a is None:
            object.__setattr__(self, "a", halfwidth_schedule(self.beta, self.frame))
        if not (0 < self.a < admissible_halfwidth(self.frame)):
            raise ValueError(f"halfwidth a={self.a} outside (0, min(a1, 1/(2 gamma_+)))")

    @property
    def clamped(self) -> bool:
        return bool(getattr(self.a, "clamped", False))


def transverse_problem(config: BracketConfig, sign: str) -> TransverseProblem:
    if sign == "+":
        return TransverseProblem(config.a, config.beta, "dirichlet")
    return TransverseProblem(config.a, config.beta, "robin", config.frame.gamma_plus)


@dataclass(frozen=True)
class TauResult:
    sign: str
    tau: np.ndarray
    zeta: float
    mu_pm: np.ndarray
    xi2: float
    lowest_excluded: float
    transverse: TransverseResult | None
    flags: tuple = ()

    @property
    def ordering_ok(self) -> bool:
        """``tau_n`` lies below every combination with an excited transverse state."""
        return bool(self.xi2 >= 0 and self.tau[-1] < self.lowest_excluded)


def tau(config: BracketConfig, sign: str) -> TauResult:
    prob = transverse_problem(config, sign)
    flags = []
    tr = None
    if prob.in_regime():
        tr = transverse_secular(prob)
        zeta = tr.zeta
        ext, _ = transverse_oracle_extrapolated(prob, n_eigs=2)
        xi2 = float(ext[1])
    else:
        flags.append(f"est2{sign}:outside-regime")
        ext, _ = transverse_oracle_extrapolated(prob, n_eigs=2)
        zeta, xi2 = float(ext[0]), float(ext[1])
    mu = solve_U_pm(config.frame, config.c0, config.a, sign, config.n,
                    bc=config.bc, coeffs=config.coeffs)
    t = zeta + mu
    excl = xi2 + mu[0]
    if not (xi2 >= 0 and t[-1] < excl):
        flags.append(f"order{sign}:violated")
    return TauResult(sign, t, zeta, mu, xi2, excl, tr, tuple(flags))


@dataclass(frozen=True)
class BracketReport:
    config: BracketConfig
    mu: np.ndarray
    plus: TauResult
    minus: TauResult
    flags: tuple = ()
    kappa_plus: np.ndarray | None = None
    kappa_minus: np.ndarray | None = None
    kappa_tol: np.ndarray | None = None
    sandwich: dict = field(default_factory=dict)

    @property
    def err_plus(self) -> np.ndarray:
        return self.plus.tau + self.config.beta**2 / 4 - self.mu

    @property
    def err_minus(self) -> np.ndarray:
        return self.minus.tau + self.config.beta**2 / 4 - self.mu

    @property
    def ordered(self) -> bool:
        return bool(np.all(self.minus.tau <= self.plus.tau))


def bracket(config: BracketConfig) -> BracketReport:
    mu = solve_comparison(config.frame, config.c0, config.n, bc=config.bc)
    plus = tau(config, "+")
    minus = tau(config, "-")
    flags = list(plus.flags + minus.flags)
    if config.clamped:
        flags.insert(0, "a-clamped")
    if config.bc != "twisted":
        flags.append("bc-periodic")
    return BracketReport(config, mu, plus, minus, tuple(flags))


# -- proposition checks -----------------------------------------------------

def loglog_slope(x, y) -> float:
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class Est1Report:
    j: int
    a_list: np.ndarray
    c0s: tuple
    deviations: dict  # (c0, sign) -> |mu_j^sign(c0,a) - mu_j(c0)| over a_list
    slopes: dict
    constant: float
    min_slope: float
    passed: bool


def check_est1(frame: FrameField, j: int, a_list, c0s=DEFAULT_FLUX_GRID, *,
               bc: str = "twisted", min_slope: float = 0.9) -> Est1Report:
    """``|mu_j^+-(c0,a) - mu_j(c0)| <= C(j) a`` over ``a_list`` and a flux grid.

    Passes when every log-log slope is at least ``min_slope`` and the envelope
    constant ``max |dev|/a`` is finite.
    """
    a_list = np.asarray(a_list, float)
    if np.any(a_list <= 0) or np.any(a_list >= 1 / (2 * frame.gamma_plus)):
        raise ValueError("a_list must lie in (0, 1/(2 gamma_+))")
    devs, slopes = {}, {}
    C = 0.0
    for c0 in c0s:
        mu = solve_comparison(frame, c0, j, bc=bc)[j - 1]
        for sign in "+-":
            d = np.array([_deviation(frame, c0, a, sign, j, bc, mu) for a in a_list])
            devs[(c0, sign)] = d
            ok = np.all(np.isfinite(d)) and np.all(d > 0)
            slopes[(c0, sign)] = loglog_slope(a_list, d) if ok else float("nan")
            C = max(C, float(np.max(d / a_list))) if np.all(np.isfinite(d)) else float("inf")
    ms = min(slopes.values(), key=lambda v: -np.inf if np.isnan(v) else v)
    return Est1Report(j, a_list, tuple(c0s), devs, slopes, C, ms,
                      bool(np.isfinite(C) and ms >= min_slope))


def _deviation(frame, c0, a, sign, j, bc, mu):
    try:
        return abs(solve_U_pm(frame, c0, a, sign, j, bc=bc)[j - 1] - mu)
    except ValueError:
        # U- loses positivity when N is O(1); the linear bound cannot hold there
        return float("nan")


@dataclass(frozen=True)
class Est2Report:
    beta: float
    a: float
    gamma_plus: float
    zeta_plus: float | None
    zeta_minus: float | None
    in_regime_plus: bool
    in_regime_minus: bool
    margins: dict
    negative_count: dict
    passed: dict
    flags: tuple = ()

    @property
    def ok(self) -> bool:
        return all(v for k, v in self.passed.items() if not k.endswith("printed"))


def est2_bounds(beta: float, a: float, exponent: str = "scaled") -> dict:
    """Bounds on the transverse ground state.

    ``exponent="printed"`` uses ``exp(-beta/2)``; ``"scaled"`` uses
    ``exp(-beta a/2)``, the form that is dimensionally consistent.
    """
    e = math.exp(-beta / 2) if exponent == "printed" else math.exp(-beta * a / 2)
    base = -beta**2 / 4
    return {"plus": (base, base + 2 * beta**2 * e), "minus": (base - 2205 / 16 * beta**2 * e, base)}


def count_negative(prob: TransverseProblem, m: int | None = None) -> int:
    ext, _ = transverse_oracle_extrapolated(prob, m, n_eigs=4)
    return int(np.sum(ext < -1e-7 * max(1.0, prob.beta**2 / 4)))


def check_est2(beta: float, a: float, gamma_plus: float) -> Est2Report:
    """Two-sided bounds on ``zeta^+-`` plus uniqueness of the negative eigenvalue.

    Both exponent readings are evaluated; ``passed`` keys ending in
    ``printed`` are informational.
    """
    pp = TransverseProblem(a, beta, "dirichlet")
    pm = TransverseProblem(a, beta, "robin", gamma_plus)
    margins, counts, passed, flags = {}, {}, {}, []
    zp = zm = None
    for tag, prob in (("plus", pp), ("minus", pm)):
        if not prob.in_regime():
            flags.append(f"{tag}:skip-outside-regime")
            continue
        z = transverse_secular(prob).zeta
        if tag == "plus":
            zp = z
        else:
            zm = z
        counts[tag] = count_negative(prob)
        for exponent in ("scaled", "printed"):
            lo, hi = est2_bounds(beta, a, exponent)[tag]
            margins[f"{tag}-{exponent}"] = (z - lo, hi - z)
            # strict inequalities are unresolvable once beta^2 e^{-beta a} < ulp(beta^2)
            slack = 8 * np.finfo(float).eps * beta**2
            passed[f"{tag}-{exponent}"] = bool(lo - slack < z < hi + slack)
        passed[f"{tag}-unique"] = counts[tag] == 1
    return Est2Report(beta, a, gamma_plus, zp, zm, pp.in_regime(), pm.in_regime(),
                      margins, counts, passed, tuple(flags))
