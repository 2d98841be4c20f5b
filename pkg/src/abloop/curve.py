"""Closed arc-length parametrized loops and the coefficient fields on their strips.

A loop is given by its signed curvature and length.  Positions are rebuilt by
spectral integration of the tangent, so the parametrization is by arc length
to rounding.  The curvature sign follows ``gamma = x''y' - y''x'`` which is
negative on a counter-clockwise loop; the tangent angle is ``H = -int gamma``.

The strip coordinates are ``Psi(s, u) = Gamma(s) + u * n(s)`` with the left
normal ``n = (-y', x')`` and Jacobian ``1 + u*gamma(s)``.  The Aharonov-Bohm
solenoid sits at the origin.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

CLOSURE_TOL = 1e-10
DEGENERATE_JACOBIAN = 1e-2


class CurveError(ValueError):
    """Curvature data that does not describe an admissible closed loop."""


class StripError(ValueError):
    """Evaluation point outside the admissible tubular neighbourhood."""


@dataclass(frozen=True)
class CurveSpec:
    """Loop given by arc length and curvature data.

    ``kind == "samples"``: ``data`` are values of gamma at ``s_j = j*L/n``,
    ``j = 0..n-1`` (the endpoint ``s = L`` is not repeated).

    ``kind == "fourier"``: ``data`` is a list of ``[a_k, b_k]`` pairs with
    ``gamma(s) = a_0 + sum_k a_k cos(2 pi k s/L) + b_k sin(2 pi k s/L)``.
    """

    length: float
    kind: str
    data: tuple
    label: str = ""

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise CurveError(f"length must be positive, got {self.length}")
        if self.kind not in ("samples", "fourier"):
            raise CurveError(f"unknown curvature kind {self.kind!r}")
        if len(self.data) == 0:
            raise CurveError("empty curvature data")

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Complex Fourier coefficients ``c_k`` of gamma and their integer modes."""
        if self.kind == "fourier":
            pairs = np.asarray(self.data, dtype=float).reshape(-1, 2)
            kmax = len(pairs) - 1
            modes = np.arange(-kmax, kmax + 1)
            c = np.zeros(2 * kmax + 1, dtype=complex)
            c[kmax] = pairs[0, 0]
            for k in range(1, kmax + 1):
                a, b = pairs[k]
                c[kmax + k] = 0.5 * (a - 1j * b)
                c[kmax - k] = 0.5 * (a + 1j * b)
            return modes, c
        samples = np.asarray(self.data, dtype=float)
        return _trig_coefficients(samples)

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "curvature": {"kind": self.kind, "data": [list(d) if isinstance(d, (list, tuple)) else d for d in self.data]},
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSpec":
        try:
            curv = d["curvature"]
            data = curv["data"]
            kind = curv["kind"]
            length = float(d["length"])
        except (KeyError, TypeError) as exc:
            raise CurveError(f"malformed curve definition: missing {exc}") from exc
        data = tuple(tuple(x) if isinstance(x, list) else float(x) for x in data)
        return cls(length=length, kind=kind, data=data, label=d.get("label", ""))

    @classmethod
    def load(cls, path) -> "CurveSpec":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CurveError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(d)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def circle_spec(radius: float = 1.0) -> CurveSpec:
    """Counter-clockwise circle; curvature ``-1/R`` in this sign convention."""
    return CurveSpec(2 * np.pi * radius, "fourier", ((-1.0 / radius, 0.0),), f"circle R={radius:g}")


def perturbed_circle_spec(eps: float = 0.3) -> CurveSpec:
    """``gamma(s) = -1 + eps*cos(2s)`` on ``L = 2 pi``; closes for every eps."""
    return CurveSpec(2 * np.pi, "fourier", ((-1.0, 0.0), (0.0, 0.0), (eps, 0.0)),
                     f"perturbed circle eps={eps:g}")


def _trig_coefficients(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Real trigonometric interpolant; an even-length Nyquist term is split evenly.
    n = len(samples)
    c = np.fft.fft(samples) / n
    kmax = n // 2
    modes = np.arange(-kmax, kmax + 1)
    out = np.zeros(2 * kmax + 1, dtype=complex)
    for k in range(-kmax, kmax + 1):
        out[k + kmax] = c[k % n]
    if n % 2 == 0:
        out[0] *= 0.5
        out[-1] *= 0.5
    return modes, out


def _curvature_series(modes, coef, L, s):
    # gamma, gamma', gamma'' and H = -int_0^s gamma from the Fourier coefficients
    w = 2 * np.pi / L
    phase = np.exp(1j * w * s[..., None] * modes)
    k = modes * w
    g = np.real(phase @ coef)
    dg = np.real(phase @ (1j * k * coef))
    d2g = np.real(phase @ (-(k**2) * coef))
    nz = modes != 0
    mean = coef[~nz].sum().real
    Hper = np.real((phase[..., nz] - 1.0) @ (coef[nz] / (1j * k[nz])))
    return g, dg, d2g, -(mean * s + Hper)


class CurvePoints(NamedTuple):
    """Curve quantities at a set of arc-length values (all arrays share the shape of ``s``)."""

    s: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray
    d2gamma: np.ndarray
    H: np.ndarray
    x: np.ndarray
    y: np.ndarray
    tx: np.ndarray
    ty: np.ndarray


@dataclass(frozen=True, eq=False)
class FrameField:
    """Sampled geometry of a loop plus spectral evaluators at arbitrary ``s``.

    Build with :func:`build_frame`.  Immutable; safe to share across threads.
    """

    spec: CurveSpec
    s: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray
    d2gamma: np.ndarray
    H: np.ndarray
    x: np.ndarray
    y: np.ndarray
    gamma_plus: float
    a1: float
    orientation: int
    closure_residual: float
    turning_residual: float
    origin_distance: float
    _gmodes: np.ndarray = field(repr=False)
    _gcoef: np.ndarray = field(repr=False)
    _pmodes: np.ndarray = field(repr=False)
    _xcoef: np.ndarray = field(repr=False)
    _ycoef: np.ndarray = field(repr=False)

    @property
    def length(self) -> float:
        return self.spec.length

    @property
    def n(self) -> int:
        return len(self.s)

    def at(self, s) -> CurvePoints:
        """Evaluate every curve quantity at arbitrary (array) arc length ``s``."""
        s = np.asarray(s, dtype=float)
        g, dg, d2g, H = _curvature_series(self._gmodes, self._gcoef, self.length, s)
        w = 2 * np.pi / self.length
        pphase = np.exp(1j * w * s[..., None] * self._pmodes)
        x = np.real(pphase @ self._xcoef)
        y = np.real(pphase @ self._ycoef)
        return CurvePoints(s, g, dg, d2g, H, x, y, np.cos(H), np.sin(H))

    def grid(self, n: int) -> np.ndarray:
        return np.arange(n) * (self.length / n)


def build_frame(spec: CurveSpec, n_samples: int = 256, *, tol: float = CLOSURE_TOL) -> FrameField:
    """Reconstruct the loop from its curvature and sample the frame.

    Raises :class:`CurveError` when the total turning is not ``+-2 pi`` or the
    reconstructed curve does not close.  Self-intersections are not detected.
    """
    if n_samples < 16:
        raise CurveError(f"n_samples must be >= 16, got {n_samples}")
    L = spec.length
    gmodes, gcoef = spec.coefficients()
    turning = (gcoef[gmodes == 0].sum().real) * L
    turning_residual = abs(abs(turning) - 2 * np.pi)
    if turning_residual > tol:
        raise CurveError(
            f"curvature does not close: |int gamma ds| = {abs(turning):.12g}, "
            f"residual to 2*pi = {turning_residual:.3e}"
        )

    # Tangent series on a grid fine enough for the curvature bandwidth.
    kmax = int(np.abs(gmodes).max())
    n_fine = max(2 * n_samples, 64 * (kmax + 1))
    sf = np.arange(n_fine) * (L / n_fine)
    Hf = _curvature_series(gmodes, gcoef, L, sf)[3]
    cx = np.fft.fft(np.cos(Hf)) / n_fine
    cy = np.fft.fft(np.sin(Hf)) / n_fine
    closure_residual = float(max(abs(cx[0]), abs(cy[0])) * L)
    if closure_residual > tol:
        raise CurveError(f"reconstructed curve does not close: |Gamma(L) - Gamma(0)| = {closure_residual:.3e}")
    pm = np.fft.fftfreq(n_fine, d=1.0 / n_fine).astype(int)
    if n_fine % 2 == 0:
        # Nyquist column carries no reliable phase for a primitive; drop it.
        keep = np.abs(pm) < n_fine // 2
    else:
        keep = np.ones(n_fine, dtype=bool)
    keep &= pm != 0
    pmodes = pm[keep]
    kw = 2 * np.pi * pmodes / L
    # Zero-mean primitive: arc-length centroid at the origin.
    xcoef = cx[keep] / (1j * kw)
    ycoef = cy[keep] / (1j * kw)

    frame0 = FrameField(spec, np.zeros(1), *(np.zeros(1),) * 6, 0.0, 0.0, 0, 0.0, 0.0, 0.0,
                        gmodes, gcoef, pmodes, xcoef, ycoef)
    s = np.arange(n_samples) * (L / n_samples)
    pts = frame0.at(s)

    dense = frame0.at(np.arange(8 * n_samples) * (L / (8 * n_samples)))
    gamma_plus = float(np.abs(dense.gamma).max())
    area = 0.5 * np.mean(dense.x * dense.ty - dense.y * dense.tx) * L
    orientation = 1 if area > 0 else -1
    r = np.hypot(dense.x, dense.y)
    origin_distance = float(r.min())
    winding = np.mean((dense.x * dense.ty - dense.y * dense.tx) / r**2) * L / (2 * np.pi)
    if abs(abs(winding) - 1.0) > 1e-6:
        raise CurveError(f"loop does not enclose the solenoid at the origin (winding {winding:.6f})")

    a1 = min(1.0 / gamma_plus if gamma_plus > 0 else np.inf, origin_distance,
             _half_bottleneck(dense.x, dense.y, L, gamma_plus))

    _convention_check(frame0, L)

    return FrameField(
        spec=spec, s=s, gamma=pts.gamma, dgamma=pts.dgamma, d2gamma=pts.d2gamma, H=pts.H,
        x=pts.x, y=pts.y, gamma_plus=gamma_plus, a1=float(a1), orientation=orientation,
        closure_residual=closure_residual, turning_residual=float(turning_residual),
        origin_distance=origin_distance,
        _gmodes=gmodes, _gcoef=gcoef, _pmodes=pmodes, _xcoef=xcoef, _ycoef=ycoef,
    )


def _half_bottleneck(x, y, L, gamma_plus):
    n = len(x)
    if gamma_plus <= 0:
        return np.inf
    sep = min(np.pi / gamma_plus, L / 2)
    idx = np.arange(n)
    d_arc = np.abs(idx[:, None] - idx[None, :]) * (L / n)
    d_arc = np.minimum(d_arc, L - d_arc)
    far = d_arc >= sep * (1 - 1e-9)
    if not far.any():
        return np.inf
    dist = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    return 0.5 * float(dist[far].min())


def _convention_check(frame: FrameField, L: float) -> None:
    # gamma = x''y' - y''x' from the position series, at five points.
    s5 = np.linspace(0, L, 5, endpoint=False) + 0.1 * L / 5
    w = 2 * np.pi / L
    ph = np.exp(1j * w * s5[:, None] * frame._pmodes)
    k = frame._pmodes * w
    x1 = np.real(ph @ (1j * k * frame._xcoef))
    y1 = np.real(ph @ (1j * k * frame._ycoef))
    x2 = np.real(ph @ (-(k**2) * frame._xcoef))
    y2 = np.real(ph @ (-(k**2) * frame._ycoef))
    g = frame.at(s5).gamma
    err = np.abs(x2 * y1 - y2 * x1 - g).max()
    if err > 1e-6 * max(1.0, np.abs(g).max()):
        raise CurveError(f"curvature sign convention check failed (max deviation {err:.3e})")


# -- strip geometry ---------------------------------------------------------

class StripPoint(NamedTuple):
    s: float
    u: float
    a: float

    def validate(self, frame: FrameField) -> None:
        if not (abs(self.u) < self.a <= frame.a1):
            raise StripError(f"need |u| < a <= a1: u={self.u}, a={self.a}, a1={frame.a1}")


def _check_u(frame: FrameField, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) >= frame.a1):
        raise StripError(f"|u| must stay below the injectivity halfwidth a1={frame.a1:.6g}")
    return u


class MappedPoint(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    jacobian: np.ndarray
    near_degenerate: np.ndarray


def strip_map(frame: FrameField, s, u) -> MappedPoint:
    """Plane coordinates of strip points and the Jacobian ``1 + u*gamma``."""
    u = _check_u(frame, u)
    p = frame.at(s)
    x = p.x - u * p.ty
    y = p.y + u * p.tx
    jac = 1.0 + u * p.gamma
    return MappedPoint(x, y, jac, jac < DEGENERATE_JACOBIAN)


def _geom(p: CurvePoints, u):
    # R = x y' - y x',  P = Gamma . Gamma'
    R = p.x * p.ty - p.y * p.tx
    P = p.x * p.tx + p.y * p.ty
    Q = p.x**2 + p.y**2 + u**2 - 2 * u * R
    J = 1.0 + u * p.gamma
    return R, P, Q, J


def theta(frame: FrameField, s, u) -> np.ndarray:
    """``1/|Psi(s,u)|^2``; the solenoid must not lie on the evaluation point."""
    u = _check_u(frame, u)
    _, _, Q, _ = _geom(frame.at(s), u)
    if np.any(Q <= 0):
        raise StripError("theta evaluated at the solenoid position")
    return 1.0 / Q


def _omega(p: CurvePoints, u, variant):
    R, P, Q, J = _geom(p, u)
    th = 1.0 / Q
    om1 = th * (u - R) / J
    om2 = th * P
    if variant == "paper":
        om2 = om2 / J
    elif variant != "derived":
        raise ValueError(f"unknown omega variant {variant!r}")
    return om1, om2


def omega(frame: FrameField, s, u, variant: str = "derived") -> tuple[np.ndarray, np.ndarray]:
    """Magnetic coefficients ``(Omega_1, Omega_2)``.

    ``derived``: Omega_2 is the normal component of ``(-y, x)/r^2``, i.e.
    exactly what the gauge field contributes to the u-derivative term.
    ``paper``: the printed form, where Omega_2 carries an extra ``1/(1 + u*gamma)``.
    """
    u = _check_u(frame, u)
    return _omega(frame.at(s), u, variant)


def _domega2_ds(p: CurvePoints, u, variant):
    R, P, Q, J = _geom(p, u)
    th = 1.0 / Q
    # dP/ds = 1 + gamma*R,  dQ/ds = 2*P*J
    d = (1.0 + p.gamma * R) * th - 2.0 * P**2 * J * th**2
    if variant == "paper":
        d = d / J - th * P * u * p.dgamma / J**2
    return d


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _integrate_u(fun, u, tol=1e-11):
    # Gauss-Legendre on [0, u], doubling the order until two rules agree.
    u = np.asarray(u, dtype=float)
    prev = None
    for n in (16, 32, 64, 128):
        x, w = _gauss(n)
        v = 0.5 * u[..., None] * (1.0 + x)
        val = 0.5 * u * np.sum(w * fun(v), axis=-1)
        if prev is not None and np.max(np.abs(val - prev), initial=0.0) <= tol:
            return val
        prev = val
    return val


def gauge_phase(frame: FrameField, c0: float, s, u, variant: str = "derived") -> np.ndarray:
    """``K(s,u) = int_0^u c0*Omega_2(s,v) dv``."""
    u = _check_u(frame, u)
    s = np.asarray(s, dtype=float)
    shape = np.broadcast_shapes(s.shape, u.shape)
    if c0 == 0:
        return np.zeros(shape)
    p = frame.at(s[..., None])
    return np.broadcast_to(_integrate_u(lambda v: c0 * _omega(p, v, variant)[1], u), shape)


def gauge_phase_ds(frame: FrameField, c0: float, s, u, variant: str = "derived") -> np.ndarray:
    """``dK/ds`` by differentiating under the integral sign."""
    u = _check_u(frame, u)
    s = np.asarray(s, dtype=float)
    shape = np.broadcast_shapes(s.shape, u.shape)
    if c0 == 0:
        return np.zeros(shape)
    p = frame.at(s[..., None])
    return np.broadcast_to(_integrate_u(lambda v: c0 * _domega2_ds(p, v, variant), u), shape)


def effective_potential(frame: FrameField, s, u) -> np.ndarray:
    u = _check_u(frame, u)
    p = frame.at(s)
    J = 1.0 + u * p.gamma
    return (0.5 * u * p.d2gamma / J**3 - 1.25 * u**2 * p.dgamma**2 / J**4
            - 0.25 * p.gamma**2 / J**2)


# -- coefficient fields used by the strip forms and their bounds ------------

@dataclass(frozen=True)
class StripFields:
    """All coefficient fields on a tensor grid ``s[:, None] x u[None, :]``."""

    s: np.ndarray
    u: np.ndarray
    gamma: np.ndarray
    jac: np.ndarray
    theta: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    K: np.ndarray
    Ks: np.ndarray
    V: np.ndarray

    def tangential(self, c0: float, bc: str = "twisted") -> np.ndarray:
        """Residual tangential vector potential after the gauge ``e^{iK}``.

        With ``bc="twisted"`` the curve-line value ``-c0*Omega_1(s,0)`` is also
        gauged away (it integrates to the enclosed flux, which then lives in the
        quasi-periodic boundary condition).
        """
        a = -c0 * self.jac**2 * self.omega1 - self.Ks
        if bc == "twisted":
            i0 = np.argmin(np.abs(self.u))
            if abs(self.u[i0]) > 0:
                raise ValueError("twisted residual needs u = 0 on the grid")
            a = a + c0 * self.omega1[:, i0:i0 + 1]
        elif bc != "periodic":
            raise ValueError(f"unknown bc {bc!r}")
        return a


def strip_fields(frame: FrameField, c0: float, s, u, variant: str = "derived", *,
                 gauge: bool = True) -> StripFields:
    """Coefficient fields; ``gauge=False`` skips the quadratures for ``K`` and ``K_s``."""
    s = np.asarray(s, dtype=float)
    u = _check_u(frame, u)
    S, U = s[:, None], u[None, :]
    p = frame.at(S)
    om1, om2 = _omega(p, U, variant)
    R, P, Q, J = _geom(p, U)
    if gauge:
        K = gauge_phase(frame, c0, S, U, variant)
        Ks = gauge_phase_ds(frame, c0, S, U, variant)
    else:
        K = Ks = np.zeros(np.broadcast_shapes(S.shape, U.shape))
    V = (0.5 * U * p.d2gamma / J**3 - 1.25 * U**2 * p.dgamma**2 / J**4
         - 0.25 * p.gamma**2 / J**2)
    bS, bU = np.broadcast_arrays(S, U)
    return StripFields(s, u, np.broadcast_to(p.gamma, bS.shape).copy(), J, 1.0 / Q,
                       np.broadcast_to(om1, bS.shape).copy(), np.broadcast_to(om2, bS.shape).copy(),
                       K, Ks, np.broadcast_to(V, bS.shape).copy())


class CoeffBounds(NamedTuple):
    gamma_plus: float
    N: float
    M: float
    W: np.ndarray
    fields: StripFields


def coeff_bounds(frame: FrameField, c0: float, a: float, *, bc: str = "twisted",
                 coeffs: str = "derived", n_s: int | None = None, n_u: int = 33) -> CoeffBounds:
    """Maxima ``N_{c0}(a)`` and ``M_{c0}(a)`` over the strip ``[0,L] x [-a,a]``.

    ``coeffs="derived"``: ``W = (1+u gamma)^-2 A^2 + V`` with ``A`` the residual
    tangential potential (see :meth:`StripFields.tangential`).  With
    ``bc="periodic"`` this is ``c0^2 theta + J^-2 K_s^2 + V + 2 c0 Omega_1 K_s
    - c0^2 Omega_2^2``.  ``coeffs="paper"`` uses the printed expression with
    ``K_u^2`` and ``-2 c0 Omega_2 K_s`` and the printed Omega_2.
    """
    gp = frame.gamma_plus
    if not (0 < a < 1.0 / (2 * gp)):
        raise ValueError(f"coeff_bounds needs 0 < a < 1/(2 gamma_+) = {1 / (2 * gp):.6g}, got a={a}")
    if n_u % 2 == 0:
        n_u += 1
    s = frame.grid(n_s or frame.n)
    u = np.linspace(-a, a, n_u)
    f = strip_fields(frame, c0, s, u, "paper" if coeffs == "paper" else "derived")
    if coeffs == "paper":
        Ku = c0 * f.omega2
        W = (c0**2 * f.theta + f.Ks**2 / f.jac**2 + Ku**2 + f.V
             + 2 * c0 * (f.omega1 * f.Ks - f.omega2 * f.Ks))
        N = float(np.max(2 * np.abs(c0 * f.omega1 + f.Ks / f.jac**2)))
    elif coeffs == "derived":
        A = f.tangential(c0, bc)
        W = A**2 / f.jac**2 + f.V
        N = float(np.max(2 * np.abs(A) / f.jac**2))
    else:
        raise ValueError(f"unknown coefficient variant {coeffs!r}")
    M = float(np.max(np.abs(W + 0.25 * f.gamma**2)))
    return CoeffBounds(gp, N, M, W, f)
