"""One-dimensional eigensolvers.

Longitudinal operators ``-p d^2/ds^2 + q(s)`` on a loop of length L with
periodic or flux-twisted boundary conditions (``f(L) = e^{-2 pi i c0} f(0)``,
same for ``f'``), and the transverse delta operators on ``[-a, a]``:

    t+[f] = int |f'|^2 - beta |f(0)|^2,                  f(+-a) = 0
    t-[f] = int |f'|^2 - beta |f(0)|^2 - gp (|f(a)|^2 + |f(-a)|^2)

whose single negative eigenvalue is found from the even-mode secular equation
and cross-checked with a finite-difference grid.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, sparse
from scipy.sparse import linalg as splinalg

from .curve import FrameField, coeff_bounds

SMOOTH_TAIL = 1e-10


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    method: str = ""
    size: int = 0
    residuals: np.ndarray | None = None
    flags: tuple = ()

    def __getitem__(self, j):
        return self.eigenvalues[j]

    def __len__(self):
        return len(self.eigenvalues)


@dataclass(frozen=True)
class LongitudinalProblem:
    """``-p d^2/ds^2 + q(s)`` on ``[0, L)``.

    ``q`` holds samples at ``s_j = j L / len(q)``.  ``bc`` is ``"periodic"``
    or ``"twisted"`` (uses ``c0``).
    """

    length: float
    p: float
    q: np.ndarray
    bc: str = "twisted"
    c0: float = 0.0
    n_eigs: int = 5

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"stiffness must be positive, got p={self.p}")
        if self.bc not in ("periodic", "twisted"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))

    @property
    def twist(self) -> float:
        return self.c0 if self.bc == "twisted" else 0.0


def _q_coefficients(q: np.ndarray) -> dict[int, complex]:
    n = len(q)
    c = np.fft.fft(q) / n
    out = {}
    for k in range(-(n // 2), n // 2 + 1):
        v = c[k % n]
        if n % 2 == 0 and abs(k) == n // 2:
            v = 0.5 * v
        out[k] = v
    return out


def is_smooth(q: np.ndarray, tail: float = SMOOTH_TAIL) -> bool:
    """Spectral decay test: the top tenth of the resolved modes must be negligible."""
    n = len(q)
    if n < 8:
        return True
    c = np.abs(np.fft.rfft(q)) / n
    scale = max(c.max(), 1e-300)
    cut = max(1, int(0.9 * len(c)))
    return bool(c[cut:].max(initial=0.0) <= tail * scale)


def solve_longitudinal(prob: LongitudinalProblem, n_modes: int = 256, *,
                       vectors: bool = False) -> SpectralResult:
    """Lowest ``prob.n_eigs`` eigenvalues.

    Fourier-Galerkin in ``exp(2 pi i (k - c0) s / L)``.  Falls back to a
    second-order finite-difference grid when ``q`` is not spectrally smooth.
    """
    if not is_smooth(prob.q):
        res = solve_longitudinal_fd(prob, n=max(2048, len(prob.q)))
        return SpectralResult(res.eigenvalues, res.eigenvectors, res.method, res.size,
                              res.residuals, res.flags + ("nonsmooth-q",))
    L, c0 = prob.length, prob.twist
    shift = int(round(c0))
    k = np.arange(-(n_modes // 2), n_modes - n_modes // 2) + shift
    wav = 2 * np.pi * (k - c0) / L
    qc = _q_coefficients(prob.q)
    col = np.array([qc.get(m, 0.0) for m in range(n_modes)])
    row = np.array([qc.get(-m, 0.0) for m in range(n_modes)])
    A = linalg.toeplitz(col, row) + np.diag(prob.p * wav**2)
    m = min(prob.n_eigs, n_modes)
    if vectors:
        w, v = linalg.eigh(A, subset_by_index=(0, m - 1))
        res = np.linalg.norm(A @ v - v * w, axis=0)
    else:
        w = linalg.eigh(A, eigvals_only=True, subset_by_index=(0, m - 1))
        v, res = None, None
    return SpectralResult(w, v, "fourier-galerkin", n_modes, res)


def fd_longitudinal_matrix(prob: LongitudinalProblem, n: int) -> sparse.csc_matrix:
    h = prob.length / n
    s = np.arange(n) * h
    q = np.interp(s, np.arange(len(prob.q)) * prob.length / len(prob.q), prob.q,
                  period=prob.length) if len(prob.q) != n else prob.q
    phase = np.exp(-2j * np.pi * prob.twist)
    off = np.full(n - 1, -prob.p / h**2, dtype=complex)
    A = sparse.diags([2 * prob.p / h**2 + q + 0j, off, off], [0, 1, -1], format="lil")
    # f_n = e^{-2 pi i c0} f_0 closes the last row; the first row is its adjoint.
    A[n - 1, 0] += -prob.p / h**2 * phase
    A[0, n - 1] += -prob.p / h**2 * np.conj(phase)
    return A.tocsc()


def solve_longitudinal_fd(prob: LongitudinalProblem, n: int = 1024, *,
                          richardson: bool = True) -> SpectralResult:
    """Second-order finite differences, optionally Richardson-extrapolated from n and 2n."""
    m = prob.n_eigs

    sigma = float(np.min(prob.q)) - 1.0   # below the spectrum

    def lowest(nn):
        A = fd_longitudinal_matrix(prob, nn)
        if nn <= 256:
            return linalg.eigh(A.toarray(), eigvals_only=True, subset_by_index=(0, m - 1))
        v0 = np.ones(nn, dtype=complex)
        w = splinalg.eigsh(A, k=m, sigma=sigma, which="LA", v0=v0, tol=0, return_eigenvectors=False)
        return np.sort(w)

    w = lowest(n)
    if richardson:
        w2 = lowest(2 * n)
        w = (4 * w2 - w) / 3
        return SpectralResult(w, None, "fd2-richardson", 2 * n)
    return SpectralResult(w, None, "fd2", n)


@functools.lru_cache(maxsize=32)
def _gamma_samples(frame, n):
    g = frame.at(frame.grid(n)).gamma
    g.flags.writeable = False
    return g


def comparison_problem(frame: FrameField, c0: float, n: int = 5, *, bc: str = "twisted",
                       p: float = 1.0, shift: float = 0.0, n_q: int | None = None) -> LongitudinalProblem:
    """``-p d^2/ds^2 - gamma^2/4 + shift`` on the loop."""
    n_q = n_q or max(4 * frame.n, 1024)
    q = -0.25 * _gamma_samples(frame, n_q) ** 2 + shift
    return LongitudinalProblem(frame.length, p, q, bc, c0, n)


def solve_comparison(frame: FrameField, c0: float, n: int = 5, *, bc: str = "twisted",
                     n_modes: int = 256) -> np.ndarray:
    """``mu_1..mu_n`` of ``-d^2/ds^2 - gamma^2/4``.

    ``bc="twisted"`` carries the enclosed flux in the boundary condition;
    ``bc="periodic"`` is the flux-free domain as printed.
    """
    return solve_longitudinal(comparison_problem(frame, c0, n, bc=bc), n_modes).eigenvalues


@functools.lru_cache(maxsize=256)
def _bounds(frame, c0, a, bc, coeffs):
    # shared by both signs and every j; frames hash by identity
    return coeff_bounds(frame, c0, a, bc=bc, coeffs=coeffs)


def u_pm_coefficients(frame: FrameField, c0: float, a: float, sign: str, *,
                      bc: str = "twisted", coeffs: str = "derived") -> tuple[float, float]:
    """Stiffness ``p`` and constant potential shift of ``U^+-``."""
    b = _bounds(frame, c0, a, bc, coeffs)
    gp = frame.gamma_plus
    if sign == "+":
        return (1 - a * gp) ** -2 + 0.5 * b.N, 0.5 * b.N + b.M
    if sign == "-":
        p = (1 + a * gp) ** -2 - 0.5 * b.N
        if p <= 0:
            raise ValueError(f"U- stiffness not positive (p={p:.4g}); N={b.N:.4g} too large at a={a}")
        return p, -0.5 * b.N - b.M
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def solve_U_pm(frame: FrameField, c0: float, a: float, sign: str, n: int = 5, *,
               bc: str = "twisted", coeffs: str = "derived", n_modes: int = 256) -> np.ndarray:
    """``mu_j^+-(c0, a)``: eigenvalues of ``-p d^2/ds^2 - gamma^2/4 + shift``.

    The u-dependent factor is replaced by its extremal value over ``|u| <= a``:
    ``(1 - a gp)^-2`` for ``+`` and ``(1 + a gp)^-2`` for ``-``.
    """
    if not (0 < a < 1 / (2 * frame.gamma_plus)):
        raise ValueError(f"need 0 < a < 1/(2 gamma_+), got a={a}")
    p, shift = u_pm_coefficients(frame, c0, a, sign, bc=bc, coeffs=coeffs)
    prob = comparison_problem(frame, c0, n, bc=bc, p=p, shift=shift)
    return solve_longitudinal(prob, n_modes).eigenvalues


# -- transverse delta operators ----------------------------------------------

class RootBracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransverseProblem:
    a: float
    beta: float
    boundary: str = "dirichlet"
    gamma_plus: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.beta >= 0):
            raise ValueError(f"need a > 0 and beta >= 0, got a={self.a}, beta={self.beta}")
        if self.boundary not in ("dirichlet", "robin"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.gamma_plus < 0:
            raise ValueError("Robin coefficient must be nonnegative")

    @property
    def sign(self) -> str:
        return "+" if self.boundary == "dirichlet" else "-"

    def in_regime(self) -> bool:
        """Hypotheses under which exactly one negative eigenvalue is guaranteed.

        ``+``: ``beta a > 8/3``.  ``-``: ``beta > 8``, ``beta > 8 gp/3`` and
        ``gp a <= 1`` (beyond that an odd boundary state also goes negative).
        """
        b, a, g = self.beta, self.a, self.gamma_plus
        if self.boundary == "dirichlet":
            return b * a > 8 / 3
        return b > 8 and b > 8 * g / 3 and g * a <= 1


@dataclass(frozen=True)
class TransverseResult:
    zeta: float
    kappa: float
    residual: float
    in_regime: bool
    problem: TransverseProblem
    flags: tuple = field(default=())


def _secular(prob: TransverseProblem):
    a, b, g = prob.a, prob.beta, prob.gamma_plus
    if prob.boundary == "dirichlet":
        # even mode sinh(k(a-|u|)):  2 k coth(k a) = beta
        def F(k):
            return 2 * k - b * np.tanh(k * a)

        def dF(k):
            return 2 - b * a / np.cosh(k * a) ** 2
    else:
        # even mode k cosh(k(a-|u|)) - g sinh(k(a-|u|)):
        #   2k (k tanh(ka) - g) = beta (k - g tanh(ka))
        def F(k):
            t = np.tanh(k * a)
            return 2 * k * (k * t - g) - b * (k - g * t)

        def dF(k):
            t = np.tanh(k * a)
            s2 = 1 / np.cosh(k * a) ** 2
            return 4 * k * t + 2 * k**2 * a * s2 - 2 * g - b + b * g * a * s2
    return F, dF


def transverse_secular(prob: TransverseProblem, *, strict: bool = True) -> TransverseResult:
    """Negative eigenvalue ``zeta = -kappa^2`` from the even-mode secular equation.

    Bisection on ``kappa in (1e-12, beta)`` to 1e-13, then two Newton steps.
    With ``strict=True`` problems outside the proposition regime are refused.
    """
    ok = prob.in_regime()
    if strict and not ok:
        raise ValueError(f"outside-proposition-regime: {prob}")
    F, dF = _secular(prob)
    lo, hi = 1e-12, max(prob.beta, 1e-12)
    if F(lo) * F(hi) > 0:
        hi = 2 * max(prob.beta, 1.0) + 2 * prob.gamma_plus
        if F(lo) * F(hi) > 0:
            raise RootBracketError(f"no sign change of the secular function on ({lo}, {hi}) for {prob}")
    k = optimize.bisect(F, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(2):
        step = F(k) / dF(k)
        if abs(F(k - step)) <= abs(F(k)):
            k = k - step
    return TransverseResult(-k * k, k, abs(F(k)), ok, prob,
                            () if ok else ("outside-proposition-regime",))


def transverse_grid_oracle(prob: TransverseProblem, m: int = 1000, n_eigs: int = 3) -> SpectralResult:
    """Finite differences on ``2m+1`` nodes with a node at ``u = 0``.

    The delta is ``-beta/h`` on the centre node; Dirichlet drops the end nodes;
    Robin uses half-cells at the ends (equivalent to the ghost-node rule
    ``f'(+-a) = +-gp f(+-a)``).
    """
    if 2 * m + 1 < 201:
        raise ValueError("grid oracle needs at least 200 intervals")
    a, b, g = prob.a, prob.beta, prob.gamma_plus
    n = 2 * m + 1
    h = a / m
    # quadratic form: sum_edges |f_{k+1}-f_k|^2/h - beta |f_m|^2 - g (|f_0|^2 + |f_n|^2)
    d = np.zeros(n)
    d[:-1] += 1 / h
    d[1:] += 1 / h
    off = -np.ones(n - 1) / h
    d[m] -= b
    mass = np.full(n, h)
    if prob.boundary == "dirichlet":
        d, off, mass = d[1:-1], off[1:-1], mass[1:-1]
    else:
        d[0] -= g
        d[-1] -= g
        mass[0] = mass[-1] = h / 2
    r = 1 / np.sqrt(mass)
    d = d * r * r
    off = off * r[:-1] * r[1:]
    k = min(n_eigs, len(d))
    w = linalg.eigh_tridiagonal(d, off, eigvals_only=True, select="i", select_range=(0, k - 1))
    return SpectralResult(w, None, "fd2-transverse", len(d))


def transverse_oracle_extrapolated(prob: TransverseProblem, m: int | None = None,
                                   n_eigs: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Richardson extrapolation from m and 2m; returns (values, error estimate)."""
    if m is None:
        kap = max(prob.beta / 2, 1.0)
        m = int(min(max(1000, math.ceil(prob.a * kap / 0.004)), 40000))
    w1 = transverse_grid_oracle(prob, m, n_eigs).eigenvalues
    w2 = transverse_grid_oracle(prob, 2 * m, n_eigs).eigenvalues
    return (4 * w2 - w1) / 3, np.abs(w2 - w1) / 3
