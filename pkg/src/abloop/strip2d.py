"""Curvilinear strip forms and their low eigenvalues.

Every variant is written as one quadratic form on ``[0, L) x [-a, a]``
(periodic in s):

    q[g] = int J^-2 |g_s|^2 + |g_u|^2 + Z |g|^2 + m_s Im(conj(g) g_s) + m_u Im(conj(g) g_u)
           - beta int |g(s, 0)|^2 ds + boundary terms

with ``J = 1 + u gamma``.  The ``b`` variants keep the gauge field as is
(``m_s = 2 c0 Omega_1``, ``m_u = -2 c0 Omega_2``, ``Z = V + c0^2 theta``);
the ``bt`` variants are the forms after conjugation by ``e^{iK}``
(``m_u = 0``).  ``+`` carries Dirichlet rows at ``u = +-a`` and ``-`` the
Robin terms.

Two discretizations share the same assembly: a second-order finite-volume
scheme (edge averages and differences, trapezoid weights) and a spectral one
(Fourier collocation in s, two Gauss-Lobatto-Legendre elements in u meeting
at the delta line).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import io as sio
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .bracketing import BracketConfig, BracketReport, bracket
from .curve import FrameField, StripError, gauge_phase, strip_fields
from .spectral1d import SpectralResult

VARIANTS = ("b+", "b-", "bt+", "bt-")
ROBIN_MODES = ("signed", "gamma_plus")
DENSE_LIMIT = 1500
DENSE_LU_LIMIT = 8000
DENSE_FILL = 0.02
RESIDUAL_TOL = 1e-8


class EigenSolverError(RuntimeError):
    pass


class SandwichError(AssertionError):
    pass


# -- grids --------------------------------------------------------------------

def gll_nodes(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Lobatto-Legendre nodes, weights and differentiation matrix on [-1, 1]."""
    leg = np.polynomial.legendre
    cp = np.zeros(p + 1)
    cp[-1] = 1.0
    interior = np.sort(np.real(leg.legroots(leg.legder(cp))))
    x = np.concatenate(([-1.0], interior, [1.0]))
    Px = leg.legval(x, cp)
    w = 2.0 / (p * (p + 1) * Px**2)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (Px[:, None] / Px[None, :]) / dx
    np.fill_diagonal(D, 0.0)
    D[0, 0] = -p * (p + 1) / 4.0
    D[-1, -1] = p * (p + 1) / 4.0
    return x, w, D


def fourier_diff(n: int, length: float) -> np.ndarray:
    """Periodic spectral differentiation matrix on ``n`` (odd) equispaced nodes."""
    if n % 2 == 0:
        raise ValueError("Fourier collocation needs an odd number of nodes")
    k = np.arange(n)
    col = np.zeros(n)
    h = 2 * np.pi / n
    col[1:] = 0.5 * (-1.0) ** k[1:] / np.sin(k[1:] * h / 2)
    return linalg.toeplitz(col, -col) * (2 * np.pi / length)


@dataclass(frozen=True)
class StripGrid:
    """``n_s`` periodic points in s and ``n_u`` (odd) points on ``[-a, a]``.

    For ``method="spectral"`` each half ``[-a, 0]``, ``[0, a]`` is one GLL
    element of order ``(n_u - 1) / 2``.
    """

    n_s: int
    n_u: int
    a: float
    method: str = "fv"

    def __post_init__(self):
        if self.method not in ("fv", "spectral"):
            raise ValueError(f"unknown strip method {self.method!r}")
        if self.n_u % 2 == 0 or self.n_u < 3:
            raise ValueError("n_u must be odd (u = 0 is a grid line) and >= 3")
        if self.n_s < 3:
            raise ValueError("n_s must be >= 3")
        if self.method == "spectral" and self.n_s % 2 == 0:
            raise ValueError("spectral grids need odd n_s")
        if not self.a > 0:
            raise ValueError("halfwidth must be positive")

    @property
    def h_u(self) -> float:
        return 2 * self.a / (self.n_u - 1)

    def h_s(self, length: float) -> float:
        return length / self.n_s

    @property
    def order(self) -> int:
        return (self.n_u - 1) // 2

    def u_nodes(self) -> np.ndarray:
        if self.method == "fv":
            return np.linspace(-self.a, self.a, self.n_u)
        x, _, _ = gll_nodes(self.order)
        half = 0.5 * self.a * (x + 1.0)
        return np.concatenate((half[::-1][:-1] * -1.0, half))

    def refined(self) -> "StripGrid":
        """Halved spacing for FV; eight more modes/orders for spectral."""
        if self.method == "fv":
            return replace(self, n_s=2 * self.n_s, n_u=2 * self.n_u - 1)
        return replace(self, n_s=self.n_s + 8, n_u=self.n_u + 16)

    @classmethod
    def parse(cls, text: str, a: float, method: str = "fv") -> "StripGrid":
        ns, nu = text.lower().split("x")
        return cls(int(ns), int(nu), a, method)


def auto_grid(beta: float, a: float, method: str = "spectral", n_s: int | None = None) -> StripGrid:
    """Smallest default grid meeting ``h_u <= min(0.5/beta, a/8)`` (FV) or ``a/p <= 1/beta``."""
    if method == "fv":
        h = min(0.5 / beta, a / 8)
        m = max(64, 2 * math.ceil(a / h))
        return StripGrid(n_s or 128, m + 1, a, "fv")
    p = max(24, math.ceil(1.2 * a * beta) + 6)
    return StripGrid(n_s or 17, 2 * p + 1, a, "spectral")


# -- per-direction operators ----------------------------------------------------

@dataclass(frozen=True)
class _Direction:
    P: sparse.csr_matrix   # node values -> derivative points
    G: sparse.csr_matrix   # node values -> derivative at those points
    w: np.ndarray          # quadrature weights of the derivative points
    s: np.ndarray          # coordinates of the derivative points (tensor axes)
    u: np.ndarray


def _fv_periodic(n, h):
    I = sparse.identity(n, format="csr")
    S = sparse.diags([np.ones(n - 1), [1.0]], [1, -(n - 1)], shape=(n, n), format="csr")
    return 0.5 * (I + S), (S - I) / h


def _fv_interval(n, h):
    m = n - 1
    A = sparse.diags([np.ones(m), np.ones(m)], [0, 1], shape=(m, n), format="csr")
    B = sparse.diags([-np.ones(m), np.ones(m)], [0, 1], shape=(m, n), format="csr")
    return 0.5 * A, B / h


def _gll_broken(p, a):
    x, w, D = gll_nodes(p)
    scale = 0.5 * a
    n = 2 * p + 1
    rows = np.arange(2 * (p + 1))
    cols = np.concatenate((np.arange(p + 1), np.arange(p, n)))
    E = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(2 * (p + 1), n))
    Db = sparse.block_diag((D / scale, D / scale), format="csr")
    half = scale * (x + 1.0)
    ub = np.concatenate((half - a, half))
    wb = np.concatenate((w, w)) * scale
    return E, Db @ E, wb, ub


def _directions(grid: StripGrid, length: float):
    n_s, n_u = grid.n_s, grid.n_u
    s = np.arange(n_s) * length / n_s
    u = grid.u_nodes()
    Is, Iu = sparse.identity(n_s, format="csr"), sparse.identity(n_u, format="csr")
    if grid.method == "fv":
        hs, hu = length / n_s, grid.h_u
        Ps, Gs = _fv_periodic(n_s, hs)
        Pu, Gu = _fv_interval(n_u, hu)
        wu = np.full(n_u, hu)
        wu[[0, -1]] *= 0.5
        ds = _Direction(sparse.kron(Ps, Iu, "csr"), sparse.kron(Gs, Iu, "csr"),
                        np.outer(np.full(n_s, hs), wu).ravel(), s + hs / 2, u)
        du = _Direction(sparse.kron(Is, Pu, "csr"), sparse.kron(Is, Gu, "csr"),
                        np.outer(np.full(n_s, hs), np.full(n_u - 1, hu)).ravel(),
                        s, 0.5 * (u[1:] + u[:-1]))
        wnode = np.outer(np.full(n_s, hs), wu).ravel()
    else:
        hs = length / n_s
        D = sparse.csr_matrix(fourier_diff(n_s, length))
        E, Gb, wb, ub = _gll_broken(grid.order, grid.a)
        wu = E.T @ wb
        ds = _Direction(sparse.kron(Is, Iu, "csr"), sparse.kron(D, Iu, "csr"),
                        np.outer(np.full(n_s, hs), wu).ravel(), s, u)
        du = _Direction(sparse.kron(Is, E, "csr"), sparse.kron(Is, Gb, "csr"),
                        np.outer(np.full(n_s, hs), wb).ravel(), s, ub)
        wnode = np.outer(np.full(n_s, hs), wu).ravel()
    return s, u, ds, du, wnode


# -- coefficients -----------------------------------------------------------------

@dataclass(frozen=True)
class FormCoefficients:
    """Pointwise coefficients of the generic strip form on a tensor grid."""

    stiff_s: np.ndarray
    m_s: np.ndarray
    m_u: np.ndarray
    Z: np.ndarray


def form_coefficients(frame: FrameField, c0: float, variant: str, s, u,
                      coeffs: str = "derived") -> FormCoefficients:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if coeffs not in ("derived", "paper"):
        raise ValueError(f"unknown coefficient variant {coeffs!r}")
    tilde = variant.startswith("bt")
    if not tilde:
        f = strip_fields(frame, c0, s, u, "derived", gauge=False)
        return FormCoefficients(f.jac**-2, 2 * c0 * f.omega1, -2 * c0 * f.omega2,
                                f.V + c0**2 * f.theta)
    f = strip_fields(frame, c0, s, u, coeffs)
    Ku = c0 * f.omega2
    cross = f.Ks if coeffs == "paper" else Ku
    Z = (c0**2 * f.theta + f.Ks**2 / f.jac**2 + Ku**2 + f.V
         + 2 * c0 * f.omega1 * f.Ks - 2 * c0 * f.omega2 * cross)
    m_s = 2 * (c0 * f.omega1 + f.Ks / f.jac**2)
    if coeffs == "derived":
        m_u = np.zeros_like(Z)
    else:
        # with the printed Omega_2 the u-derivative term is not cancelled exactly
        f0 = strip_fields(frame, c0, s, u, "derived", gauge=False)
        m_u = -2 * (c0 * f0.omega2 - Ku)
    return FormCoefficients(f.jac**-2, m_s, m_u, Z)


# -- operator -------------------------------------------------------------------------

@dataclass(frozen=True)
class StripOperator:
    """Sparse Hermitian form matrix ``A`` with diagonal mass ``mass``.

    ``A`` is the Gram matrix of the discrete form, ``q[g] = g^H A g``; the
    eigenproblem is ``A x = kappa M x``.
    """

    matrix: sparse.csr_matrix
    mass: np.ndarray
    variant: str
    beta: float
    c0: float
    a: float
    grid: StripGrid
    boundary: str
    coeffs: str
    s: np.ndarray
    u: np.ndarray
    gamma_plus: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def hermitian(self) -> sparse.csr_matrix:
        d = sparse.diags(self.mass**-0.5)
        return (d @ self.matrix @ d).tocsr()

    def form(self, g) -> float:
        g = np.asarray(g).ravel()
        return float(np.real(np.vdot(g, self.matrix @ g)))

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.getH()
        return float(abs(d).max()) if d.nnz else 0.0

    def conjugated(self, phase: np.ndarray) -> "StripOperator":
        """``Phi^H A Phi`` for ``Phi = diag(e^{i phase})`` on the active nodes."""
        P = sparse.diags(np.exp(1j * np.asarray(phase).ravel()))
        return replace(self, matrix=(P.getH() @ self.matrix @ P).tocsr())


def _magnetic(Pm, Gm, wm):
    # sum w m Im(conj(Pg) Gg) as a Hermitian matrix
    X = Pm.T @ sparse.diags(wm) @ Gm
    return (X - X.T) / 2j


def assemble(frame: FrameField, c0: float, a: float, beta: float, variant: str,
             grid: StripGrid, *, coeffs: str = "derived", robin: str = "signed") -> StripOperator:
    """Discretize the strip form ``variant`` on ``grid``."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if robin not in ROBIN_MODES:
        raise ValueError(f"robin must be one of {ROBIN_MODES}")
    amax = min(frame.a1, 1 / (2 * frame.gamma_plus))
    if not (0 < a <= amax):
        raise StripError(f"halfwidth a={a} outside (0, min(a1, 1/(2 gamma_+))] = (0, {amax:.6g}]")
    if abs(grid.a - a) > 1e-14 * a:
        raise ValueError("grid halfwidth does not match a")
    if beta > 0 and grid.h_u > 1 / beta:
        need = math.ceil(2 * a * beta) + 1
        raise StripError(f"grid too coarse for the delta ground state: h_u={grid.h_u:.3g} > 1/beta="
                         f"{1 / beta:.3g}; use n_u >= {need + (need + 1) % 2}")
    L = frame.length
    s, u, ds, du, wnode = _directions(grid, L)
    n_s, n_u = grid.n_s, grid.n_u

    cs = form_coefficients(frame, c0, variant, ds.s, ds.u, coeffs)
    cu = form_coefficients(frame, c0, variant, du.s, du.u, coeffs)
    cn = form_coefficients(frame, c0, variant, s, u, coeffs)

    ws = ds.w * cs.stiff_s.ravel()
    A = ds.G.T @ sparse.diags(ws) @ ds.G + du.G.T @ sparse.diags(du.w) @ du.G
    A = A.astype(complex)
    A = A + sparse.diags(wnode * cn.Z.ravel())
    A = A + _magnetic(ds.P, ds.G, ds.w * cs.m_s.ravel())
    if np.any(cu.m_u):
        A = A + _magnetic(du.P, du.G, du.w * cu.m_u.ravel())

    idx = np.arange(n_s * n_u).reshape(n_s, n_u)
    hs = L / n_s
    diag = np.zeros(n_s * n_u)
    diag[idx[:, n_u // 2]] -= beta * hs
    plus = variant.endswith("+")
    if plus:
        boundary = "dirichlet"
    else:
        g = frame.at(s).gamma
        if robin == "signed":
            top, bottom = -0.5 * g / (1 + a * g), 0.5 * g / (1 - a * g)
        else:
            top = bottom = -frame.gamma_plus * np.ones(n_s)
        diag[idx[:, -1]] += hs * top
        diag[idx[:, 0]] += hs * bottom
        boundary = f"robin-{robin}"
    A = (A + sparse.diags(diag)).tocsr()
    A = 0.5 * (A + A.getH())

    S, U = np.meshgrid(s, u, indexing="ij")
    keep = idx[:, 1:-1].ravel() if plus else idx.ravel()
    A = A[keep][:, keep].tocsr()
    return StripOperator(A, wnode[keep], variant, beta, c0, a, grid, boundary, coeffs,
                         S.ravel()[keep], U.ravel()[keep], frame.gamma_plus)


def dump_operator(op: StripOperator, path) -> None:
    """Matrix-market dump of the mass-normalized Hermitian matrix."""
    sio.mmwrite(str(path), op.hermitian(), comment=(
        f"variant={op.variant} beta={op.beta} c0={op.c0} a={op.a} "
        f"grid={op.grid.n_s}x{op.grid.n_u} method={op.grid.method} boundary={op.boundary}"),
        field="complex", symmetry="hermitian")


# -- eigenvalues --------------------------------------------------------------------------

def _shift_below_spectrum(H, sigma: float, tries: int = 30):
    """Lower ``sigma`` until ``H - sigma I`` factors as positive definite.

    Returns the shift and a solver for ``(H - sigma I) x = b``.
    """
    n = H.shape[0]
    dense = H.nnz > DENSE_FILL * n * n and n <= DENSE_LU_LIMIT
    Hd = H.toarray() if dense else None
    eye = sparse.identity(n, format="csc", dtype=complex)
    step = max(abs(sigma), 1.0)
    for _ in range(tries):
        if dense:
            # Fourier coupling in s fills a sparse factor almost completely
            try:
                cho = linalg.cho_factor(Hd - sigma * np.eye(n))
            except linalg.LinAlgError:
                cho = None
            if cho is not None:
                return sigma, splinalg.LinearOperator((n, n), lambda x: linalg.cho_solve(cho, x),
                                                      dtype=complex)
        else:
            # no pivoting: all pivots positive iff positive definite
            try:
                lu = splinalg.splu((H - sigma * eye).tocsc(), permc_spec="MMD_AT_PLUS_A",
                                   diag_pivot_thresh=0.0, options={"SymmetricMode": True})
                piv = lu.U.diagonal()
                ok = bool(np.all(piv.real > 0) and np.all(np.isfinite(piv)))
            except RuntimeError:
                ok = False
            if ok:
                return sigma, splinalg.LinearOperator((n, n), lu.solve, dtype=complex)
        sigma -= step
        step *= 2
    raise EigenSolverError("could not place a shift below the spectrum")


def lowest_eigs(op: StripOperator, k: int = 3, *, vectors: bool = False,
                maxiter: int | None = None) -> SpectralResult:
    """``k`` lowest eigenvalues of ``A x = kappa M x``.

    Dense for small systems, otherwise shift-invert Lanczos from a fixed
    start vector. The shift starts at ``-beta^2/4 - gamma_+^2 - 1`` and is
    lowered until ``H - sigma`` is positive definite, so no eigenvalue can
    hide below it.
    """
    if not 1 <= k <= 10:
        raise ValueError("k must be between 1 and 10")
    H = op.hermitian()
    n = H.shape[0]
    if n <= DENSE_LIMIT:
        vals, vecs = linalg.eigh(H.toarray(), subset_by_index=(0, k - 1))
        method = "dense"
    else:
        sigma, opinv = _shift_below_spectrum(H, -op.beta**2 / 4 - op.gamma_plus**2 - 1)
        v0 = np.ones(n, dtype=complex) / math.sqrt(n)
        try:
            vals, vecs = splinalg.eigsh(H, k=k, sigma=sigma, which="LA", v0=v0, tol=0,
                                        maxiter=maxiter, OPinv=opinv)
        except splinalg.ArpackNoConvergence as exc:
            raise EigenSolverError(f"shift-invert Lanczos did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        method = "shift-invert"
    res = np.linalg.norm(H @ vecs - vecs * vals, axis=0)
    bad = res > RESIDUAL_TOL * np.maximum(np.abs(vals), 1.0)
    if np.any(bad):
        raise EigenSolverError(f"eigen-residuals too large: {res}")
    out = vecs * (op.mass**-0.5)[:, None] if vectors else None
    return SpectralResult(np.asarray(vals, float), out, f"strip-{op.grid.method}-{method}", n, res)


@dataclass(frozen=True)
class ConvergedEigs:
    values: np.ndarray
    tol: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    grids: tuple


def converged_eigs(frame: FrameField, c0: float, a: float, beta: float, variant: str,
                   grid: StripGrid, k: int = 3, *, coeffs: str = "derived",
                   robin: str = "signed") -> ConvergedEigs:
    """Eigenvalues with a discretization error estimate.

    FV: Richardson extrapolation over one halving, tolerance ``|k_h - k_h/2|/3``.
    Spectral: finer of two resolutions, tolerance their difference (floored
    at a few ulps of ``|kappa|``).
    """
    fine_grid = grid.refined()
    k1 = lowest_eigs(assemble(frame, c0, a, beta, variant, grid, coeffs=coeffs, robin=robin), k).eigenvalues
    k2 = lowest_eigs(assemble(frame, c0, a, beta, variant, fine_grid, coeffs=coeffs, robin=robin), k).eigenvalues
    floor = 64 * np.finfo(float).eps * np.maximum(np.abs(k2), 1.0)
    if grid.method == "fv":
        vals = (4 * k2 - k1) / 3
        tol = np.abs(k2 - k1) / 3
    else:
        vals, tol = k2, np.abs(k2 - k1)
    return ConvergedEigs(vals, np.maximum(tol, floor), k1, k2, (grid, fine_grid))


# -- gauge equivalence ---------------------------------------------------------------------

@dataclass(frozen=True)
class Lemma2Report:
    similarity_error: float
    form_defect: float
    differences: tuple        # max_j |kappa_b - kappa_bt| on each grid
    rate: float
    overlaps: tuple
    extrapolated_gap: float
    envelope: float
    kappa_b: np.ndarray
    kappa_bt: np.ndarray
    passed: dict

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def lemma2_check(frame: FrameField, c0: float, a: float, beta: float, grid: StripGrid, *,
                 sign: str = "+", k: int = 3, coeffs: str = "derived", seed: int = 0,
                 rate_window: tuple = (1.6, 2.4)) -> Lemma2Report:
    """Gauge equivalence of the ``b`` and ``bt`` forms.

    (i) the lattice conjugation ``diag(e^{iK}) A_b diag(e^{-iK})`` is an exact
    similarity; (ii) independently assembled ``b`` and ``bt`` converge to
    each other at rate ``h^2`` under one grid halving.
    """
    if grid.method != "fv":
        raise ValueError("the convergence-rate check is defined for the FV scheme")
    vb, vt = "b" + sign, "bt" + sign
    ob = assemble(frame, c0, a, beta, vb, grid, coeffs=coeffs)
    K = gauge_phase(frame, c0, ob.s, ob.u, "paper" if coeffs == "paper" else "derived")
    oc = ob.conjugated(K)
    e_b = lowest_eigs(ob, k, vectors=True)
    e_c = lowest_eigs(oc, k)
    sim = float(np.max(np.abs(e_c.eigenvalues - e_b.eigenvalues) / np.maximum(np.abs(e_b.eigenvalues), 1.0)))

    ot = assemble(frame, c0, a, beta, vt, grid, coeffs=coeffs)
    rng = np.random.default_rng(seed)
    defects = []
    for _ in range(8):
        g = _smooth_vector(rng, ot.s, ot.u, frame.length, a, dirichlet=sign == "+")
        qt, qc = ot.form(g), oc.form(g)
        defects.append(abs(qt - qc) / max(abs(qt), 1.0))

    diffs, overlaps, vals_b, vals_t = [], [], [], []
    for gr in (grid, grid.refined()):
        b_op = ob if gr is grid else assemble(frame, c0, a, beta, vb, gr, coeffs=coeffs)
        t_op = ot if gr is grid else assemble(frame, c0, a, beta, vt, gr, coeffs=coeffs)
        rb = e_b if gr is grid else lowest_eigs(b_op, k, vectors=True)
        rt = lowest_eigs(t_op, k, vectors=True)
        vals_b.append(rb.eigenvalues)
        vals_t.append(rt.eigenvalues)
        diffs.append(float(np.max(np.abs(rb.eigenvalues - rt.eigenvalues))))
        Kg = K if gr is grid else gauge_phase(frame, c0, b_op.s, b_op.u,
                                              "paper" if coeffs == "paper" else "derived")
        xb, xt = rb.eigenvectors[:, 0], np.exp(1j * Kg) * rt.eigenvectors[:, 0]
        m = b_op.mass
        ov = abs(np.vdot(xb, m * xt)) / math.sqrt(np.vdot(xb, m * xb).real * np.vdot(xt, m * xt).real)
        overlaps.append(float(ov))
    rate = math.log2(diffs[0] / diffs[1]) if diffs[1] > 0 and diffs[0] > 0 else float("inf")
    rb_ext = (4 * vals_b[1] - vals_b[0]) / 3
    rt_ext = (4 * vals_t[1] - vals_t[0]) / 3
    gap = float(np.max(np.abs(rb_ext - rt_ext)))
    env = float(np.max(np.abs(vals_b[1] - vals_b[0]) + np.abs(vals_t[1] - vals_t[0]))) / 3
    tiny = 1e-12 * float(np.max(np.abs(vals_b[1])))
    passed = {
        "similarity": sim <= 1e-12,
        "rate": diffs[0] <= tiny or rate_window[0] <= rate <= rate_window[1],
        "extrapolated": gap <= max(env, tiny),
        "overlap": overlaps[1] >= overlaps[0] - 1e-12,
    }
    return Lemma2Report(sim, float(max(defects)), tuple(diffs), rate, tuple(overlaps), gap, env,
                        vals_b[1], vals_t[1], passed)


# -- random smooth test functions and continuum quadrature ------------------------------------

@dataclass(frozen=True)
class SmoothField:
    """``g(s,u) = sum c_kl e^{2 pi i k s/L} P_l(u/a)`` times ``(1 - u^2/a^2)`` if Dirichlet."""

    coef: np.ndarray
    length: float
    a: float
    dirichlet: bool

    def _parts(self, s, u):
        K = (self.coef.shape[0] - 1) // 2
        ks = np.arange(-K, K + 1)
        leg = np.polynomial.legendre
        x = np.asarray(u) / self.a
        ph = np.exp(2j * np.pi * np.outer(np.ravel(s), ks) / self.length)
        dph = ph * (2j * np.pi * ks / self.length)
        P = np.stack([leg.legval(x, np.eye(self.coef.shape[1])[l]) for l in range(self.coef.shape[1])], -1)
        dP = np.stack([leg.legval(x, leg.legder(np.eye(self.coef.shape[1])[l]))
                       for l in range(self.coef.shape[1])], -1) / self.a
        return ph, dph, np.reshape(P, (-1, P.shape[-1])), np.reshape(dP, (-1, dP.shape[-1]))

    def tensor(self, s, u):
        """Values, s- and u-derivatives on the tensor grid ``s x u``."""
        ph, dph, P, dP = self._parts(s, u)
        f = ph @ self.coef @ P.T
        fs = dph @ self.coef @ P.T
        fu = ph @ self.coef @ dP.T
        if self.dirichlet:
            uu = np.ravel(u)[None, :]
            b, db = 1 - (uu / self.a) ** 2, -2 * uu / self.a**2
            f, fs, fu = f * b, fs * b, fu * b + f * db
        return f, fs, fu

    def nodes(self, s, u):
        """Values at scattered nodes ``(s_i, u_i)``."""
        ss, inv_s = np.unique(s, return_inverse=True)
        uu, inv_u = np.unique(u, return_inverse=True)
        f, _, _ = self.tensor(ss, uu)
        return f[inv_s, inv_u]


def random_smooth_field(rng, length, a, *, dirichlet, modes=3, degree=4) -> SmoothField:
    c = rng.standard_normal((2 * modes + 1, degree + 1)) + 1j * rng.standard_normal((2 * modes + 1, degree + 1))
    return SmoothField(c, length, a, dirichlet)


def _smooth_vector(rng, s, u, length, a, dirichlet):
    return random_smooth_field(rng, length, a, dirichlet=dirichlet).nodes(s, u)


def continuum_form(frame: FrameField, field: SmoothField, c0: float, beta: float, variant: str,
                   *, coeffs: str = "derived", robin: str = "signed", n_s: int = 96,
                   n_gauss: int = 40) -> float:
    """The strip form evaluated on a smooth field by high-order quadrature."""
    a = field.a
    s = np.arange(n_s) * frame.length / n_s
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    u = np.concatenate((0.5 * a * (x - 1), 0.5 * a * (x + 1)))
    wu = np.concatenate((w, w)) * 0.5 * a
    ws = frame.length / n_s
    c = form_coefficients(frame, c0, variant, s, u, coeffs)
    f, fs, fu = field.tensor(s, u)
    dens = (c.stiff_s * abs(fs) ** 2 + abs(fu) ** 2 + c.Z * abs(f) ** 2
            + c.m_s * np.imag(np.conj(f) * fs) + c.m_u * np.imag(np.conj(f) * fu))
    total = ws * np.sum(dens * wu[None, :])
    f0, _, _ = field.tensor(s, np.array([-a, 0.0, a]))
    total -= beta * ws * np.sum(abs(f0[:, 1]) ** 2)
    if variant.endswith("-"):
        g = frame.at(s).gamma
        if robin == "signed":
            top, bottom = -0.5 * g / (1 + a * g), 0.5 * g / (1 - a * g)
        else:
            top = bottom = -frame.gamma_plus
        total += ws * np.sum(top * abs(f0[:, 2]) ** 2 + bottom * abs(f0[:, 0]) ** 2)
    return float(total)


@dataclass(frozen=True)
class FormConsistencyReport:
    levels: tuple               # (n_s, n_u) per refinement level
    max_errors: np.ndarray      # max relative error over test vectors, per level
    orders: np.ndarray          # observed orders between consecutive levels
    vector_orders: np.ndarray   # per-vector order on the last pair of levels
    passed: bool


def form_consistency(frame: FrameField, c0: float, a: float, beta: float, *,
                     variants=VARIANTS, n_vectors: int = 100, levels=((32, 17), (64, 33), (128, 65)),
                     min_order: float = 1.8, seed: int = 1, coeffs: str = "derived") -> FormConsistencyReport:
    """Discrete form ``g^H A g`` against continuum quadrature on random smooth fields."""
    rng = np.random.default_rng(seed)
    fields = [(v, random_smooth_field(rng, frame.length, a, dirichlet=v.endswith("+")))
              for v in variants for _ in range(max(1, n_vectors // len(variants)))]
    ref = np.array([continuum_form(frame, fl, c0, beta, v, coeffs=coeffs) for v, fl in fields])
    errs = []
    for ns, nu in levels:
        ops = {v: assemble(frame, c0, a, beta, v, StripGrid(ns, nu, a, "fv"), coeffs=coeffs)
               for v in variants}
        e = [abs(ops[v].form(fl.nodes(ops[v].s, ops[v].u)) - r) / max(abs(r), 1.0)
             for (v, fl), r in zip(fields, ref)]
        errs.append(e)
    errs = np.array(errs)
    mx = errs.max(axis=1)
    orders = np.log2(mx[:-1] / mx[1:])
    vorders = np.log2(errs[-2] / errs[-1])
    return FormConsistencyReport(tuple(levels), mx, orders, vorders, bool(np.all(orders >= min_order)))


# -- bracketing sandwich --------------------------------------------------------------------

def sandwich_check(frame: FrameField, c0: float, beta: float, n: int = 2, grid: StripGrid | None = None,
                   *, a: float | None = None, bc: str = "twisted", coeffs: str = "derived",
                   method: str = "spectral", strict: bool = False) -> BracketReport:
    """Attach ``kappa^+-`` to the bracket and test ``tau- <= kappa- <= kappa+ <= tau+``."""
    cfg = BracketConfig(frame, c0, beta, a, n, bc, coeffs)
    rep = bracket(cfg)
    a = float(cfg.a)
    grid = grid or auto_grid(beta, a, method)
    kp = converged_eigs(frame, c0, a, beta, "b+", grid, n)
    km = converged_eigs(frame, c0, a, beta, "b-", grid, n)
    tol = np.maximum(kp.tol, km.tol)
    lower = rep.minus.tau - tol <= km.values
    order = km.values <= kp.values + tol
    upper = kp.values <= rep.plus.tau + tol
    sw = {"lower": lower, "order": order, "upper": upper,
          "ok": bool(lower.all() and order.all() and upper.all()),
          "tol_plus": kp.tol, "tol_minus": km.tol, "grid": f"{grid.n_s}x{grid.n_u}:{grid.method}"}
    out = replace(rep, kappa_plus=kp.values, kappa_minus=km.values, kappa_tol=tol, sandwich=sw)
    if strict and not sw["ok"]:
        raise SandwichError(
            f"sandwich violated at beta={beta}, c0={c0}: tau-={rep.minus.tau}, kappa-={km.values}, "
            f"kappa+={kp.values}, tau+={rep.plus.tau}, tol={tol}")
    return out
