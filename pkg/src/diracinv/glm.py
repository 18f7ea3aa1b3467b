"""Inverse problem: kernels from spectral data, the main equation, and Omega.

The kernel ``F0(s, t)`` is a paired series over data terms
``(1/alpha_n) col(lambda_n s) col(lambda_n mu(t))^T`` minus matching
reference terms, with ``col(u) = (sin u, -cos u)^T``.  For each outer node
``x`` the main equation

    A(x, mu(t)) + F(x, t) + int_0^x A(x, mu(xi)) F(xi, t) rho(xi) dxi = 0,

with ``F(x, t) = F0(mu(x), t)``, is discretized by the trapezoid rule on the
grid restricted to ``[0, x]`` and solved for the rows of ``A``.

Reference terms
---------------
``tail="none"`` pairs the data with ``lambda_n^0 = n pi / mu(pi)`` and weight
``1/mu(pi)``; the index window is truncated and nothing beyond it is added.

``tail="comparison"`` (default) pairs the data with the spectrum of the
potential-free problem whose boundary constants ``(h1', h2')`` are fitted to
the upper half of the data window.  The two reference choices differ by the
series of the free problem minus the ``lambda_n^0`` series, which vanishes
for ``t < x``; the free spectrum however carries the same ``O(1/n)``
eigenvalue shifts as the data, so the truncated difference no longer builds
a boundary layer at ``x = pi``.  When the data has no duplicated bracket or
the fit is not admissible the ``lambda_n^0`` reference is used.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import B, KernelField, Potential, Spectrum, WeightProfile, make_grid, mu, node_index
from .errors import SingularSystem, SpectrumError

T = np.diag([-1.0, 1.0])
T.flags.writeable = False

DEFAULT_GLM_TOL = 1e-10
# Above this 2-norm condition number the collocation system counts as singular.
COND_LIMIT = 1e12
# Minimum h2' accepted from the comparison fit, relative to mu(pi).
_MIN_FITTED_H2 = 1e-6


def free_eigenvalues(h1: float, h2: float, n_max: int, mu_pi: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and normalizing numbers of the potential-free problem.

    Roots of ``(lambda + h1) sin(lambda L) - h2 cos(lambda L)`` with
    ``|lambda| < (N + 1/2) pi / L``; ``alpha = L + sin^2(lambda L) / h2``.
    """
    L = mu_pi

    def f(lam):
        return (lam + h1) * np.sin(lam * L) - h2 * np.cos(lam * L)

    edge = (n_max + 0.5) * np.pi / L
    nodes = np.linspace(-edge, edge, 64 * (2 * n_max + 1) + 1)
    vals = f(nodes)
    roots = [nodes[k] for k in np.flatnonzero(vals == 0.0)]
    for k in np.flatnonzero(vals[:-1] * vals[1:] < 0):
        roots.append(brentq(f, nodes[k], nodes[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    lam = np.sort(np.array(roots))
    return lam, L + np.sin(lam * L) ** 2 / h2


def fit_boundary_asymptotics(spec: Spectrum, min_index: int | None = None) -> tuple[float, float]:
    """Least-squares ``(h1', h2')`` making ``spec`` look like a free spectrum.

    Solves ``sin(lambda L) h1' - cos(lambda L) h2' = -lambda sin(lambda L)``
    over entries with ``|n| >= min_index`` (default ``N / 2``).
    """
    lo = max(1, spec.n_max // 2) if min_index is None else min_index
    sel = np.abs(spec.index) >= lo
    if np.count_nonzero(sel) < 2:
        sel = np.ones(len(spec), dtype=bool)
    lam = spec.lam[sel]
    s, c = np.sin(lam * spec.mu_pi), np.cos(lam * spec.mu_pi)
    mat = np.column_stack([s, -c])
    sol = np.linalg.lstsq(mat, -lam * s, rcond=None)[0]
    return float(sol[0]), float(sol[1])


@dataclass(frozen=True)
class KernelBuilder:
    """Paired data and reference terms of the kernel series.

    Parameters
    ----------
    spec : Spectrum
    w : WeightProfile
    n_max : int, optional
        Truncation window; defaults to ``spec.n_max``.
    tail : {"comparison", "none"}
        Reference terms; see the module docstring.

    Attributes
    ----------
    lam_data, w_data, lam_ref, w_ref : arrays
        Aligned term pairs.  Unpaired terms carry weight zero on the other side.
    reference : str
        ``"free"`` or ``"nominal"``, the reference actually used.
    fitted : tuple of float or None
        ``(h1', h2')`` of the free reference.
    """

    spec: Spectrum
    w: WeightProfile
    n_max: int | None = None
    tail: str = "comparison"
    lam_data: np.ndarray = field(init=False, repr=False)
    w_data: np.ndarray = field(init=False, repr=False)
    lam_ref: np.ndarray = field(init=False, repr=False)
    w_ref: np.ndarray = field(init=False, repr=False)
    reference: str = field(init=False)
    fitted: tuple | None = field(init=False)

    def __post_init__(self):
        if self.tail not in ("comparison", "none"):
            raise ValueError(f"unknown tail mode {self.tail!r}")
        L = self.w.mu_pi
        if abs(self.spec.mu_pi - L) > 1e-9 * L:
            raise SpectrumError(f"spectrum mu_pi {self.spec.mu_pi!r} does not match weight profile {L!r}")
        N = self.spec.n_max if self.n_max is None else int(self.n_max)
        spec = self.spec if N == self.spec.n_max else self.spec.truncate(N)
        object.__setattr__(self, "n_max", N)

        fitted = None
        if self.tail == "comparison" and spec.has_extra:
            h1f, h2f = fit_boundary_asymptotics(spec)
            if np.isfinite(h1f) and np.isfinite(h2f) and h2f > _MIN_FITTED_H2 * L:
                lr, ar = free_eigenvalues(h1f, h2f, N, L)
                if len(lr) == len(spec):
                    fitted = (h1f, h2f)
        if fitted is not None:
            ld, wd = spec.lam, 1.0 / spec.alpha
            wr = 1.0 / ar
            reference = "free"
        else:
            n = np.arange(-N, N + 1)
            lr = n * np.pi / L
            wr = np.full(n.shape, 1.0 / L)
            # Pair by index; a duplicated index pairs its second entry with nothing.
            ld, wd = [], []
            lr_list, wr_list = [], []
            pos = {}
            for k, m in enumerate(spec.index):
                pos.setdefault(int(m), []).append(k)
            for m, lref, wref in zip(n, lr, wr):
                ks = pos[int(m)]
                ld.append(spec.lam[ks[0]])
                wd.append(1.0 / spec.alpha[ks[0]])
                lr_list.append(lref)
                wr_list.append(wref)
                for k in ks[1:]:
                    ld.append(spec.lam[k])
                    wd.append(1.0 / spec.alpha[k])
                    lr_list.append(0.0)
                    wr_list.append(0.0)
            ld, wd, lr, wr = map(np.array, (ld, wd, lr_list, wr_list))
            reference = "nominal"
        for name, v in (("lam_data", ld), ("w_data", wd), ("lam_ref", lr), ("w_ref", wr)):
            arr = np.array(v, dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "reference", reference)
        object.__setattr__(self, "fitted", fitted)


def _trig_terms(lam, s, v):
    """``sin``/``cos`` of ``lam s`` and ``lam v`` with a trailing term axis."""
    s = np.asarray(s, dtype=float)[..., None]
    v = np.asarray(v, dtype=float)[..., None]
    ss, cs = np.sin(lam * s), np.cos(lam * s)
    sv, cv = np.sin(lam * v), np.cos(lam * v)
    return ss, cs, sv, cv


def build_F0(kb: KernelBuilder, s, t) -> np.ndarray:
    """Paired series ``F0(s, t)``; returns shape ``broadcast(s, t) + (2, 2)``.

    Each data term is differenced with its paired reference term before the
    sum over pairs, so identical data and reference give exact zeros.
    """
    v = mu(t, kb.w)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > 2 * kb.w.mu_pi):
        raise ValueError("s must lie in [0, 2 mu(pi)]")
    sd, cd, tsd, tcd = _trig_terms(kb.lam_data, s, v)
    sr, cr, tsr, tcr = _trig_terms(kb.lam_ref, s, v)
    wd, wr = kb.w_data, kb.w_ref
    f11 = (wd * sd * tsd - wr * sr * tsr).sum(-1)
    f12 = -(wd * sd * tcd - wr * sr * tcr).sum(-1)
    f21 = -(wd * cd * tsd - wr * cr * tsr).sum(-1)
    f22 = (wd * cd * tcd - wr * cr * tcr).sum(-1)
    return np.stack([np.stack([f11, f12], -1), np.stack([f21, f22], -1)], -2)


def build_F(kb: KernelBuilder, x, t) -> np.ndarray:
    """``F(x, t) = F0(mu(x), t)``."""
    return build_F0(kb, mu(x, kb.w), t)


def _rotation_sum(lam, wt, u):
    u = np.asarray(u, dtype=float)[..., None]
    c = (wt * np.cos(lam * u)).sum(-1)
    s = (wt * np.sin(lam * u)).sum(-1)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


@dataclass(frozen=True)
class AProfile:
    """The matrix function ``a(u) = sum [(1/alpha) R(lambda u) - ref]``.

    ``R(u) = [[cos u, -sin u], [sin u, cos u]]``.  Calling the profile sums
    the series exactly at any real ``u`` (``a(-u) = a(u)^T``); ``table``
    holds samples on a uniform grid over ``[0, 2 mu(pi)]`` for export.
    """

    kb: KernelBuilder = field(repr=False)
    u: np.ndarray = field(repr=False)
    table: np.ndarray = field(repr=False)

    def __call__(self, u) -> np.ndarray:
        kb = self.kb
        return _rotation_sum(kb.lam_data, kb.w_data, u) - _rotation_sum(kb.lam_ref, kb.w_ref, u)

    def F0(self, s, t) -> np.ndarray:
        """``F0(s, t) = [a(s - mu(t)) + a(s + mu(t)) T] / 2``."""
        v = mu(t, self.kb.w)
        s = np.asarray(s, dtype=float)
        return 0.5 * (self(s - v) + self(s + v) @ T)


def build_a_profile(kb: KernelBuilder, n_samples: int = 1025) -> AProfile:
    """Tabulate ``a`` on ``n_samples`` uniform points of ``[0, 2 mu(pi)]``."""
    u = np.linspace(0.0, 2.0 * kb.w.mu_pi, n_samples)
    prof = AProfile(kb, u, np.empty((0, 2, 2)))
    table = prof(u)
    u.flags.writeable = False
    table.flags.writeable = False
    return AProfile(kb, u, table)


def trapezoid_weights(nodes: np.ndarray, w: WeightProfile) -> np.ndarray:
    """Trapezoid weights times ``rho`` on each panel (split at ``a``)."""
    nodes = np.asarray(nodes, dtype=float)
    wt = np.zeros(len(nodes))
    if len(nodes) < 2:
        return wt
    h = np.diff(nodes) * np.where(nodes[:-1] >= w.a, w.alpha, 1.0)
    wt[:-1] += 0.5 * h
    wt[1:] += 0.5 * h
    return wt


def collocation_nodes(w: WeightProfile, x: float, J: int) -> np.ndarray:
    """``J`` trapezoid panels on ``[0, x]`` split at ``a`` in proportion to travel time."""
    if J < 1:
        raise ValueError("J must be positive")
    if x <= w.a or J < 2:
        return np.linspace(0.0, x, J + 1)
    total = mu(x, w)
    n_left = min(max(int(round(J * w.a / total)), 1), J - 1)
    return np.concatenate([np.linspace(0.0, w.a, n_left + 1), np.linspace(w.a, x, J - n_left + 1)[1:]])


@dataclass(frozen=True)
class GlmSystem:
    """Discretized main equation at one outer point.

    ``matrix`` acts on the unknown vector ``(A_r1(t_0..t_n), A_r2(t_0..t_n))``
    of one kernel row ``r``; ``rhs`` has one column per row.
    """

    x: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)

    def solve(self, tol: float = DEFAULT_GLM_TOL, with_cond: bool = True):
        """Solve; returns ``(values (n, 2, 2), cond, relative residual)``.

        Raises
        ------
        SingularSystem
            On a failed factorization, a condition number above ``COND_LIMIT``
            or a relative residual above ``tol``.
        """
        return _solve(self.x, self.matrix, self.rhs, tol, with_cond)


def _solve(x, mat, rhs, tol, with_cond):
    n = mat.shape[0] // 2
    try:
        z = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(x, str(exc)) from None
    cond = float(np.linalg.cond(mat)) if with_cond else float("nan")
    if not np.all(np.isfinite(z)) or cond > COND_LIMIT:
        raise SingularSystem(x, f"condition number {cond:.3e}")
    scale = max(np.abs(rhs).max(), np.abs(z).max(), 1.0)
    res = float(np.abs(mat @ z - rhs).max() / scale)
    if res > tol:
        raise SingularSystem(x, f"relative residual {res:.3e} exceeds {tol:.1e}")
    vals = np.empty((n, 2, 2))
    # Column r of z holds row r of A: first n entries component 1, next n component 2.
    vals[:, :, 0] = z[:n]
    vals[:, :, 1] = z[n:]
    return vals, cond, res


def _assemble(Fnodes, Fx, wt):
    """Block matrix and right-hand side from ``F(xi_k, t_j)`` and ``F(x, t_j)``.

    ``Fnodes[k, j]`` and ``Fx[j]`` are 2x2.  Equation ``(c, j)`` reads
    ``A_rc(t_j) + sum_{k,d} wt_k A_rd(xi_k) F_dc(xi_k, t_j) = -F_rc(x, t_j)``.
    """
    n = len(wt)
    mat = np.eye(2 * n)
    for c in range(2):
        for d in range(2):
            mat[c * n:(c + 1) * n, d * n:(d + 1) * n] += Fnodes[:, :, d, c].T * wt[None, :]
    rhs = np.empty((2 * n, 2))
    for r in range(2):
        for c in range(2):
            rhs[c * n:(c + 1) * n, r] = -Fx[:, r, c]
    return mat, rhs


def assemble_glm_system(kb: KernelBuilder, x: float, J: int) -> GlmSystem:
    """Main equation at ``x`` on ``J`` trapezoid panels.

    Parameters
    ----------
    kb : KernelBuilder
    x : float
        Outer point in ``(0, pi]``.
    J : int
        Number of panels, at least 8.  Nodes include 0, ``x`` and ``a``
        when ``x > a``.
    """
    if not 0.0 < x <= np.pi:
        raise ValueError("x must lie in (0, pi]")
    if J < 8:
        raise ValueError("J must be at least 8")
    nodes = collocation_nodes(kb.w, x, J)
    wt = trapezoid_weights(nodes, kb.w)
    Fnodes = build_F(kb, nodes[:, None], nodes[None, :])
    Fx = build_F(kb, x, nodes)
    mat, rhs = _assemble(Fnodes, Fx, wt)
    return GlmSystem(float(x), nodes, wt, mat, rhs)


def grid_kernel(kb: KernelBuilder, grid: np.ndarray) -> np.ndarray:
    """``F(x_i, x_j)`` for all grid pairs, shape ``(n, n, 2, 2)``.

    Uses matrix products; data and reference parts are formed separately and
    then differenced.
    """
    v = mu(np.asarray(grid, dtype=float), kb.w)

    def part(lam, wt):
        S = np.sin(np.outer(lam, v))
        C = np.cos(np.outer(lam, v))
        WS, WC = S * wt[:, None], C * wt[:, None]
        out = np.empty((len(v), len(v), 2, 2))
        out[..., 0, 0] = WS.T @ S
        out[..., 0, 1] = -(WS.T @ C)
        out[..., 1, 0] = -(WC.T @ S)
        out[..., 1, 1] = WC.T @ C
        return out

    return part(kb.lam_data, kb.w_data) - part(kb.lam_ref, kb.w_ref)


@dataclass(frozen=True)
class KernelDiagnostics:
    """Per-outer-node solver diagnostics (index 0 is the trivial node ``x = 0``)."""

    cond: np.ndarray
    residual: np.ndarray
    a0_residual: np.ndarray

    @property
    def max_a0_residual(self) -> float:
        return float(np.max(self.a0_residual))


def solve_kernel(kb: KernelBuilder, grid, *, threads: int = 1, tol: float = DEFAULT_GLM_TOL,
                 with_cond: bool = True) -> tuple[KernelField, KernelDiagnostics]:
    """Solve the main equation at every grid node.

    The inner nodes at ``x_i`` are ``grid[: i + 1]``.  The solves are
    independent and run on up to ``threads`` workers; results are merged by
    index, so the output does not depend on ``threads``.
    """
    g = np.asarray(grid, dtype=float)
    node_index(g, kb.w.a)
    F = grid_kernel(kb, g)

    def one(i):
        if i == 0:
            return -F[0, :1], 1.0, 0.0
        n = i + 1
        wt = trapezoid_weights(g[:n], kb.w)
        mat, rhs = _assemble(F[:n, :n], F[i, :n], wt)
        try:
            return _solve(g[i], mat, rhs, tol, with_cond)
        except SingularSystem as exc:
            raise SingularSystem(g[i], str(exc)) from None

    idx = range(len(g))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, idx))
    else:
        out = [one(i) for i in idx]
    rows = [o[0] for o in out]
    field_ = KernelField(g, tuple(rows))
    a0 = np.array([abs(r[0, 0, 0]) + abs(r[0, 1, 0]) for r in rows])
    diag = KernelDiagnostics(np.array([o[1] for o in out]), np.array([o[2] for o in out]), a0)
    return field_, diag


def commutator(A: np.ndarray) -> np.ndarray:
    """``A B - B A`` for a stack of 2x2 matrices."""
    return A @ B - B @ A


def recovery_weight(grid, w: WeightProfile) -> np.ndarray:
    """Weight multiplying ``A B - B A`` in the recovery of ``Omega``.

    ``rho(x)`` away from ``a``.  At the node ``a`` the truncated kernel takes
    the mean of its one-sided limits, which differ by the factor ``alpha``
    because ``Omega`` is continuous; the harmonic mean ``2 alpha/(1 + alpha)``
    undoes that averaging.
    """
    g = np.asarray(grid, dtype=float)
    r = np.where(g <= w.a, 1.0, w.alpha)
    at_a = np.isclose(g, w.a, rtol=0.0, atol=1e-12)
    r[at_a] = 2.0 * w.alpha / (1.0 + w.alpha)
    return r


def reconstruct_omega(field: KernelField, w: WeightProfile, formula: str = "weighted"):
    """``Omega`` from the kernel diagonal.

    Parameters
    ----------
    formula : {"weighted", "literal"}
        ``"weighted"`` forms ``rho (A B - B A)`` (see :func:`recovery_weight`);
        ``"literal"`` forms ``rho A B - B A``, which agrees only where
        ``rho = 1``.

    Returns
    -------
    pot : Potential
    defect : array
        Frobenius norm of ``M - [[p, q], [q, -p]]`` per node.
    """
    A = field.diagonal
    if formula == "weighted":
        M = recovery_weight(field.grid, w)[:, None, None] * commutator(A)
    elif formula == "literal":
        M = w.rho(field.grid)[:, None, None] * (A @ B) - B @ A
    else:
        raise ValueError(f"unknown formula {formula!r}")
    p = 0.5 * (M[:, 0, 0] - M[:, 1, 1])
    q = 0.5 * (M[:, 0, 1] + M[:, 1, 0])
    proj = np.stack([np.stack([p, q], -1), np.stack([q, -p], -1)], -2)
    defect = np.sqrt(((M - proj) ** 2).sum(axis=(1, 2)))
    return Potential(field.grid, p, q), defect


@dataclass(frozen=True)
class InverseDiagnostics:
    """Diagnostics of a full reconstruction."""

    kernel: KernelDiagnostics
    asym_defect: np.ndarray
    reference: str
    fitted: tuple | None

    @property
    def max_asym_defect(self) -> float:
        return float(np.max(self.asym_defect))


def reconstruct_potential(spec: Spectrum, w: WeightProfile, grid=None, *, J: int | None = None,
                          tail: str = "comparison", threads: int = 1, tol: float = DEFAULT_GLM_TOL,
                          n_max: int | None = None):
    """Spectral data to potential: kernel, main equation, ``Omega``.

    Parameters
    ----------
    grid : array, optional
        Outer and collocation grid containing ``a``.  Built from ``J``
        intervals when omitted.

    Returns
    -------
    pot : Potential
    diagnostics : InverseDiagnostics
    field : KernelField
    """
    if grid is None:
        if J is None:
            raise ValueError("pass grid or J")
        grid = make_grid(w, J)
    kb = KernelBuilder(spec, w, n_max=n_max, tail=tail)
    field_, kd = solve_kernel(kb, grid, threads=threads, tol=tol)
    pot, defect = reconstruct_omega(field_, w)
    return pot, InverseDiagnostics(kd, defect, kb.reference, kb.fitted), field_

