"""Numerical checks: expansions, Parseval, boundary constants, round trips."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .core import (
    B,
    BoundaryParams,
    KernelField,
    Potential,
    Spectrum,
    WeightProfile,
    make_grid,
    mu,
    node_index,
    refine_grid,
)
from .direct import (
    compute_spectrum,
    phi_fine,
    phi_values,
    weighted_quadrature,
    window_scale,
)
from .errors import DegenerateSystem, ZeroFunction
from .glm import KernelBuilder, reconstruct_potential, solve_kernel

# Smallest singular-value ratio accepted in the boundary-constant fit.
_RANK_TOL = 1e-10


def default_test_function(x):
    """``(sin 2x, cos x)``; smooth, with ``f1(0) = 0``."""
    x = np.asarray(x, dtype=float)
    return np.stack([np.sin(2 * x), np.cos(x)], axis=-1)


def _sample(f, pot: Potential, xs):
    """``f`` on the fine grid ``xs``: a callable, or node samples interpolated linearly."""
    if callable(f):
        out = np.asarray(f(xs), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != (len(pot.grid), 2):
            raise ValueError("sampled f must have shape (len(grid), 2)")
        out = np.stack([np.interp(xs, pot.grid, vals[:, k]) for k in range(2)], axis=-1)
    if out.shape != (len(xs), 2):
        raise ValueError("f must return an array of shape (n, 2)")
    return out


@dataclass(frozen=True)
class ExpansionCoefficients:
    """``a_n = (1/alpha_n) int phi(t, lambda_n)^T f(t) rho(t) dt``.

    ``inner`` holds the integrals before division by ``alpha_n``.
    """

    index: np.ndarray
    lam: np.ndarray
    coeffs: np.ndarray
    inner: np.ndarray


@dataclass(frozen=True)
class _Projection:
    coeffs: ExpansionCoefficients
    norm2: float
    f_pi: np.ndarray
    phi_pi: np.ndarray


def _project(f, pot, w, spec, steps_per_unit):
    scale = window_scale(spec.n_max, w.mu_pi)
    xs, ys, ns = phi_fine(pot, w, spec.lam, lam_scale=scale, steps_per_unit=steps_per_unit)
    wq = weighted_quadrature(pot, w, xs, ns)
    fv = _sample(f, pot, xs)
    inner = wq @ (ys[..., 0] * fv[:, None, 0] + ys[..., 1] * fv[:, None, 1])
    norm2 = float(wq @ (fv ** 2).sum(-1))
    coeffs = ExpansionCoefficients(spec.index.copy(), spec.lam.copy(), inner / spec.alpha, inner)
    return _Projection(coeffs, norm2, fv[-1], ys[-1])


def expansion_coefficients(f, pot: Potential, w: WeightProfile, bc: BoundaryParams, spec: Spectrum, *,
                           steps_per_unit: float = 100.0) -> ExpansionCoefficients:
    """Coefficients of ``f`` along the eigenfunctions ``phi(., lambda_n)``.

    Parameters
    ----------
    f : callable or array
        Callable mapping positions ``(n,)`` to values ``(n, 2)``, or samples
        on ``pot.grid``.
    bc : BoundaryParams
        Unused by the plain integral; accepted for a uniform signature.
    """
    del bc
    return _project(f, pot, w, spec, steps_per_unit).coeffs


def parseval_residual(f, pot: Potential, w: WeightProfile, bc: BoundaryParams, spec: Spectrum, *,
                      extended: bool = False, steps_per_unit: float = 100.0) -> float:
    """Relative gap ``| ||f||^2 - sum (1/alpha_n) <phi_n, f>^2 | / ||f||^2``.

    With ``extended`` the boundary component ``f1(pi)`` joins ``f``: both
    sides gain the ``1/h2``-weighted boundary products.

    Raises
    ------
    ZeroFunction
        If ``f`` has zero norm.
    """
    pr = _project(f, pot, w, spec, steps_per_unit)
    lhs = pr.norm2
    inner = pr.coeffs.inner
    if extended:
        lhs = lhs + pr.f_pi[0] ** 2 / bc.h2
        inner = inner + pr.phi_pi[:, 0] * pr.f_pi[0] / bc.h2
    if lhs == 0.0:
        raise ZeroFunction("test function has zero norm")
    rhs = float(np.sum(inner ** 2 / spec.alpha))
    return abs(lhs - rhs) / lhs


def synthesize(coeffs, trajectories) -> np.ndarray:
    """``sum_n a_n phi(x, lambda_n)``.

    Parameters
    ----------
    coeffs : ExpansionCoefficients or array of shape (K,)
    trajectories : array of shape (n, K, 2) or sequence of TrajectoryTable
    """
    a = coeffs.coeffs if isinstance(coeffs, ExpansionCoefficients) else np.asarray(coeffs, dtype=float)
    if isinstance(trajectories, np.ndarray):
        Y = trajectories
    else:
        Y = np.stack([t.values for t in trajectories], axis=1)
    if Y.shape[1] != a.shape[0]:
        raise ValueError("coefficients and trajectories disagree in count")
    return np.einsum("k,nkc->nc", a, Y)


@dataclass(frozen=True)
class BoundaryFit:
    """Least-squares boundary constants and per-eigenvalue relation residuals."""

    h1: float
    h2: float
    residuals: np.ndarray = field(repr=False)


def recover_boundary_constants(spec: Spectrum, pot: Potential, w: WeightProfile, *,
                               steps_per_unit: float = 100.0) -> BoundaryFit:
    """Fit ``(h1, h2)`` from ``lambda phi1 + h1 phi1 + h2 phi2 = 0`` at ``x = pi``.

    ``phi(pi, lambda_n)`` comes from integrating ``pot``; every eigenvalue
    of ``spec`` enters the least-squares system.

    Raises
    ------
    DegenerateSystem
        If the system matrix is numerically rank-deficient.
    """
    if len(spec) < 2:
        raise DegenerateSystem("at least two eigenvalues are required")
    scale = window_scale(spec.n_max, w.mu_pi)
    f = phi_values(pot, w, spec.lam, lam_scale=scale, steps_per_unit=steps_per_unit)[-1]
    mat = f.copy()
    rhs = -spec.lam * f[:, 0]
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] <= _RANK_TOL * sv[0]:
        raise DegenerateSystem(f"singular values {sv[0]:.3e}, {sv[-1]:.3e}")
    h1, h2 = np.linalg.lstsq(mat, rhs, rcond=None)[0]
    res = (spec.lam + h1) * f[:, 0] + h2 * f[:, 1]
    return BoundaryFit(float(h1), float(h2), res)


def relative_l2(err, ref, x) -> float:
    """``||err|| / ||ref||`` in ``L2(0, pi)`` by the trapezoid rule; absolute when ``ref = 0``."""
    ne = float(np.sqrt(np.trapezoid(np.asarray(err) ** 2, x)))
    nr = float(np.sqrt(np.trapezoid(np.asarray(ref) ** 2, x)))
    return ne / nr if nr > 0 else ne


def fd_derivative(x, y) -> np.ndarray:
    """Fourth-order finite differences on a uniform grid (one-sided at the ends)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 5:
        return np.gradient(y, x, axis=0)
    h = (x[-1] - x[0]) / (n - 1)
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    fwd1 = np.array([-3, -10, 18, -6, 1]) / (12 * h)
    d[0] = np.tensordot(fwd, y[:5], axes=(0, 0))
    d[1] = np.tensordot(fwd1, y[:5], axes=(0, 0))
    d[-1] = -np.tensordot(fwd, y[::-1][:5], axes=(0, 0))
    d[-2] = -np.tensordot(fwd1, y[::-1][:5], axes=(0, 0))
    return d


def _side_integral(xs, vals, quadrature):
    if quadrature == "spline" and len(xs) >= 4:
        return CubicSpline(xs, vals).integrate(xs[0], xs[-1])
    return np.trapezoid(vals, xs, axis=0)


def transformed_solution(field: KernelField, w: WeightProfile, lam: float,
                         quadrature: str = "spline") -> np.ndarray:
    """``phi0(x) + int_0^x A(x, mu(t)) phi0(t) rho(t) dt`` on the field grid.

    ``phi0(x) = (sin(lam mu(x)), -cos(lam mu(x)))``.  The integral is taken
    separately on each side of ``a``, with cubic splines through the kernel
    samples (``"spline"``) or the trapezoid rule (``"trapezoid"``).
    """
    if quadrature not in ("spline", "trapezoid"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    g = field.grid
    k = node_index(g, w.a)
    v = mu(g, w)
    phi0 = np.stack([np.sin(lam * v), -np.cos(lam * v)], axis=-1)
    out = phi0.copy()
    for i, row in enumerate(field.rows):
        if i == 0:
            continue
        integrand = np.einsum("jrc,jc->jr", row, phi0[: i + 1])
        for lo, hi, rho in ((0, min(i, k), 1.0), (k, i, w.alpha)):
            if hi > lo:
                out[i] += rho * _side_integral(g[lo:hi + 1], integrand[lo:hi + 1], quadrature)
    return out


def trajectory_residual(field: KernelField, w: WeightProfile, lam: float, *,
                        form: str = "integral", quadrature: str = "spline") -> float:
    """Residual of ``B y' + Omega y = lam rho y`` for the transformed solution.

    ``Omega`` is formed from the kernel diagonal with the one-sided weight on
    each side of ``a``, which is the potential the truncated kernel actually
    belongs to.

    Parameters
    ----------
    form : {"integral", "pointwise"}
        ``"integral"`` returns the max over ``x`` of
        ``|B (y(x) - y(0)) + int_0^x (Omega - lam rho) y|`` with cumulative
        Simpson sums; ``"pointwise"`` returns the max of the pointwise
        residual with :func:`fd_derivative` on each side of ``a``.
    """
    g = field.grid
    y = transformed_solution(field, w, lam, quadrature)
    k = node_index(g, w.a)
    A = field.diagonal
    C = A @ B - B @ A
    sides = ((slice(0, k + 1), 1.0), (slice(k, len(g)), w.alpha))
    if form == "pointwise":
        worst = 0.0
        for sl, rho in sides:
            dy = fd_derivative(g[sl], y[sl])
            r = dy @ B.T + np.einsum("nrc,nc->nr", rho * C[sl], y[sl]) - lam * rho * y[sl]
            worst = max(worst, float(np.max(np.hypot(r[:, 0], r[:, 1]))))
        return worst
    if form != "integral":
        raise ValueError(f"unknown form {form!r}")
    acc = np.zeros_like(y)
    start = np.zeros(2)
    for sl, rho in sides:
        ys = y[sl]
        integrand = np.einsum("nrc,nc->nr", rho * C[sl], ys) - lam * rho * ys
        acc[sl] = start + cumulative_simpson(integrand, x=g[sl], axis=0, initial=0.0)
        start = acc[k].copy()
    R = (y - y[0]) @ B.T + acc
    return float(np.max(np.hypot(R[:, 0], R[:, 1])))


def kernel_self_convergence(kb: KernelBuilder, grid, levels: int = 3, *, threads: int = 1) -> np.ndarray:
    """Max kernel differences between successive midpoint refinements of ``grid``.

    ``diffs[k] = max |A_(k) - A_(k+1)|`` over all outer and inner nodes of
    grid ``k``, where ``A_(k)`` is solved after ``k`` refinements.
    """
    grids = [np.asarray(grid, dtype=float)]
    for _ in range(levels - 1):
        grids.append(refine_grid(grids[-1]))
    fields = [solve_kernel(kb, g, threads=threads, with_cond=False)[0] for g in grids]
    diffs = []
    for k in range(levels - 1):
        coarse, fine = fields[k], fields[k + 1]
        d = max(float(np.max(np.abs(coarse.rows[i] - fine.rows[2 * i][::2]))) for i in range(len(coarse.grid)))
        diffs.append(d)
    return np.array(diffs)


def discretization_estimate(diff: float) -> float:
    """Richardson estimate ``(4/3) d`` of the coarse kernel error from ``d = max |A_J - A_2J|``."""
    return 4.0 / 3.0 * float(diff)


@dataclass
class RoundTripReport:
    """Summary of a direct-then-inverse run.

    Field names match the report file keys.
    """

    n_max: int
    grid_intervals: int
    colloc_intervals: int
    n_eigenvalues: int
    reference: str
    errors_p_L2_rel: float
    errors_q_L2_rel: float
    max_asym_defect: float
    max_a0_residual: float
    max_condition: float
    parseval_residual: float
    h1_hat: float
    h2_hat: float
    timings_direct: float = 0.0
    timings_inverse: float = 0.0
    timings_verify: float = 0.0
    per_x: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def error_budget(self) -> float:
        """Largest of the two relative potential errors."""
        return max(self.errors_p_L2_rel, self.errors_q_L2_rel)

    def fields(self) -> dict:
        d = asdict(self)
        d.pop("per_x")
        return d


def roundtrip_report(pot_in: Potential, w: WeightProfile, bc: BoundaryParams, N: int, J: int, *,
                     tail: str = "comparison", threads: int = 1, root_tol: float = 1e-13,
                     steps_per_unit: float = 100.0, glm_tol: float = 1e-10,
                     test_function=default_test_function):
    """Direct problem, reconstruction, and comparison with ``pot_in``.

    Errors raised inside a stage carry a ``stage`` attribute naming it.

    Returns
    -------
    report : RoundTripReport
    spec : Spectrum
    pot_hat : Potential
    """
    t0 = time.perf_counter()
    with _stage("direct"):
        spec = compute_spectrum(pot_in, w, bc, N, root_tol=root_tol, steps_per_unit=steps_per_unit)
    t1 = time.perf_counter()
    with _stage("inverse"):
        grid = make_grid(w, J)
        pot_hat, diag, _ = reconstruct_potential(spec, w, grid, tail=tail, threads=threads, tol=glm_tol)
    t2 = time.perf_counter()
    with _stage("verify"):
        ref = pot_in.resample(grid)
        ep = relative_l2(pot_hat.p - ref.p, ref.p, grid)
        eq = relative_l2(pot_hat.q - ref.q, ref.q, grid)
        pars = parseval_residual(test_function, pot_in, w, bc, spec, steps_per_unit=steps_per_unit)
        fit = recover_boundary_constants(spec, pot_hat, w, steps_per_unit=steps_per_unit)
    t3 = time.perf_counter()
    rep = RoundTripReport(
        n_max=N, grid_intervals=len(pot_in.grid) - 1, colloc_intervals=J, n_eigenvalues=len(spec),
        reference=diag.reference, errors_p_L2_rel=ep, errors_q_L2_rel=eq,
        max_asym_defect=diag.max_asym_defect, max_a0_residual=diag.kernel.max_a0_residual,
        max_condition=float(np.max(diag.kernel.cond)), parseval_residual=pars,
        h1_hat=fit.h1, h2_hat=fit.h2,
        timings_direct=t1 - t0, timings_inverse=t2 - t1, timings_verify=t3 - t2,
        per_x={"x": grid, "p_true": ref.p, "q_true": ref.q, "p_hat": pot_hat.p, "q_hat": pot_hat.q},
    )
    return rep, spec, pot_hat


class _stage:
    """Tag exceptions escaping a block with the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not hasattr(exc, "stage"):
            try:
                exc.stage = self.name
            except AttributeError:
                pass
        return False
