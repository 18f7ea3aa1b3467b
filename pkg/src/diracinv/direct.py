"""Direct problem: trajectories, characteristic function, eigenvalues.

All integrations use classical RK4 with a fixed number of substeps inside each
interval of the potential grid.  The jump point ``a`` is a grid node, so every
step sees a constant weight.  The potential is linearly interpolated at stage
points.  For a linear system one RK4 step is the matrix polynomial

    P = I + h/6 (K1 + 2 K2 + 2 K3 + K4),

which lets a whole batch of ``lambda`` values advance together: the step
matrices of an interval are built at once and multiplied pairwise.

The substep count of each interval depends on ``lam_scale``, an upper bound
for ``|lambda|`` fixed per run, so every evaluation inside a root search or a
finite difference uses the same discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BoundaryParams,
    Potential,
    Spectrum,
    TrajectoryTable,
    WeightProfile,
    bracket_label,
    node_index,
    reference_eigenvalue,
)
from .errors import DegenerateEigenfunction, IntegrationError, MissedRoot

DEFAULT_STEPS_PER_UNIT = 100.0
DEFAULT_ROOT_TOL = 1e-13
CELLS_PER_BRACKET = 8
_FINE_CELLS_PER_BRACKET = 64
_MAX_BISECTIONS = 200


# Batched 2x2 matrices are tuples (m11, m12, m21, m22) of broadcastable arrays.

def _mm(a, b):
    return (
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    )


def _mv(m, y1, y2):
    return m[0] * y1 + m[1] * y2, m[2] * y1 + m[3] * y2


def _coefficient(p, q, lam_rho):
    # A = [[q, -p - lam rho], [lam rho - p, -q]] so that y' = A y.
    return (q, -p - lam_rho, lam_rho - p, -q)


def _rk4_steps(a0, am, a1, h):
    """Per-step propagators from coefficient matrices at the three stage points."""
    k1 = a0
    t = _mm(am, k1)
    k2 = tuple(am[i] + 0.5 * h * t[i] for i in range(4))
    t = _mm(am, k2)
    k3 = tuple(am[i] + 0.5 * h * t[i] for i in range(4))
    t = _mm(a1, k3)
    k4 = tuple(a1[i] + h * t[i] for i in range(4))
    s = tuple(k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i] for i in range(4))
    return (1.0 + h / 6.0 * s[0], h / 6.0 * s[1], h / 6.0 * s[2], 1.0 + h / 6.0 * s[3])


def _reduce(steps):
    """Ordered product ``P[n-1] ... P[1] P[0]`` along axis 0."""
    m = steps
    while m[0].shape[0] > 1:
        n = m[0].shape[0]
        if n % 2:
            tail = tuple(c[-1:] for c in m)
            m = tuple(c[:-1] for c in m)
        else:
            tail = None
        m = _mm(tuple(c[1::2] for c in m), tuple(c[0::2] for c in m))
        if tail is not None:
            m = tuple(np.concatenate([c, t]) for c, t in zip(m, tail))
    return tuple(c[0] for c in m)


def schedule(pot: Potential, w: WeightProfile, lam_scale: float,
             steps_per_unit: float = DEFAULT_STEPS_PER_UNIT) -> np.ndarray:
    """Even substep counts per grid interval.

    The count resolves ``steps_per_unit`` steps per radian of the local
    oscillation rate ``lam_scale * rho + |Omega| + 1``.
    """
    if steps_per_unit <= 0:
        raise ValueError("steps_per_unit must be positive")
    g = pot.grid
    dx = np.diff(g)
    rho = np.where(g[:-1] >= w.a, w.alpha, 1.0)
    om = np.hypot(pot.p, pot.q)
    om = np.maximum(om[:-1], om[1:])
    rate = abs(float(lam_scale)) * rho + om + 1.0
    n = np.ceil(steps_per_unit * dx * rate / 2.0).astype(int) * 2
    return np.maximum(n, 2)


def _lam_scale(lam) -> float:
    return float(math.ceil(np.max(np.abs(lam)))) if np.size(lam) else 0.0


def _sweep(pot, w, lam, y0, n_sub, backward=False, fine=False):
    """Integrate a batch of ``lambda`` values across the grid.

    Returns node values ``(M+1, K, 2)``; with ``fine`` also the substep
    positions and values ``(S+1,)`` and ``(S+1, K, 2)`` in increasing ``x``.
    """
    g = pot.grid
    M = len(g) - 1
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    K = lam.size
    y1 = np.full(K, float(y0[0]))
    y2 = np.full(K, float(y0[1]))
    nodes = np.empty((M + 1, K, 2))
    fx, fy = [], []
    order = range(M - 1, -1, -1) if backward else range(M)
    start_node = M if backward else 0
    nodes[start_node, :, 0] = y1
    nodes[start_node, :, 1] = y2
    for i in order:
        x0, x1 = g[i], g[i + 1]
        n = int(n_sub[i])
        rho = w.alpha if x0 >= w.a else 1.0
        width = x1 - x0
        h = -width / n if backward else width / n
        origin = x1 if backward else x0
        k = np.arange(n)
        frac0 = (origin + k * h - x0) / width
        fracm = (origin + (k + 0.5) * h - x0) / width
        frac1 = (origin + (k + 1) * h - x0) / width
        dp, dq = pot.p[i + 1] - pot.p[i], pot.q[i + 1] - pot.q[i]
        lr = (lam * rho)[None, :]
        stages = []
        for fr in (frac0, fracm, frac1):
            p = (pot.p[i] + fr * dp)[:, None]
            q = (pot.q[i] + fr * dq)[:, None]
            stages.append(_coefficient(p, q, lr))
        steps = _rk4_steps(*stages, h)
        if fine:
            ys = np.empty((n + 1, K, 2))
            ys[0, :, 0], ys[0, :, 1] = y1, y2
            for j in range(n):
                y1, y2 = _mv(tuple(c[j] for c in steps), y1, y2)
                ys[j + 1, :, 0], ys[j + 1, :, 1] = y1, y2
            xs = origin + np.arange(n + 1) * h
            xs[-1] = x0 if backward else x1
            if backward:
                xs, ys = xs[::-1], ys[::-1]
            fx.append(xs)
            fy.append(ys)
        else:
            y1, y2 = _mv(_reduce(steps), y1, y2)
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y2))):
            raise IntegrationError("non-finite trajectory value", x0 if backward else x1)
        end = i if backward else i + 1
        nodes[end, :, 0], nodes[end, :, 1] = y1, y2
    if not fine:
        return nodes
    if backward:
        fx, fy = fx[::-1], fy[::-1]
    xs = np.concatenate([fx[0]] + [f[1:] for f in fx[1:]])
    ys = np.concatenate([fy[0]] + [f[1:] for f in fy[1:]])
    return nodes, xs, ys


def _resolve_schedule(pot, w, lam, lam_scale, steps_per_unit, n_sub):
    if n_sub is not None:
        n_sub = np.asarray(n_sub, dtype=int)
        if n_sub.shape != (len(pot.grid) - 1,) or np.any(n_sub < 1):
            raise ValueError("n_sub needs one positive count per grid interval")
        return n_sub
    scale = _lam_scale(lam) if lam_scale is None else lam_scale
    return schedule(pot, w, scale, steps_per_unit)


def _check_grid(pot, w):
    node_index(pot.grid, w.a)


def phi_values(pot: Potential, w: WeightProfile, lam, *, lam_scale=None,
               steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_sub=None) -> np.ndarray:
    """``phi(x_i, lambda_k)`` on the potential grid, shape ``(M+1, K, 2)``."""
    _check_grid(pot, w)
    ns = _resolve_schedule(pot, w, lam, lam_scale, steps_per_unit, n_sub)
    return _sweep(pot, w, lam, (0.0, -1.0), ns)


def phi_fine(pot: Potential, w: WeightProfile, lam, *, lam_scale=None,
             steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_sub=None):
    """``phi`` at every RK4 substep.

    Returns
    -------
    xs : array, shape (S+1,)
    ys : array, shape (S+1, K, 2)
    n_sub : array
        Substep counts per grid interval, for quadrature on ``xs``.
    """
    _check_grid(pot, w)
    ns = _resolve_schedule(pot, w, lam, lam_scale, steps_per_unit, n_sub)
    _, xs, ys = _sweep(pot, w, lam, (0.0, -1.0), ns, fine=True)
    return xs, ys, ns


def psi_values(pot: Potential, w: WeightProfile, bc: BoundaryParams, lam, *,
               lam_scale=None, steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_sub=None) -> np.ndarray:
    """``psi(x_i, lambda_k)``, integrated leftward from ``psi(pi) = (h2, -lambda - h1)``."""
    _check_grid(pot, w)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    ns = _resolve_schedule(pot, w, lam, lam_scale, steps_per_unit, n_sub)
    out = np.empty((len(pot.grid), lam.size, 2))
    # The end value depends on lambda, so propagate the two unit vectors.
    e1 = _sweep(pot, w, lam, (1.0, 0.0), ns, backward=True)
    e2 = _sweep(pot, w, lam, (0.0, 1.0), ns, backward=True)
    c1 = bc.h2
    c2 = -lam - bc.h1
    out[:] = c1 * e1 + c2[None, :, None] * e2
    out[-1, :, 0] = c1
    out[-1, :, 1] = c2
    return out


def integrate_phi(pot: Potential, w: WeightProfile, lam: float, **kw) -> TrajectoryTable:
    """Solution with ``phi(0) = (0, -1)`` sampled on the potential grid."""
    return TrajectoryTable(float(lam), pot.grid, phi_values(pot, w, [lam], **kw)[:, 0, :])


def integrate_psi(pot: Potential, w: WeightProfile, bc: BoundaryParams, lam: float, **kw) -> TrajectoryTable:
    """Solution with ``psi(pi) = (h2, -lambda - h1)`` sampled on the potential grid."""
    return TrajectoryTable(float(lam), pot.grid, psi_values(pot, w, bc, [lam], **kw)[:, 0, :])


def wronskian(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``phi2 psi1 - phi1 psi2`` along the last axis."""
    return phi[..., 1] * psi[..., 0] - phi[..., 0] * psi[..., 1]


@dataclass(frozen=True)
class CharSample:
    """Value of the characteristic function at one ``lambda``."""

    lam: float
    delta: float
    phi_at_pi: tuple[float, float]


def char_values(pot: Potential, w: WeightProfile, bc: BoundaryParams, lam, **kw):
    """Vectorized ``Delta(lambda)`` and ``phi(pi, lambda)``.

    Returns
    -------
    delta : array, shape (K,)
    phi_pi : array, shape (K, 2)
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    phi_pi = phi_values(pot, w, lam, **kw)[-1]
    delta = (lam + bc.h1) * phi_pi[:, 0] + bc.h2 * phi_pi[:, 1]
    return delta, phi_pi


def char_function(pot: Potential, w: WeightProfile, bc: BoundaryParams, lam: float, **kw) -> CharSample:
    """``Delta(lambda) = (lambda + h1) phi1(pi) + h2 phi2(pi)``."""
    d, f = char_values(pot, w, bc, [lam], **kw)
    return CharSample(float(lam), float(d[0]), (float(f[0, 0]), float(f[0, 1])))


def _bisect(fun, lo, hi, flo, fhi, tol):
    lo, hi, flo, fhi = (np.array(v, dtype=float) for v in (lo, hi, flo, fhi))
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > tol * (1.0 + np.abs(mid))) & (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        fm = np.empty_like(mid)
        fm[active] = fun(mid[active])
        fm[~active] = np.nan
        left = active & (np.sign(fm) == np.sign(flo))
        right = active & ~left
        lo[left], flo[left] = mid[left], fm[left]
        hi[right], fhi[right] = mid[right], fm[right]
    pick_lo = np.abs(flo) <= np.abs(fhi)
    return np.where(pick_lo, lo, hi), np.where(pick_lo, flo, fhi)


def window_scale(n_max: int, mu_pi: float) -> float:
    """Run-level ``lam_scale`` for the index window ``[-N, N]``."""
    return float(math.ceil((n_max + 1) * np.pi / mu_pi))


def _scan_roots(fun, lo_edge, width, cells):
    nodes = lo_edge + width * np.arange(cells + 1) / cells
    vals = fun(nodes)
    roots = list(nodes[vals == 0.0])
    sc = np.flatnonzero(vals[:-1] * vals[1:] < 0)
    return roots, nodes, vals, sc


def find_eigenvalues(pot: Potential, w: WeightProfile, bc: BoundaryParams, n_max: int, *,
                     root_tol: float = DEFAULT_ROOT_TOL, steps_per_unit=DEFAULT_STEPS_PER_UNIT,
                     lam_scale=None) -> np.ndarray:
    """Real eigenvalues in the window ``|lambda| < (N + 1/2) pi / mu(pi)``.

    Each bracket ``n pi/mu(pi) +- pi/(2 mu(pi))`` is scanned on
    ``CELLS_PER_BRACKET`` cells; sign changes are refined by bisection.  A
    bracket without a root is rescanned on a finer mesh together with its
    neighbours before :class:`MissedRoot` is raised.  The bracket containing
    ``-h1`` normally holds two eigenvalues, so ``2N + 2`` values are returned.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    L = w.mu_pi
    scale = window_scale(n_max, L) if lam_scale is None else lam_scale

    def delta(lam):
        return char_values(pot, w, bc, lam, lam_scale=scale, steps_per_unit=steps_per_unit)[0]

    step = np.pi / L
    lo_edge = -(n_max + 0.5) * step
    cells = CELLS_PER_BRACKET * (2 * n_max + 1)
    exact, nodes, vals, sc = _scan_roots(delta, lo_edge, (2 * n_max + 1) * step, cells)
    roots, _ = _bisect(delta, nodes[sc], nodes[sc + 1], vals[sc], vals[sc + 1], root_tol)
    roots = np.sort(np.concatenate([roots, exact]))

    labels = bracket_label(roots, L)
    empty = sorted(set(range(-n_max, n_max + 1)) - set(labels.tolist()))
    for n in empty:
        if np.any(bracket_label(roots, L) == n):
            continue
        # Rescan the bracket and its neighbours to split close pairs.
        lo_n = max(reference_eigenvalue(n - 1.5, L), lo_edge)
        hi_n = min(reference_eigenvalue(n + 1.5, L), -lo_edge)
        k = int(round((hi_n - lo_n) / step * _FINE_CELLS_PER_BRACKET))
        ex, nd, vl, s = _scan_roots(delta, lo_n, hi_n - lo_n, k)
        r, _ = _bisect(delta, nd[s], nd[s + 1], vl[s], vl[s + 1], root_tol)
        r = np.concatenate([r, ex])
        if not np.any(bracket_label(r, L) == n):
            raise MissedRoot(n, "no sign change after subdivision")
        keep = np.abs(roots - lo_n - 0.5 * (hi_n - lo_n)) > 0.5 * (hi_n - lo_n)
        roots = np.sort(np.concatenate([roots[keep], r]))
    if np.any(np.diff(roots) <= 0):
        raise MissedRoot(int(bracket_label(roots[np.argmin(np.diff(roots))], L)), "coincident roots")
    return roots


def weighted_quadrature(pot: Potential, w: WeightProfile, xs, n_sub) -> np.ndarray:
    """Composite Simpson weights times ``rho`` on the substep grid of :func:`phi_fine`.

    Each grid interval is its own Simpson panel set, so the rule is split at
    ``a`` and the node ``a`` collects the left and right contributions.
    """
    out = np.zeros(len(xs))
    pos = 0
    for i, n in enumerate(n_sub):
        h = (xs[pos + n] - xs[pos]) / n
        c = np.ones(n + 1)
        c[1:-1:2] = 4.0
        c[2:-1:2] = 2.0
        r = w.alpha if pot.grid[i] >= w.a else 1.0
        out[pos:pos + n + 1] += r * c * h / 3.0
        pos += n
    return out


def normalizing_number(pot: Potential, w: WeightProfile, bc: BoundaryParams, lam_n, *,
                       lam_scale=None, steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_sub=None):
    """``alpha_n = int (phi1^2 + phi2^2) rho dx + phi1(pi)^2 / h2``.

    Accepts a scalar or an array of eigenvalues.
    """
    scalar = np.ndim(lam_n) == 0
    xs, ys, ns = phi_fine(pot, w, np.atleast_1d(lam_n), lam_scale=lam_scale,
                          steps_per_unit=steps_per_unit, n_sub=n_sub)
    wq = weighted_quadrature(pot, w, xs, ns)
    integral = wq @ (ys[..., 0] ** 2 + ys[..., 1] ** 2)
    out = integral + ys[-1, :, 0] ** 2 / bc.h2
    return float(out[0]) if scalar else out


def beta_and_ddelta(pot: Potential, w: WeightProfile, bc: BoundaryParams, lam_n, *,
                    lam_scale=None, steps_per_unit=DEFAULT_STEPS_PER_UNIT,
                    proportionality_tol: float = 1e-6):
    """``beta_n = -psi2(0, lambda_n)`` and ``Delta'(lambda_n)``.

    The derivative is a central difference with step ``1e-5 (1 + |lambda|)``
    improved by one Richardson extrapolation.

    Raises
    ------
    DegenerateEigenfunction
        If ``|psi1(0)|`` exceeds ``proportionality_tol * |psi(0)|``.
    """
    scalar = np.ndim(lam_n) == 0
    lam = np.atleast_1d(np.asarray(lam_n, dtype=float))
    scale = _lam_scale(lam) + 1.0 if lam_scale is None else lam_scale
    psi0 = psi_values(pot, w, bc, lam, lam_scale=scale, steps_per_unit=steps_per_unit)[0]
    bad = np.abs(psi0[:, 0]) > proportionality_tol * np.hypot(psi0[:, 0], psi0[:, 1])
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise DegenerateEigenfunction(float(lam[k]), float(psi0[k, 0]))
    beta = -psi0[:, 1]
    h = 1e-5 * (1.0 + np.abs(lam))
    pts = np.concatenate([lam + h, lam - h, lam + h / 2, lam - h / 2])
    d = char_values(pot, w, bc, pts, lam_scale=scale, steps_per_unit=steps_per_unit)[0].reshape(4, -1)
    d1 = (d[0] - d[1]) / (2 * h)
    d2 = (d[2] - d[3]) / h
    ddelta = (4.0 * d2 - d1) / 3.0
    if scalar:
        return float(beta[0]), float(ddelta[0])
    return beta, ddelta


@dataclass(frozen=True)
class EigenRecord:
    """Per-eigenvalue data and identity residuals."""

    n: int
    lambda_n: float
    alpha_n: float
    beta_n: float
    ddelta_n: float
    delta_residual: float

    @property
    def identity_residual(self) -> float:
        """``|Delta' - beta alpha| / |Delta'|``."""
        return abs(self.ddelta_n - self.beta_n * self.alpha_n) / abs(self.ddelta_n)


def compute_spectrum(pot: Potential, w: WeightProfile, bc: BoundaryParams, n_max: int, *,
                     root_tol: float = DEFAULT_ROOT_TOL, steps_per_unit=DEFAULT_STEPS_PER_UNIT,
                     records: bool = False):
    """Eigenvalues and normalizing numbers over ``[-N, N]``.

    Returns the :class:`Spectrum`, plus a list of :class:`EigenRecord` when
    ``records`` is true.
    """
    scale = window_scale(n_max, w.mu_pi)
    lam = find_eigenvalues(pot, w, bc, n_max, root_tol=root_tol,
                           steps_per_unit=steps_per_unit, lam_scale=scale)
    alpha = normalizing_number(pot, w, bc, lam, lam_scale=scale, steps_per_unit=steps_per_unit)
    spec = Spectrum.from_eigenvalues(n_max, lam, alpha, w.mu_pi)
    if not records:
        return spec
    beta, dd = beta_and_ddelta(pot, w, bc, lam, lam_scale=scale, steps_per_unit=steps_per_unit)
    res = char_values(pot, w, bc, lam, lam_scale=scale, steps_per_unit=steps_per_unit)[0]
    recs = [EigenRecord(int(n), float(l), float(a), float(b), float(d), float(r))
            for n, l, a, b, d, r in zip(spec.index, lam, alpha, beta, dd, res)]
    return spec, recs


def product_char_function(spec: Spectrum, lam):
    """Truncated product ``-mu(pi) (lambda_0^2 - lambda^2) prod (lambda_n^2 - lambda^2) / (n pi/mu(pi))^2``.

    Uses the entries with ``n >= 0``; when an index carries two eigenvalues
    the larger one is used.  For spectra that are not symmetric about zero
    this is a diagnostic, not an identity.
    """
    lam = np.asarray(lam, dtype=float)
    chosen = {}
    for n, l in zip(spec.index, spec.lam):
        if n >= 0:
            chosen[int(n)] = l
    l0 = chosen[0]
    out = -spec.mu_pi * (l0 ** 2 - lam ** 2)
    for n in range(1, spec.n_max + 1):
        ref = reference_eigenvalue(n, spec.mu_pi)
        out = out * (chosen[n] ** 2 - lam ** 2) / ref ** 2
    return float(out) if out.ndim == 0 else out


def wronskian_drift(pot: Potential, w: WeightProfile, bc: BoundaryParams, lam, *,
                    steps_per_unit=DEFAULT_STEPS_PER_UNIT) -> np.ndarray:
    """``max_x |W(x) - W(0)| / |W(0)|`` for each ``lambda``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    scale = _lam_scale(lam)
    phi = phi_values(pot, w, lam, lam_scale=scale, steps_per_unit=steps_per_unit)
    psi = psi_values(pot, w, bc, lam, lam_scale=scale, steps_per_unit=steps_per_unit)
    W = wronskian(phi, psi)
    return np.max(np.abs(W - W[0]), axis=0) / np.abs(W[0])
