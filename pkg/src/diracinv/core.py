"""Domain types shared by the direct and inverse solvers.

The weighted Dirac system on ``[0, pi]`` is

    B y' + Omega(x) y = lambda rho(x) y,    B = [[0, 1], [-1, 0]],

with ``Omega = [[p, q], [q, -p]]`` and ``rho`` equal to 1 on ``[0, a]`` and to
``alpha`` on ``(a, pi]``.  The travel-time map ``mu(x) = int_0^x rho`` turns
the weight jump into a change of slope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, SpectrumError

B = np.array([[0.0, 1.0], [-1.0, 0.0]])
B.flags.writeable = False

# Relative slack for domain checks on positions produced by arithmetic.
_DOMAIN_SLACK = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class WeightProfile:
    """Piecewise-constant weight with a single jump at ``a``.

    Parameters
    ----------
    a : float
        Jump position, strictly inside ``(0, pi)``.
    alpha : float
        Weight on ``(a, pi]``.  ``alpha = 1`` gives the continuous-weight
        system and is accepted.
    """

    a: float
    alpha: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and 0.0 < self.a < np.pi):
            raise DomainError(f"a must lie in (0, pi), got {self.a!r}")
        if not (np.isfinite(self.alpha) and self.alpha > 0.0):
            raise DomainError(f"alpha must be positive, got {self.alpha!r}")

    @property
    def mu_pi(self) -> float:
        """Total travel time ``mu(pi)``."""
        return self.alpha * np.pi - self.alpha * self.a + self.a

    def rho(self, x):
        """Weight at ``x``; the left value 1 is used at ``x = a``."""
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.a, 1.0, self.alpha)

    def mu(self, x):
        return mu(x, self)

    def mu_inverse(self, s):
        return mu_inverse(s, self)


def _check_range(v, lo, hi, name):
    v = np.asarray(v, dtype=float)
    slack = _DOMAIN_SLACK * max(1.0, abs(hi))
    if not np.all(np.isfinite(v)) or np.any(v < lo - slack) or np.any(v > hi + slack):
        raise DomainError(f"{name} outside [{lo:.17g}, {hi:.17g}]")
    return np.clip(v, lo, hi)


def mu(x, w: WeightProfile):
    """Travel-time map: ``x`` for ``x <= a`` and ``alpha x - alpha a + a`` beyond.

    Raises
    ------
    DomainError
        If any ``x`` lies outside ``[0, pi]``.
    """
    xv = _check_range(x, 0.0, np.pi, "x")
    out = np.where(xv <= w.a, xv, w.alpha * xv - w.alpha * w.a + w.a)
    return float(out) if out.ndim == 0 else out


def mu_inverse(s, w: WeightProfile):
    """Inverse of :func:`mu` on ``[0, mu(pi)]``."""
    sv = _check_range(s, 0.0, w.mu_pi, "s")
    out = np.where(sv <= w.a, sv, sv / w.alpha + w.a - w.a / w.alpha)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundaryParams:
    """Constants of the right-end condition ``(lambda + h1) y1(pi) + h2 y2(pi) = 0``."""

    h1: float
    h2: float

    def __post_init__(self):
        if not np.isfinite(self.h1):
            raise DomainError("h1 must be finite")
        if not (np.isfinite(self.h2) and self.h2 > 0.0):
            raise DomainError(f"h2 must be positive, got {self.h2!r}")


def make_grid(w: WeightProfile, n_intervals: int, split: tuple[int, int] | None = None) -> np.ndarray:
    """Grid on ``[0, pi]`` with ``a`` as an explicit node.

    Intervals are distributed between ``[0, a]`` and ``[a, pi]`` in proportion
    to their travel-time lengths, so the spacing in ``mu`` is nearly uniform.

    Parameters
    ----------
    w : WeightProfile
    n_intervals : int
        Total number of intervals, at least 2.
    split : tuple of int, optional
        Explicit ``(n_left, n_right)`` interval counts; overrides the
        proportional rule.
    """
    if split is None:
        if n_intervals < 2:
            raise DomainError("a grid needs at least 2 intervals")
        n_left = int(round(n_intervals * w.a / w.mu_pi))
        n_left = min(max(n_left, 1), n_intervals - 1)
        split = (n_left, n_intervals - n_left)
    n_left, n_right = split
    if n_left < 1 or n_right < 1:
        raise DomainError("each side of a needs at least one interval")
    left = np.linspace(0.0, w.a, n_left + 1)
    right = np.linspace(w.a, np.pi, n_right + 1)
    return np.concatenate([left, right[1:]])


def grid_split(grid: np.ndarray, w: WeightProfile) -> tuple[int, int]:
    """Return ``(n_left, n_right)`` interval counts of a grid containing ``a``."""
    k = node_index(grid, w.a)
    return k, len(grid) - 1 - k


def refine_grid(grid: np.ndarray) -> np.ndarray:
    """Insert the midpoint of every interval."""
    g = np.asarray(grid, dtype=float)
    out = np.empty(2 * len(g) - 1)
    out[0::2] = g
    out[1::2] = 0.5 * (g[:-1] + g[1:])
    return out


def node_index(grid: np.ndarray, x: float, tol: float = 1e-12) -> int:
    """Index of the node equal to ``x``; raises if absent."""
    g = np.asarray(grid)
    k = int(np.argmin(np.abs(g - x)))
    if abs(g[k] - x) > tol * max(1.0, abs(x)):
        raise DomainError(f"grid has no node at x = {x:.17g}")
    return k


def validate_grid(grid, w: WeightProfile) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) < 3:
        raise DomainError("grid must be a 1-D array with at least 3 nodes")
    if not np.all(np.diff(g) > 0):
        raise DomainError("grid must be strictly increasing")
    if abs(g[0]) > _DOMAIN_SLACK or abs(g[-1] - np.pi) > _DOMAIN_SLACK * np.pi:
        raise DomainError("grid must start at 0 and end at pi")
    node_index(g, w.a)
    return g


@dataclass(frozen=True)
class Potential:
    """Sampled potential ``Omega = [[p, q], [q, -p]]`` with linear interpolation."""

    grid: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        g = _frozen(self.grid)
        p = _frozen(self.p)
        q = _frozen(self.q)
        if g.ndim != 1 or len(g) < 2 or not np.all(np.diff(g) > 0):
            raise DomainError("potential grid must be strictly increasing")
        if p.shape != g.shape or q.shape != g.shape:
            raise DomainError("p and q must have one value per grid node")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise DomainError("p and q must be finite")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_functions(cls, grid, p: Callable, q: Callable) -> "Potential":
        g = np.asarray(grid, dtype=float)
        return cls(g, np.broadcast_to(p(g), g.shape), np.broadcast_to(q(g), g.shape))

    @classmethod
    def zero(cls, grid) -> "Potential":
        g = np.asarray(grid, dtype=float)
        return cls(g, np.zeros_like(g), np.zeros_like(g))

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.p) or np.any(self.q))

    def __call__(self, x):
        """Interpolated ``(p, q)`` at ``x``."""
        return np.interp(x, self.grid, self.p), np.interp(x, self.grid, self.q)

    def omega(self, i: int) -> np.ndarray:
        return omega_matrix(self, i)

    def resample(self, grid) -> "Potential":
        g = np.asarray(grid, dtype=float)
        p, q = self(g)
        return Potential(g, p, q)


def omega_matrix(pot: Potential, i: int) -> np.ndarray:
    """``[[p_i, q_i], [q_i, -p_i]]`` at node ``i``."""
    n = len(pot.grid)
    if not -n <= i < n:
        raise IndexError(f"node index {i} out of range for {n} nodes")
    p, q = pot.p[i], pot.q[i]
    return np.array([[p, q], [q, -p]])


def builtin_potential(name: str, grid, **params) -> Potential:
    """Sample one of the named test potentials.

    ``zero``
        ``p = q = 0``.
    ``trig``
        ``p = amp_p sin x``, ``q = amp_q cos x`` (defaults 0.3 and 0.2).
    ``bump``
        ``(p, q) = (amp_p, amp_q) * b(x)`` with ``b`` the smooth bump
        ``exp(1 - 1 / (1 - r^2))`` for ``r = (x - center) / width``, ``|r| < 1``.
    """
    g = np.asarray(grid, dtype=float)
    if name == "zero":
        _no_extra(name, params, ())
        return Potential.zero(g)
    if name == "trig":
        _no_extra(name, params, ("amp_p", "amp_q"))
        ap = float(params.get("amp_p", 0.3))
        aq = float(params.get("amp_q", 0.2))
        return Potential(g, ap * np.sin(g), aq * np.cos(g))
    if name == "bump":
        _no_extra(name, params, ("amp_p", "amp_q", "center", "width"))
        ap = float(params.get("amp_p", 0.3))
        aq = float(params.get("amp_q", 0.2))
        c = float(params.get("center", np.pi / 4))
        wd = float(params.get("width", np.pi / 8))
        if wd <= 0:
            raise DomainError("bump width must be positive")
        r = (g - c) / wd
        b = np.zeros_like(g)
        inside = np.abs(r) < 1.0
        b[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return Potential(g, ap * b, aq * b)
    raise DomainError(f"unknown builtin potential {name!r}")


def _no_extra(name, params, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise DomainError(f"unknown parameters for {name!r}: {sorted(extra)}")


def reference_eigenvalue(n, mu_pi: float):
    """``n pi / mu(pi)``, the eigenvalues of ``lambda sin(lambda mu(pi))``."""
    return np.asarray(n) * np.pi / mu_pi


def bracket_label(lam, mu_pi: float):
    """Index ``n`` of the bracket ``|lambda - n pi/mu(pi)| <= pi/(2 mu(pi))``."""
    return np.floor(np.asarray(lam) * mu_pi / np.pi + 0.5).astype(int)


@dataclass(frozen=True)
class Spectrum:
    """Spectral data ``{lambda_n, alpha_n}`` over the index window ``[-N, N]``.

    Every index in the window must be present.  One index may appear twice:
    the bracket around ``-h1`` holds two eigenvalues, so a window of ``2N + 1``
    brackets carries ``2N + 2`` eigenvalues when ``h2 > 0``.

    Parameters
    ----------
    n_max : int
        Window half-width ``N``.
    index : array of int
        Bracket index of each entry, non-decreasing.
    lam : array
        Eigenvalues, strictly increasing.
    alpha : array
        Normalizing numbers, positive.
    mu_pi : float
        Travel time ``mu(pi)`` of the generating problem.
    """

    n_max: int
    index: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    mu_pi: float

    def __post_init__(self):
        idx = _frozen(self.index, dtype=int)
        lam = _frozen(self.lam)
        alp = _frozen(self.alpha)
        N = int(self.n_max)
        object.__setattr__(self, "n_max", N)
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "alpha", alp)
        object.__setattr__(self, "mu_pi", float(self.mu_pi))
        if N < 1:
            raise SpectrumError("n_max must be at least 1")
        if not (np.isfinite(self.mu_pi) and self.mu_pi > 0):
            raise SpectrumError("mu_pi must be positive")
        if not (idx.shape == lam.shape == alp.shape and idx.ndim == 1):
            raise SpectrumError("index, lambda and alpha must be 1-D arrays of equal length")
        if len(idx) not in (2 * N + 1, 2 * N + 2):
            raise SpectrumError(f"expected 2N+1 or 2N+2 = {2 * N + 1} or {2 * N + 2} entries, got {len(idx)}")
        bad = np.flatnonzero(~np.isfinite(lam) | ~np.isfinite(alp))
        if bad.size:
            raise SpectrumError(f"non-finite value in entry {bad[0]} (n = {idx[bad[0]]})")
        bad = np.flatnonzero(alp <= 0)
        if bad.size:
            raise SpectrumError(f"alpha must be positive; entry {bad[0]} (n = {idx[bad[0]]}) has {alp[bad[0]]!r}")
        bad = np.flatnonzero(np.diff(lam) <= 0)
        if bad.size:
            raise SpectrumError(f"lambda not strictly increasing at entry {bad[0] + 1} (n = {idx[bad[0] + 1]})")
        if np.any(np.diff(idx) < 0):
            raise SpectrumError("index must be non-decreasing")
        missing = sorted(set(range(-N, N + 1)) - set(idx.tolist()))
        if missing:
            raise SpectrumError(f"index {missing[0]} missing from window [-{N}, {N}]")
        if idx.min() < -N or idx.max() > N:
            raise SpectrumError(f"index outside window [-{N}, {N}]")
        if len(idx) - len(np.unique(idx)) > 1:
            raise SpectrumError("at most one index may appear twice")

    def __len__(self) -> int:
        return len(self.lam)

    @classmethod
    def reference(cls, n_max: int, mu_pi: float) -> "Spectrum":
        """Unperturbed data ``lambda_n = n pi/mu(pi)``, ``alpha_n = mu(pi)``."""
        n = np.arange(-n_max, n_max + 1)
        return cls(n_max, n, reference_eigenvalue(n, mu_pi), np.full(n.shape, float(mu_pi)), mu_pi)

    @classmethod
    def from_eigenvalues(cls, n_max: int, lam, alpha, mu_pi: float) -> "Spectrum":
        """Build a spectrum, labelling entries by bracket."""
        lam = np.asarray(lam, dtype=float)
        return cls(n_max, bracket_label(lam, mu_pi), lam, alpha, mu_pi)

    @property
    def reference_lam(self) -> np.ndarray:
        return reference_eigenvalue(self.index, self.mu_pi)

    @property
    def eps(self) -> np.ndarray:
        """Eigenvalue residuals ``lambda_n - n pi/mu(pi)``."""
        return self.lam - self.reference_lam

    @property
    def tau(self) -> np.ndarray:
        """Normalizing-number residuals ``alpha_n - mu(pi)``."""
        return self.alpha - self.mu_pi

    @property
    def has_extra(self) -> bool:
        """True when one bracket carries two eigenvalues."""
        return len(self.lam) == 2 * self.n_max + 2

    def truncate(self, n_max: int) -> "Spectrum":
        """Restrict to the window ``[-n_max, n_max]``."""
        if not 1 <= n_max <= self.n_max:
            raise SpectrumError(f"cannot truncate window {self.n_max} to {n_max}")
        keep = np.abs(self.index) <= n_max
        return Spectrum(n_max, self.index[keep], self.lam[keep], self.alpha[keep], self.mu_pi)


def windowed_envelope(values, n, lo: int, hi: int, width: int = 4) -> np.ndarray:
    """Block maxima of ``|values|`` over consecutive ``|n|`` windows.

    The range ``lo <= |n| <= hi`` is cut into blocks of ``width`` indices and
    the largest magnitude in each block is returned, ordered by ``|n|``.
    Decay tests check that this sequence is non-increasing.
    """
    v = np.abs(np.asarray(values, dtype=float))
    m = np.abs(np.asarray(n))
    sel = (m >= lo) & (m <= hi)
    v, m = v[sel], m[sel]
    blocks = []
    for start in range(lo, hi + 1, width):
        inb = (m >= start) & (m < start + width)
        if np.any(inb):
            blocks.append(v[inb].max())
    return np.array(blocks)


@dataclass(frozen=True)
class TrajectoryTable:
    """A solution vector ``(y1, y2)`` sampled on a grid for a fixed ``lambda``."""

    lam: float
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen(self.grid))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (len(self.grid), 2):
            raise DomainError("values must have shape (len(grid), 2)")


@dataclass(frozen=True)
class KernelField:
    """Collocation values ``A(x_i, mu(t_j))`` of the transformation kernel.

    Inner nodes for outer node ``x_i`` are ``grid[: i + 1]``, so they always
    contain 0, ``x_i`` and, beyond ``a``, the jump point.

    Attributes
    ----------
    grid : array
        Shared outer and inner node set.
    rows : tuple of arrays
        ``rows[i]`` has shape ``(i + 1, 2, 2)``.
    """

    grid: np.ndarray
    rows: tuple = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen(self.grid))
        rows = tuple(_frozen(r) for r in self.rows)
        if len(rows) != len(self.grid):
            raise DomainError("one row of kernel values per outer node is required")
        for i, r in enumerate(rows):
            if r.shape != (i + 1, 2, 2):
                raise DomainError(f"row {i} has shape {r.shape}, expected {(i + 1, 2, 2)}")
        object.__setattr__(self, "rows", rows)

    @property
    def diagonal(self) -> np.ndarray:
        """``A(x_i, mu(x_i))`` for every outer node."""
        return np.stack([r[-1] for r in self.rows])

    @property
    def at_zero(self) -> np.ndarray:
        """``A(x_i, 0)`` for every outer node."""
        return np.stack([r[0] for r in self.rows])

    def dense(self) -> np.ndarray:
        """Lower-triangular array ``(M+1, M+1, 2, 2)``; entries with ``t > x`` are NaN."""
        n = len(self.grid)
        out = np.full((n, n, 2, 2), np.nan)
        for i, r in enumerate(self.rows):
            out[i, : i + 1] = r
        return out
