import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diracinv.core import (
    BoundaryParams,
    KernelField,
    Potential,
    Spectrum,
    WeightProfile,
    bracket_label,
    builtin_potential,
    grid_split,
    make_grid,
    mu,
    mu_inverse,
    node_index,
    refine_grid,
    validate_grid,
    windowed_envelope,
)
from diracinv.errors import DomainError, SpectrumError

weights = st.builds(
    WeightProfile,
    a=st.floats(0.05, np.pi - 0.05),
    alpha=st.floats(0.1, 10.0),
)


def test_mu_pi_canonical(w0):
    assert w0.mu_pi == pytest.approx(1.5 * np.pi, rel=1e-15)


@given(w=weights, x=st.floats(0.0, np.pi))
def test_mu_round_trip(w, x):
    assert mu_inverse(mu(x, w), w) == pytest.approx(x, abs=1e-12)


@given(w=weights)
def test_mu_endpoints_and_continuity(w):
    assert mu(0.0, w) == 0.0
    assert mu(np.pi, w) == pytest.approx(w.mu_pi, rel=1e-14)
    assert mu(w.a, w) == pytest.approx(w.a, rel=1e-15)


@given(w=weights, x=st.lists(st.floats(0.0, np.pi), min_size=2, max_size=20))
def test_mu_monotone(w, x):
    xs = np.sort(np.array(x))
    assert np.all(np.diff(mu(xs, w)) >= 0)


@pytest.mark.parametrize("x", [-0.1, np.pi + 0.01, np.nan])
def test_mu_domain(w0, x):
    with pytest.raises(DomainError):
        mu(x, w0)


def test_mu_inverse_domain(w0):
    with pytest.raises(DomainError):
        mu_inverse(w0.mu_pi * 1.01, w0)


@pytest.mark.parametrize("a, alpha", [(0.0, 2.0), (np.pi, 2.0), (1.0, 0.0), (1.0, -1.0), (np.inf, 1.0)])
def test_weight_rejects(a, alpha):
    with pytest.raises(DomainError):
        WeightProfile(a, alpha)


def test_weight_alpha_one_is_continuous():
    w = WeightProfile(1.0, 1.0)
    x = np.linspace(0, np.pi, 11)
    np.testing.assert_allclose(mu(x, w), x)
    assert w.mu_pi == pytest.approx(np.pi)


def test_rho_left_value_at_a(w0):
    assert w0.rho(w0.a) == 1.0
    assert w0.rho(w0.a + 1e-9) == 2.0


@pytest.mark.parametrize("h1, h2", [(1.0, 0.0), (1.0, -1.0), (np.nan, 1.0)])
def test_boundary_rejects(h1, h2):
    with pytest.raises(DomainError):
        BoundaryParams(h1, h2)


@pytest.mark.parametrize("n", [2, 9, 100, 201])
def test_make_grid_contains_a(w0, n):
    g = make_grid(w0, n)
    assert len(g) == n + 1
    assert g[0] == 0.0 and g[-1] == np.pi
    k = node_index(g, w0.a)
    assert g[k] == w0.a
    assert sum(grid_split(g, w0)) == n
    validate_grid(g, w0)


def test_make_grid_proportional(w0):
    # Left side carries a / mu(pi) = 1/3 of the travel time.
    assert grid_split(make_grid(w0, 300), w0) == (100, 200)


def test_make_grid_explicit_split(w0):
    assert grid_split(make_grid(w0, 0, split=(3, 5)), w0) == (3, 5)
    with pytest.raises(DomainError):
        make_grid(w0, 0, split=(0, 5))


def test_refine_grid(w0):
    g = make_grid(w0, 10)
    r = refine_grid(g)
    assert len(r) == 21
    np.testing.assert_array_equal(r[::2], g)
    node_index(r, w0.a)


def test_validate_grid_rejects(w0):
    g = make_grid(w0, 10)
    with pytest.raises(DomainError):
        validate_grid(g[::-1], w0)
    with pytest.raises(DomainError):
        validate_grid(np.linspace(0, np.pi, 10), w0)


def test_potential_validation(w0):
    g = make_grid(w0, 10)
    with pytest.raises(DomainError):
        Potential(g, np.zeros(5), np.zeros(11))
    p = np.zeros(11)
    p[3] = np.nan
    with pytest.raises(DomainError):
        Potential(g, p, np.zeros(11))


def test_potential_omega_and_resample(w0):
    g = make_grid(w0, 40)
    pot = builtin_potential("trig", g)
    i = 7
    om = pot.omega(i)
    np.testing.assert_allclose(om, [[pot.p[i], pot.q[i]], [pot.q[i], -pot.p[i]]])
    assert np.trace(om) == 0
    fine = refine_grid(g)
    r = pot.resample(fine)
    np.testing.assert_array_equal(r.p[::2], pot.p)


@pytest.mark.parametrize("name", ["zero", "trig", "bump"])
def test_builtins(w0, name):
    g = make_grid(w0, 50)
    pot = builtin_potential(name, g)
    assert pot.is_zero == (name == "zero")


def test_builtin_trig_values(w0):
    g = make_grid(w0, 50)
    pot = builtin_potential("trig", g, amp_p=0.5, amp_q=0.1)
    np.testing.assert_allclose(pot.p, 0.5 * np.sin(g))
    np.testing.assert_allclose(pot.q, 0.1 * np.cos(g))


def test_builtin_bump_support(w0):
    g = make_grid(w0, 200)
    pot = builtin_potential("bump", g)
    outside = np.abs(g - np.pi / 4) >= np.pi / 8
    assert np.all(pot.p[outside] == 0)
    assert pot.p.max() == pytest.approx(0.3, rel=1e-3)


@pytest.mark.parametrize("name, params", [("nope", {}), ("trig", {"amp": 1.0}), ("bump", {"width": 0.0})])
def test_builtin_rejects(w0, name, params):
    with pytest.raises(DomainError):
        builtin_potential(name, make_grid(w0, 10), **params)


def test_bracket_label(w0):
    n = np.arange(-5, 6)
    lam = n * np.pi / w0.mu_pi
    np.testing.assert_array_equal(bracket_label(lam, w0.mu_pi), n)
    np.testing.assert_array_equal(bracket_label(lam + 0.3 * np.pi / w0.mu_pi, w0.mu_pi), n)


def test_spectrum_reference(w0):
    s = Spectrum.reference(4, w0.mu_pi)
    assert len(s) == 9 and not s.has_extra
    np.testing.assert_allclose(s.lam, 2 * np.arange(-4, 5) / 3, rtol=1e-15)
    np.testing.assert_array_equal(s.eps, 0)
    np.testing.assert_array_equal(s.tau, 0)


def _with_extra(mu_pi):
    lam = np.arange(-3, 4) * np.pi / mu_pi
    lam = np.sort(np.append(lam, lam[2] + 0.2))
    return Spectrum.from_eigenvalues(3, lam, np.ones_like(lam), mu_pi)


def test_spectrum_extra_entry(w0):
    s = _with_extra(w0.mu_pi)
    assert s.has_extra
    assert list(s.index).count(-1) == 2
    t = s.truncate(2)
    assert t.n_max == 2 and len(t) == 6


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda i, l, a: (i[:-1], l[:-1], a[:-1]), "entries"),
        (lambda i, l, a: (i, l, np.where(i == 0, -1.0, a)), "positive"),
        (lambda i, l, a: (i, np.where(i == 1, np.nan, l), a), "non-finite"),
        (lambda i, l, a: (i, l[::-1], a), "increasing"),
    ],
)
def test_spectrum_rejects(w0, mutate, match):
    s = Spectrum.reference(3, w0.mu_pi)
    i, l, a = mutate(s.index.copy(), s.lam.copy(), s.alpha.copy())
    with pytest.raises(SpectrumError, match=match):
        Spectrum(3, i, l, a, w0.mu_pi)


def test_spectrum_rejects_missing_index(w0):
    n = np.array([-2, -1, 1, 1, 2])
    lam = np.array([-2.0, -1.0, 0.5, 1.0, 2.0])
    with pytest.raises(SpectrumError, match="missing"):
        Spectrum(2, n, lam, np.ones(5), w0.mu_pi)


def test_spectrum_arrays_frozen(w0):
    s = Spectrum.reference(2, w0.mu_pi)
    with pytest.raises(ValueError):
        s.lam[0] = 1.0


def test_windowed_envelope():
    n = np.arange(-12, 13)
    vals = 1.0 / (1 + np.abs(n))
    env = windowed_envelope(vals, n, 4, 12, width=4)
    np.testing.assert_allclose(env, [1 / 5, 1 / 9, 1 / 13])
    assert np.all(np.diff(env) <= 0)


def test_kernel_field_shapes(w0):
    g = make_grid(w0, 4)
    rows = [np.full((i + 1, 2, 2), float(i)) for i in range(len(g))]
    f = KernelField(g, rows)
    assert f.dense().shape == (5, 5, 2, 2)
    np.testing.assert_array_equal(f.diagonal[:, 0, 0], np.arange(5))
    np.testing.assert_array_equal(f.at_zero[:, 0, 0], np.arange(5))
    assert np.isnan(f.dense()[0, 1, 0, 0])
    with pytest.raises(DomainError):
        KernelField(g, rows[:-1])
