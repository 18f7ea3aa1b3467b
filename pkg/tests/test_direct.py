import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import BC0, W0, potential, spectrum
from diracinv.core import BoundaryParams, Potential, Spectrum, WeightProfile, builtin_potential, make_grid, mu
from diracinv.direct import (
    beta_and_ddelta,
    char_function,
    char_values,
    compute_spectrum,
    find_eigenvalues,
    integrate_phi,
    integrate_psi,
    normalizing_number,
    phi_fine,
    phi_values,
    product_char_function,
    psi_values,
    schedule,
    window_scale,
    wronskian,
    wronskian_drift,
)
from diracinv.errors import DegenerateEigenfunction


def free_delta(lam, w, bc):
    L = w.mu_pi
    return (lam + bc.h1) * np.sin(lam * L) - bc.h2 * np.cos(lam * L)


CASES = [
    (WeightProfile(np.pi / 2, 2.0), BoundaryParams(1.0, 1.0)),
    (WeightProfile(1.0, 0.5), BoundaryParams(-0.3, 2.0)),
    (WeightProfile(2.5, 3.0), BoundaryParams(0.0, 0.4)),
    (WeightProfile(1.2, 1.0), BoundaryParams(1.5, 1.0)),
]


@pytest.mark.parametrize("w, bc", CASES)
def test_free_phi_closed_form(w, bc):
    g = make_grid(w, 60)
    lam = np.array([-3.3, -0.4, 0.0, 1.7, 4.1])
    phi = phi_values(Potential.zero(g), w, lam)
    v = mu(g, w)[:, None]
    np.testing.assert_allclose(phi[..., 0], np.sin(lam * v), atol=1e-9)
    np.testing.assert_allclose(phi[..., 1], -np.cos(lam * v), atol=1e-9)


@pytest.mark.parametrize("w, bc", CASES)
def test_free_delta_closed_form(w, bc):
    g = make_grid(w, 60)
    lam = np.linspace(-4, 4, 17)
    delta, _ = char_values(Potential.zero(g), w, bc, lam)
    np.testing.assert_allclose(delta, free_delta(lam, w, bc), atol=1e-9 * (1 + np.abs(lam)).max())


def test_char_function_scalar():
    s = char_function(potential("zero"), W0, BC0, 0.7)
    assert s.lam == 0.7
    assert s.delta == pytest.approx(free_delta(0.7, W0, BC0), abs=1e-10)
    assert s.phi_at_pi[0] == pytest.approx(np.sin(0.7 * W0.mu_pi), abs=1e-10)


def test_trig_phi_matches_scipy_ivp():
    pot = potential("trig")
    lam = 2.3
    table = integrate_phi(pot, W0, lam)

    def rhs(x, y):
        p, q = 0.3 * np.sin(x), 0.2 * np.cos(x)
        lr = lam * W0.rho(x)
        return [q * y[0] + (-p - lr) * y[1], (lr - p) * y[0] - q * y[1]]

    left = solve_ivp(rhs, (0, W0.a), [0.0, -1.0], rtol=1e-12, atol=1e-12, dense_output=True)
    right = solve_ivp(rhs, (W0.a, np.pi), left.y[:, -1], rtol=1e-12, atol=1e-12, dense_output=True)
    g = table.grid
    ref = np.where(g[:, None] <= W0.a, left.sol(np.minimum(g, W0.a)).T, right.sol(np.maximum(g, W0.a)).T)
    # The potential is linear between grid nodes in the integrator, so agreement is O(h^2).
    np.testing.assert_allclose(table.values, ref, atol=2e-4)


def test_psi_end_condition():
    pot = potential("trig")
    lam = np.array([-1.0, 0.5, 3.0])
    psi = psi_values(pot, W0, BC0, lam)
    np.testing.assert_array_equal(psi[-1, :, 0], BC0.h2)
    np.testing.assert_array_equal(psi[-1, :, 1], -lam - BC0.h1)
    table = integrate_psi(pot, W0, BC0, 0.5)
    np.testing.assert_allclose(table.values, psi[:, 1, :])


def test_wronskian_equals_delta():
    pot = potential("trig")
    lam = np.array([-2.2, 0.1, 5.5])
    W = wronskian(phi_values(pot, W0, lam), psi_values(pot, W0, BC0, lam))
    delta, _ = char_values(pot, W0, BC0, lam)
    np.testing.assert_allclose(W, np.broadcast_to(delta, W.shape), rtol=1e-8, atol=1e-10)


def test_wronskian_drift_small():
    assert wronskian_drift(potential("bump"), W0, BC0, [-7.0, 0.3, 11.0]).max() < 1e-10


def test_schedule_even_and_scaled():
    pot = potential("trig")
    n1 = schedule(pot, W0, 5.0)
    n2 = schedule(pot, W0, 50.0)
    assert np.all(n1 % 2 == 0) and np.all(n1 >= 2)
    assert np.all(n2 >= n1)
    with pytest.raises(ValueError):
        schedule(pot, W0, 5.0, steps_per_unit=0)


def test_phi_fine_matches_nodes():
    pot = potential("trig")
    lam = np.array([1.0, 2.0])
    xs, ys, ns = phi_fine(pot, W0, lam, lam_scale=3.0)
    nodes = phi_values(pot, W0, lam, lam_scale=3.0)
    assert len(xs) == ns.sum() + 1
    idx = np.concatenate([[0], np.cumsum(ns)])
    np.testing.assert_allclose(xs[idx], pot.grid)
    np.testing.assert_allclose(ys[idx], nodes, atol=1e-12)


@pytest.mark.parametrize("w, bc", CASES)
def test_free_eigenvalues(w, bc):
    N = 6
    g = make_grid(w, 80)
    lam = find_eigenvalues(Potential.zero(g), w, bc, N)
    assert np.all(np.abs(free_delta(lam, w, bc)) <= 1e-9 * (1 + np.abs(lam)))
    # Count sign changes of the closed form on a fine mesh over the same window.
    edge = (N + 0.5) * np.pi / w.mu_pi
    mesh = np.linspace(-edge, edge, 200001)
    d = free_delta(mesh, w, bc)
    assert len(lam) == np.count_nonzero(d[:-1] * d[1:] < 0)


def test_eigenvalue_count_has_extra():
    spec = spectrum("trig", 16)
    assert len(spec) == 34 and spec.has_extra


@pytest.mark.parametrize("w, bc", CASES)
def test_free_normalizing_numbers(w, bc):
    g = make_grid(w, 80)
    lam = find_eigenvalues(Potential.zero(g), w, bc, 4)
    alpha = normalizing_number(Potential.zero(g), w, bc, lam)
    np.testing.assert_allclose(alpha, w.mu_pi + np.sin(lam * w.mu_pi) ** 2 / bc.h2, atol=1e-8)


def test_normalizing_number_scalar():
    spec = spectrum("zero", 16)
    a = normalizing_number(potential("zero"), W0, BC0, spec.lam[3])
    assert isinstance(a, float)
    assert a == pytest.approx(spec.alpha[3], rel=1e-9)


@pytest.mark.parametrize("name", ["zero", "trig", "bump"])
def test_identity_records(name):
    _, recs = compute_spectrum(potential(name), W0, BC0, 6, records=True)
    assert max(r.identity_residual for r in recs) < 1e-6
    assert max(abs(r.delta_residual) for r in recs) < 1e-9


def test_beta_rejects_non_eigenvalue():
    with pytest.raises(DegenerateEigenfunction):
        beta_and_ddelta(potential("trig"), W0, BC0, 0.123)


def test_free_ddelta_closed_form():
    lam = spectrum("zero", 16).lam[:5]
    L = W0.mu_pi
    exact = np.sin(lam * L) + L * (lam + 1) * np.cos(lam * L) + L * np.sin(lam * L)
    _, dd = beta_and_ddelta(potential("zero"), W0, BC0, lam)
    np.testing.assert_allclose(dd, exact, rtol=1e-7)


def test_spectrum_deterministic():
    a = compute_spectrum(potential("trig"), W0, BC0, 4)
    b = compute_spectrum(potential("trig"), W0, BC0, 4)
    np.testing.assert_array_equal(a.lam, b.lam)
    np.testing.assert_array_equal(a.alpha, b.alpha)


def test_eigenvalues_converge_with_steps():
    pot = potential("trig")
    lo = find_eigenvalues(pot, W0, BC0, 4, steps_per_unit=50)
    hi = find_eigenvalues(pot, W0, BC0, 4, steps_per_unit=200)
    np.testing.assert_allclose(lo, hi, atol=1e-8)


def test_window_scale():
    assert window_scale(32, W0.mu_pi) == np.ceil(33 * np.pi / W0.mu_pi)


def test_product_formula_reference_data():
    # Unperturbed data: the product tends to lambda sin(lambda mu(pi)); the
    # omitted factors contribute about lambda^2 (mu(pi)/pi)^2 / N.
    N = 200
    spec = Spectrum.reference(N, W0.mu_pi)
    lam = np.array([0.31, 0.9, 1.7])
    ratio = product_char_function(spec, lam) / (lam * np.sin(lam * W0.mu_pi))
    bound = 1.2 * lam ** 2 * (W0.mu_pi / np.pi) ** 2 / N
    assert np.all(np.abs(ratio - 1) <= bound)


def test_bump_grid_independent_eigenvalues():
    w = W0
    coarse = builtin_potential("bump", make_grid(w, 200))
    fine = builtin_potential("bump", make_grid(w, 800))
    a = find_eigenvalues(coarse, w, BC0, 3)
    b = find_eigenvalues(fine, w, BC0, 3)
    np.testing.assert_allclose(a, b, atol=1e-3)


def test_product_formula_vanishes_at_eigenvalues():
    spec = spectrum("zero", 16)
    lam = spec.lam[spec.index >= 0]
    np.testing.assert_array_equal(product_char_function(spec, lam), 0.0)


def test_product_formula_deviation_trend():
    # The free data is not symmetric about zero, so the deviation shrinks without vanishing.
    zero = potential("zero")
    d = char_values(zero, W0, BC0, [0.1])[0][0]
    dev = [abs(product_char_function(spectrum("zero", n), 0.1) - d) / abs(d) for n in (16, 32, 64)]
    assert dev[0] > dev[1] > dev[2]


def test_rk4_fourth_order():
    g = make_grid(W0, 20)
    zero = Potential.zero(g)
    lam = np.array([3.7])
    v = mu(g, W0)
    exact = np.stack([np.sin(lam[0] * v), -np.cos(lam[0] * v)], -1)
    errs = []
    for k in (8, 16):
        phi = phi_values(zero, W0, lam, n_sub=np.full(20, k))[:, 0, :]
        errs.append(np.abs(phi - exact).max())
    assert 14 < errs[0] / errs[1] < 18
