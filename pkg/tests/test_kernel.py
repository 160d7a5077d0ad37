"""Kernel constructions against frozen values and an incomplete-gamma oracle."""

import numpy as np
import pytest
from scipy.special import gamma, gammainc

import roughvol as rv

H = 0.07
T = 1.0


def l2_error_incomplete_gamma(k, H, T):
    """Exact ||K^n - c*tau^(H-1/2)||_{L2(0,T)}, an independent oracle.

    Expanding the square: the K^n x K^n term integrates in closed form, the
    cross term uses int_0^T e^(-x*tau) tau^(H-1/2) dtau =
    x^(-(H+1/2)) * gamma_lower(H+1/2, x*T), and the power-power term is
    T^(2H)/(2H).
    """
    c = np.sqrt(2 * H) if k.normalized else 1.0
    w, x = k.weights, k.speeds
    xs = np.add.outer(x, x)
    quad = (np.multiply.outer(w, w) / xs * (1 - np.exp(-xs * T))).sum()
    a = H + 0.5
    cross = (w * x ** (-a) * gammainc(a, x * T)).sum() * gamma(a)
    return float(np.sqrt(quad - 2 * c * cross + c * c * T ** (2 * H) / (2 * H)))


def test_power_kernel_frozen_point():
    assert rv.power_kernel(0.25, H) == pytest.approx(1.8150383106343217, rel=1e-15)


def test_power_kernel_rejects_origin():
    with pytest.raises(ValueError):
        rv.power_kernel(0.0, H)
    with pytest.raises(ValueError):
        rv.power_kernel(np.array([0.5, -1.0]), H)


def test_laplace_measure_reproduces_power_kernel():
    for tau in (0.1, 0.25, 1.0, 2.0):
        assert rv.laplace_mu(tau, H) == pytest.approx(
            rv.power_kernel(tau, H), rel=1e-9
        )
    with pytest.raises(ValueError):
        rv.laplace_mu(0.0, H)
    with pytest.raises(ValueError):
        rv.laplace_mu(1.0, 0.6)


def test_exp_kernel_validation():
    with pytest.raises(ValueError):
        rv.ExpKernel(weights=[1.0, -1.0], speeds=[1.0, 2.0], H=H, T=T)
    with pytest.raises(ValueError):
        rv.ExpKernel(weights=[1.0, 1.0], speeds=[2.0, 1.0], H=H, T=T)
    with pytest.raises(ValueError):
        rv.ExpKernel(weights=[1.0, 1.0], speeds=[1.0, 1.0], H=H, T=T)
    with pytest.raises(ValueError):
        rv.ExpKernel(weights=[1.0], speeds=[1.0, 2.0], H=H, T=T)


def test_exp_kernel_evaluates_the_sum():
    k = rv.ExpKernel(weights=[0.5, 2.0], speeds=[1.0, 3.0], H=H, T=T)
    assert k.n == 2
    tau = np.array([0.0, 0.5, 1.0])
    want = 0.5 * np.exp(-tau) + 2.0 * np.exp(-3.0 * tau)
    np.testing.assert_allclose(k(tau), want, rtol=1e-15)
    assert float(k(0.0)) == pytest.approx(2.5)


@pytest.mark.parametrize("n", [3, 10])
@pytest.mark.parametrize("normalized", [False, True])
def test_l2_error_matches_incomplete_gamma_oracle(n, normalized):
    k, _ = rv.closed_form_kernel(n, H, T)
    if normalized:
        k = rv.normalized_copy(k)
    got = rv.kernel_l2_error(k, H, T)
    want = l2_error_incomplete_gamma(k, H, T)
    assert got == pytest.approx(want, rel=1e-10)


def test_l2_error_rejects_coarse_quadrature():
    k, _ = rv.closed_form_kernel(3, H, T)
    with pytest.raises(ValueError):
        rv.kernel_l2_error(k, H, T, n_quad=50)


def test_certified_bound_holds_and_error_decreases():
    errs = []
    for n in (5, 10, 25, 50):
        kern, cert = rv.closed_form_kernel(n, H, T)
        assert kern.n == n
        assert not kern.normalized
        assert np.all(np.diff(kern.speeds) > 0)
        assert cert.pi_n > 0 and cert.constant > 0
        assert cert.l2_error <= cert.bound
        errs.append(cert.l2_error)
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_error_decay_rate_matches_bound_exponent():
    ns = np.array([5, 10, 25, 50, 100])
    errs = [rv.closed_form_kernel(int(n), H, T)[1].l2_error for n in ns]
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert slope == pytest.approx(-0.8 * H, abs=0.03)


def test_closed_form_validation():
    with pytest.raises(ValueError):
        rv.closed_form_kernel(0, H, T)
    with pytest.raises(ValueError):
        rv.closed_form_kernel(5, 0.5, T)
    with pytest.raises(ValueError):
        rv.closed_form_kernel(5, H, 0.0)


def test_fit_is_deterministic_and_tight():
    a = rv.fit_kernel_ls(H, T, 100, 10)
    b = rv.fit_kernel_ls(H, T, 100, 10)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.speeds, b.speeds)
    assert a.normalized
    tau = np.arange(1, 100) / 100.0
    resid = a(tau) - np.sqrt(2 * H) * tau ** (H - 0.5)
    rmse = np.sqrt(np.mean(resid**2))
    assert rmse < 2e-6  # measured 1.12e-6 from the deterministic recipe


def test_fit_error_decreases_with_terms():
    tau = np.arange(1, 100) / 100.0
    target = np.sqrt(2 * H) * tau ** (H - 0.5)
    rmses = []
    for n in (5, 10, 15):
        k = rv.fit_kernel_ls(H, T, 100, n)
        rmses.append(np.sqrt(np.mean((k(tau) - target) ** 2)))
    assert rmses[0] > rmses[1] > rmses[2]


def test_fit_improves_on_its_initialization():
    init, _ = rv.closed_form_kernel(8, H, T)
    fitted = rv.fit_kernel_ls(H, T, 100, 8)
    assert rv.kernel_l2_error(fitted, H, T) < rv.kernel_l2_error(
        rv.normalized_copy(init), H, T
    )


def test_fit_stays_tame():
    # degenerate optima show up as huge weights on near-cap speeds; the
    # deterministic closed-form start plus identity damping avoids them
    k = rv.fit_kernel_ls(H, T, 100, 20)
    assert k.weights.max() < 5.0
    cap = np.log(1e12) / (T / 100)
    assert k.speeds.max() <= cap * (1 + 1e-12)


def test_fit_validation():
    with pytest.raises(ValueError):
        rv.fit_kernel_ls(H, T, 2, 5)
    wrong_size, _ = rv.closed_form_kernel(3, H, T)
    with pytest.raises(ValueError):
        rv.fit_kernel_ls(H, T, 100, 5, init=wrong_size)


def test_fit_accepts_warm_start():
    warm = rv.fit_kernel_ls(H, T, 50, 3)
    k = rv.fit_kernel_ls(H, T, 100, 3, init=warm)
    assert k.n == 3
    assert k.normalized


def test_normalized_copy():
    k, _ = rv.closed_form_kernel(4, H, T)
    nk = rv.normalized_copy(k)
    assert nk.normalized
    np.testing.assert_allclose(nk.weights, k.weights * np.sqrt(2 * H), rtol=1e-15)
    np.testing.assert_allclose(nk.speeds, k.speeds, rtol=0)
    assert rv.normalized_copy(nk) is nk
