"""Pricing, implied vol, smiles, skew fits, and the vol expansions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import roughvol as rv


# ---------------------------------------------------------------- pricing


def test_bs_price_frozen_atm():
    # S0=K=1, T=1, vol=0.2: 2*Phi(0.1) - 1 at high precision
    assert rv.bs_price(1.0, 1.0, 1.0, 0.2) == pytest.approx(
        0.07965567455405798, abs=1e-16
    )


def test_bs_price_shape():
    # increasing in vol, decreasing in strike, above intrinsic
    p1 = rv.bs_price(1.0, 1.1, 1.0, 0.2)
    p2 = rv.bs_price(1.0, 1.1, 1.0, 0.4)
    assert 0 < p1 < p2 < 1.0
    assert rv.bs_price(1.0, 0.8, 1.0, 0.2) > 0.2
    with pytest.raises(ValueError):
        rv.bs_price(1.0, 1.0, 0.0, 0.2)
    with pytest.raises(ValueError):
        rv.bs_price(1.0, 1.0, 1.0, -0.1)


def test_bs_vega_matches_finite_difference():
    h = 1e-6
    fd = (rv.bs_price(1.0, 1.1, 0.7, 0.3 + h) - rv.bs_price(1.0, 1.1, 0.7, 0.3 - h)) / (
        2 * h
    )
    assert rv.bs_vega(1.0, 1.1, 0.7, 0.3) == pytest.approx(fd, rel=1e-8)


def test_implied_vol_round_trip_spot_checks():
    for vol in (0.05, 0.2, 0.8):
        for K in (0.8, 1.0, 1.3):
            price = rv.bs_price(1.0, K, 1.0, vol)
            assert rv.implied_vol(price, 1.0, K, 1.0) == pytest.approx(vol, abs=1e-8)


def test_implied_vol_names_the_violated_bound():
    with pytest.raises(ValueError, match="lower no-arbitrage bound"):
        rv.implied_vol(0.1, 1.0, 0.8, 1.0)  # below intrinsic 0.2
    with pytest.raises(ValueError, match="upper no-arbitrage bound"):
        rv.implied_vol(1.5, 1.0, 0.8, 1.0)
    with pytest.raises(ValueError, match="not finite"):
        rv.implied_vol(float("nan"), 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        rv.implied_vol(0.1, 0.0, 1.0, 1.0)


def test_implied_vol_deep_otm_tiny_price():
    # far OTM, short maturity: the solver still converges without overflow
    price = rv.bs_price(1.0, np.exp(0.4), 0.25, 0.3)
    assert rv.implied_vol(price, 1.0, np.exp(0.4), 0.25) == pytest.approx(
        0.3, abs=1e-8
    )
    # genuinely tiny price (~6e-9) right at the edge of vega resolvability
    tiny = rv.bs_price(1.0, 1.6, 0.05, 0.4)
    assert tiny < 1e-7
    assert rv.bs_vega(1.0, 1.6, 0.05, 0.4) >= rv.IV_MIN_VEGA
    assert rv.implied_vol(tiny, 1.0, 1.6, 0.05) == pytest.approx(0.4, abs=1e-8)


@given(
    vol=st.floats(0.1, 1.0),
    k=st.floats(-0.3, 0.3),
    T=st.floats(0.3, 3.0),
)
@settings(max_examples=200, deadline=None)
def test_implied_vol_round_trip_property(vol, k, T):
    K = float(np.exp(k))
    price = rv.bs_price(1.0, K, T, vol)
    assert abs(rv.implied_vol(price, 1.0, K, T) - vol) < 1e-8


def test_iv_reference_grid_spans_the_stated_ranges():
    assert rv.IV_GRID_MONEYNESS[0] == 0.6 and rv.IV_GRID_MONEYNESS[-1] == 1.6
    assert min(rv.IV_GRID_MATURITIES) == 0.05 and max(rv.IV_GRID_MATURITIES) == 3.0
    assert min(rv.IV_GRID_VOLS) == 0.05 and max(rv.IV_GRID_VOLS) == 1.0


# ----------------------------------------------------------------- smiles


def _bs_terminal_log_price(vol, T, n_paths, seed):
    g = rv.make_time_grid(T, 16)
    inc = rv.sample_correlated_increments(g, 0.0, n_paths, seed)
    return vol * inc.dW.sum(axis=1) - 0.5 * vol**2 * T


def test_constant_variance_smile_is_flat():
    vol, T = 0.2, 1.0
    logS = _bs_terminal_log_price(vol, T, 50_000, 31)
    sm = rv.mc_smile(logS, T=T, model="bs", seed=31)
    assert sm.model == "bs"
    assert sm.n_paths == 50_000
    assert not sm.skipped
    for i, k in enumerate(sm.strikes):
        # within 3 MC standard errors at every strike, propagated through vega
        se_vol = sm.price_stderr[i] / rv.bs_vega(1.0, np.exp(k), T, vol)
        assert abs(sm.vols[i] - vol) < 3 * se_vol, f"k={k}"


def test_mc_smile_prices_and_stderr():
    logS = _bs_terminal_log_price(0.2, 1.0, 20_000, 5)
    strikes = np.array([-0.1, 0.0, 0.1])
    sm = rv.mc_smile(logS, strikes, T=1.0)
    payoff_atm = np.maximum(np.exp(logS) - 1.0, 0.0)
    assert sm.prices[1] == pytest.approx(payoff_atm.mean())
    assert sm.price_stderr[1] == pytest.approx(
        payoff_atm.std(ddof=1) / np.sqrt(20_000)
    )
    assert np.all(np.diff(sm.prices) < 0)  # call prices decrease in strike


def test_mc_smile_records_skipped_strikes():
    # all paths end at the same huge value: price > S0 at every strike
    logS = np.full(100, 4.0)
    sm = rv.mc_smile(logS, np.array([0.0]), T=1.0)
    assert np.isnan(sm.vols[0])
    assert len(sm.skipped) == 1
    strike, reason = sm.skipped[0]
    assert strike == 0.0
    assert "bound" in reason


def test_scale_smile_moves_the_level_consistently():
    logS = _bs_terminal_log_price(0.2, 1.0, 20_000, 5)
    sm = rv.mc_smile(logS, np.array([-0.1, 0.0, 0.1]), T=1.0, model="bs", seed=5)
    same = rv.scale_smile(sm, 1.0)
    np.testing.assert_array_equal(same.vols, sm.vols)
    np.testing.assert_allclose(same.prices, sm.prices, rtol=1e-12)
    half = rv.scale_smile(sm, 0.5)
    np.testing.assert_allclose(half.vols, 0.5 * sm.vols, rtol=1e-15)
    for i, k in enumerate(half.strikes):
        assert half.prices[i] == pytest.approx(
            rv.bs_price(1.0, np.exp(k), 1.0, half.vols[i]), rel=1e-12
        )
        assert half.price_stderr[i] > 0
    assert half.model == "bs" and half.seed == 5
    with pytest.raises(ValueError):
        rv.scale_smile(sm, 0.0)


def test_scale_smile_keeps_skipped_strikes_skipped():
    sm = rv.mc_smile(np.full(100, 4.0), np.array([0.0]), T=1.0)
    scaled = rv.scale_smile(sm, 0.7)
    assert np.isnan(scaled.vols[0])
    assert scaled.skipped == sm.skipped
    assert scaled.prices[0] == sm.prices[0]


def test_smile_rmse_is_a_metric():
    logS = _bs_terminal_log_price(0.2, 1.0, 5_000, 8)
    a = rv.mc_smile(logS, T=1.0)
    b = rv.mc_smile(_bs_terminal_log_price(0.3, 1.0, 5_000, 8), T=1.0)
    c = rv.mc_smile(_bs_terminal_log_price(0.25, 1.0, 5_000, 9), T=1.0)
    assert rv.smile_rmse(a, a) == 0.0
    assert rv.smile_rmse(a, b) == pytest.approx(rv.smile_rmse(b, a))
    assert rv.smile_rmse(a, b) > 0
    assert rv.smile_rmse(a, b) <= rv.smile_rmse(a, c) + rv.smile_rmse(c, b) + 1e-12


def test_smile_rmse_requires_matching_setups():
    logS = _bs_terminal_log_price(0.2, 1.0, 1_000, 8)
    a = rv.mc_smile(logS, np.array([-0.1, 0.0, 0.1]), T=1.0)
    b = rv.mc_smile(logS, np.array([0.0, 0.1]), T=1.0)
    with pytest.raises(ValueError):
        rv.smile_rmse(a, b)
    c = rv.mc_smile(logS, np.array([-0.1, 0.0, 0.1]), T=2.0)
    with pytest.raises(ValueError):
        rv.smile_rmse(a, c)


# ------------------------------------------------------------------- skew


def _synthetic_smile(c, beta):
    """smile_fn with vols a + |S(T)|*k, S(T) = -c*T^beta: a pure power law."""

    def fn(T, strikes):
        strikes = np.asarray(strikes, dtype=float)
        vols = 0.2 - c * T**beta * strikes
        return rv.SmileResult(
            maturity=T,
            strikes=strikes,
            vols=vols,
            prices=np.zeros_like(strikes),
            price_stderr=np.zeros_like(strikes),
            n_paths=0,
        )

    return fn


def test_atm_skew_recovers_a_power_law():
    rep = rv.atm_skew(_synthetic_smile(0.3, -0.43), [0.1, 0.25, 0.5, 1.0, 2.0])
    assert rep.exponent == pytest.approx(-0.43, abs=1e-10)
    assert rep.intercept == pytest.approx(np.log(0.3), abs=1e-10)
    assert rep.residual < 1e-12
    assert not rep.flagged.any()
    np.testing.assert_allclose(rep.richardson, rep.psi, rtol=1e-9)
    np.testing.assert_allclose(rep.psi, 0.3 * np.array([0.1, 0.25, 0.5, 1.0, 2.0]) ** -0.43)


def test_atm_skew_flags_flat_smiles():
    rep = rv.atm_skew(_synthetic_smile(0.0, -0.43), [0.5, 1.0, 2.0])
    assert rep.flagged.all()
    assert np.isnan(rep.exponent)
    with pytest.raises(ValueError):
        rv.atm_skew(_synthetic_smile(0.3, -0.43), [0.5, 1.0], bump=0.0)


# ------------------------------------------------- helpers and two-factor


def test_helper_functions_frozen_at_one():
    I, J, K, Hh = rv.helper_functions(1.0)
    assert I == pytest.approx(0.6321205588285577, rel=1e-15)
    assert J == pytest.approx(0.36787944117144233, rel=1e-15)
    assert K == pytest.approx(0.26424111765711533, rel=1e-15)
    assert Hh == pytest.approx(0.103638323514327, rel=1e-13)


def test_helper_functions_limits_and_continuity():
    I, J, K, Hh = rv.helper_functions(1e-9)
    assert abs(I - 1.0) < 1e-8
    assert abs(J - 0.5) < 1e-8
    assert abs(K - 0.5) < 1e-8
    assert abs(Hh - 1.0 / 6.0) < 1e-8
    # the series branch hands over smoothly to the direct branch at 0.05
    lo = np.array(rv.helper_functions(np.nextafter(0.05, 0)))
    hi = np.array(rv.helper_functions(0.05))
    np.testing.assert_allclose(lo, hi, rtol=1e-10)
    with pytest.raises(ValueError):
        rv.helper_functions(-0.1)


def test_two_factor_params_validation():
    ok = dict(
        omega=2.0, theta=0.3, kappa_X=8.0, kappa_Y=0.5,
        rho_SX=-0.7, rho_SY=-0.6, rho_XY=0.2,
    )
    rv.TwoFactorParams(**ok)
    for bad in (
        {"omega": 0.0},
        {"theta": 1.5},
        {"kappa_X": 0.4},       # violates kappa_X > kappa_Y
        {"rho_SX": -1.2},
        # rho combination forcing |chi| > 1: X, Y nearly parallel to spot
        # but anti-correlated with each other
        {"rho_SX": 0.95, "rho_SY": 0.95, "rho_XY": -0.5},
    ):
        kw = {**ok, **bad}
        with pytest.raises(ValueError):
            rv.TwoFactorParams(**kw)


FROZEN_2F = rv.TwoFactorParams(
    omega=2.0, theta=0.3, kappa_X=8.0, kappa_Y=0.5,
    rho_SX=-0.7, rho_SY=-0.6, rho_XY=0.2,
)


def test_two_factor_coeffs_frozen():
    c = rv.two_factor_coeffs(FROZEN_2F, 1.0, 0.026)
    assert c.c_xxi == pytest.approx(-0.001340741457942222, rel=1e-13)
    assert c.c_xixi == pytest.approx(0.00012831437060488844, rel=1e-13)
    assert c.c_mu == pytest.approx(6.956733168031241e-05, rel=1e-13)


def quad_two_factor_coeffs(p, T, xi0, eps=1e-11):
    """Nested quadrature of the definitional autocorrelation integrals.

    The forward-variance loading on the three driving Brownians is
    f_b(u-t) = omega_iX[b]*e^(-kappa_X(u-t)) + omega_iY[b]*e^(-kappa_Y(u-t));
    only b=0 (the spot Brownian) enters the spot-vol covariances.
    """
    f = lambda b, s: p.omega_iX[b] * np.exp(-p.kappa_X * s) + p.omega_iY[
        b
    ] * np.exp(-p.kappa_Y * s)
    pre = p.omega * p.alpha_theta
    c_xxi = pre * xi0**1.5 * integrate.dblquad(
        lambda u, s: f(0, u - s), 0, T, lambda s: s, T, epsabs=eps, epsrel=eps
    )[0]

    def inner_sq(s):
        return sum(
            integrate.quad(lambda u: f(b, u - s), s, T, epsabs=eps, epsrel=eps)[0] ** 2
            for b in range(3)
        )

    c_xixi = pre**2 * xi0**2 * integrate.quad(
        inner_sq, 0, T, epsabs=eps, epsrel=eps
    )[0]

    def mu_inner(u, s):
        tail = integrate.quad(lambda r: f(0, r - u), u, T, epsabs=eps, epsrel=eps)[0]
        head = integrate.quad(lambda r: f(0, u - r), s, u, epsabs=eps, epsrel=eps)[0]
        return f(0, u - s) * (0.5 * tail + head)

    c_mu = pre**2 * xi0**2 * integrate.dblquad(
        mu_inner, 0, T, lambda s: s, T, epsabs=eps, epsrel=eps
    )[0]
    return c_xxi, c_xixi, c_mu


def test_two_factor_coeffs_match_definitional_quadrature():
    got = rv.two_factor_coeffs(FROZEN_2F, 1.0, 0.026)
    want = quad_two_factor_coeffs(FROZEN_2F, 1.0, 0.026)
    for g, w in zip((got.c_xxi, got.c_xixi, got.c_mu), want):
        assert g == pytest.approx(w, rel=1e-10)


def test_two_factor_nearly_equal_speeds_stay_finite():
    # the C1_mu cross term divides by z_X - z_Y; the interpolated branch
    # must agree with a slightly-separated evaluation
    base = dict(omega=1.5, theta=0.4, rho_SX=-0.6, rho_SY=-0.5, rho_XY=0.3)
    close = rv.TwoFactorParams(kappa_X=2.0 * (1 + 1e-9), kappa_Y=2.0, **base)
    apart = rv.TwoFactorParams(kappa_X=2.0 * (1 + 1e-4), kappa_Y=2.0, **base)
    a = rv.two_factor_coeffs(close, 1.0, 0.026)
    b = rv.two_factor_coeffs(apart, 1.0, 0.026)
    for x, y in zip((a.c_xxi, a.c_xixi, a.c_mu), (b.c_xxi, b.c_xixi, b.c_mu)):
        assert np.isfinite(x)
        assert x == pytest.approx(y, rel=1e-3)


def test_two_factor_skew_shape():
    assert rv.two_factor_skew_shape(FROZEN_2F, 0.5) == pytest.approx(
        -0.21522930523886286, rel=1e-13
    )
    # T -> 0 limit: J(z) -> 1/2 termwise
    p = FROZEN_2F
    lim = (p.omega * p.alpha_theta / 4.0) * (p.omega_iX[0] + p.omega_iY[0])
    assert rv.two_factor_skew_shape(p, 1e-10) == pytest.approx(lim, rel=1e-6)


# ------------------------------------------------------------- expansions


def test_rbergomi_coeffs_frozen_and_quadrature_consistent(table1):
    c = rv.rbergomi_expansion_coeffs(table1, 0.5)
    assert c.c_xxi == pytest.approx(-0.0010095516728034417, rel=1e-12)
    assert c.c_xixi == pytest.approx(0.0001114844403665018, rel=1e-12)
    assert c.c_mu == pytest.approx(7.869045435866219e-05, rel=1e-12)
    # the quadrature must reproduce the closed-form C^Xxi
    assert c.c_xxi == pytest.approx(c.c_xxi_closed, rel=1e-6)
    # and refine stably
    c2 = rv.rbergomi_expansion_coeffs(table1, 0.5, n_quad=400)
    assert c2.c_mu == pytest.approx(c.c_mu, rel=1e-8)


def test_expansion_terms_trivial_and_shape():
    flat = rv.ExpansionCoeffs(c_xxi=0.0, c_xixi=0.0, c_mu=0.0)
    v, T = 0.026, 1.3
    atm, S, C = rv.expansion_terms(flat, v, T)
    assert atm == pytest.approx(np.sqrt(v / T), rel=1e-15)
    assert S == 0.0 and C == 0.0
    with pytest.raises(ValueError):
        rv.expansion_terms(flat, 0.0, T)
    # polynomial evaluation: sigma(k) - sigma(0) == S*k + C*k^2 exactly
    c = rv.ExpansionCoeffs(c_xxi=-1e-3, c_xixi=2e-4, c_mu=1e-4)
    atm, S, C = rv.expansion_terms(c, v, T)
    k = np.array([-0.2, -0.05, 0.0, 0.1])
    vols = rv.sigma_bs_expansion(c, v, T, k)
    np.testing.assert_allclose(vols, atm + S * k + C * k * k, rtol=1e-14)
    assert rv.sigma_bs_expansion(c, v, T, 0.0) == pytest.approx(atm)


def test_first_order_limit_matches_linear_display(table1):
    # with only C^Xxi and a small vol-of-vol scale, the smile collapses to
    # sigma_VS * (1 + eps*C^Xxi*(1/(4v) + k/(2v^2)))
    T = 1.0
    v = table1.xi0 * T
    c_xxi = rv.rbergomi_expansion_coeffs(table1, T).c_xxi_closed
    c = rv.ExpansionCoeffs(c_xxi=c_xxi, c_xixi=0.0, c_mu=0.0)
    sig_vs = np.sqrt(v / T)
    eps = 1e-6
    for k in (-0.1, 0.0, 0.2):
        got = (rv.sigma_bs_expansion(c, v, T, k, epsilon=eps) - sig_vs) / eps
        want = sig_vs * c_xxi * (1 / (4 * v) + k / (2 * v**2))
        assert got == pytest.approx(want, rel=1e-4), f"k={k}"


def test_atm_skew_of_expansion_reproduces_the_analytic_slope(table1):
    # isolates the finite-difference machinery from MC noise
    mats = [0.25, 0.5, 1.0, 2.0]

    def smile_fn(T, strikes):
        c = rv.rbergomi_expansion_coeffs(table1, T)
        strikes = np.asarray(strikes, dtype=float)
        vols = rv.sigma_bs_expansion(c, table1.xi0 * T, T, strikes)
        return rv.SmileResult(
            maturity=T,
            strikes=strikes,
            vols=np.asarray(vols),
            prices=np.zeros_like(strikes),
            price_stderr=np.zeros_like(strikes),
            n_paths=0,
        )

    rep = rv.atm_skew(smile_fn, mats, bump=0.01)
    for i, T in enumerate(mats):
        c = rv.rbergomi_expansion_coeffs(table1, T)
        _, S_T, _ = rv.expansion_terms(c, table1.xi0 * T, T)
        assert rep.psi[i] == pytest.approx(abs(S_T), rel=1e-6), f"T={T}"
