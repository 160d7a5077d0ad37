"""Why the Markovian approximation needs a smile-level factor.

Simulates the rough model and its OU-factor approximation on the same
Brownian increments and prints three versions of the 1y smile: the rough
reference, the raw approximation (no correction), and the approximation
with the tabulated level factor applied inside the exponent.  The raw
driver's variance grows like (sum of weights)^2 instead of t^(2H), so the
uncorrected smile sits far above the reference and the tabulated factor
claws back only part of the gap.  The demo ends by grid-searching both
placements of the correction — inside the exponent, and post hoc on the
finished vol curve (scale_smile) — to show where this particular kernel
fit's optimum actually sits relative to the tabulated value.

Run:  python3 demos/smile_level_correction.py   (~30 s)
"""

import numpy as np

import roughvol as rv

PARAMS = rv.ModelParams(xi0=0.026, eta=1.9, H=0.07, rho=-0.9)
T, N, N_PATHS, SEED = 1.0, 100, 20_000, 7


def rough_smile(inc, grid):
    plan = rv.make_hybrid_plan(grid, PARAMS.alpha)
    V = rv.rbergomi_variance(rv.simulate_volterra(plan, inc), PARAMS)
    logS = rv.rbergomi_log_price(V, inc)[:, -1]
    return rv.mc_smile(logS, T=T, model="rbergomi", seed=SEED)


def approx_smile(inc, grid, kern, m):
    cfg = rv.AbergomiConfig(kernel=kern, params=PARAMS, mult_factor=m)
    drv = rv.abergomi_driver(cfg, rv.simulate_ou_factors(cfg, inc))
    logS = rv.rbergomi_log_price(rv.abergomi_variance(cfg, drv), inc)[:, -1]
    return rv.mc_smile(logS, T=T, model="abergomi", seed=SEED)


def main():
    grid = rv.make_time_grid(T, N)
    inc = rv.sample_correlated_increments(grid, PARAMS.rho, N_PATHS, SEED)
    kern15 = rv.fit_kernel_ls(PARAMS.H, T, N, 15)
    kern25 = rv.fit_kernel_ls(PARAMS.H, T, N, 25)
    m_tab = float(np.sqrt(rv.SMILE_FACTOR_M2[N]))

    ref = rough_smile(inc, grid)
    raw25 = approx_smile(inc, grid, kern25, 1.0)
    cor15 = approx_smile(inc, grid, kern15, m_tab)
    cor25 = approx_smile(inc, grid, kern25, m_tab)

    print(
        f"1y implied vols, {N_PATHS} common paths, {N} steps "
        f"(tabulated factor m = {m_tab:.4f}):"
    )
    print(f"{'k':>6}  {'rough':>8}  {'raw 25':>8}  {'corr 15':>8}  {'corr 25':>8}")
    for i in range(0, ref.strikes.size, 5):
        print(
            f"{ref.strikes[i]:>6.2f}  {ref.vols[i]:>8.4f}  {raw25.vols[i]:>8.4f}"
            f"  {cor15.vols[i]:>8.4f}  {cor25.vols[i]:>8.4f}"
        )

    print("\nRMSE vs the rough reference:")
    print(f"  raw 25-term        {rv.smile_rmse(ref, raw25):>8.4f}")
    print(f"  corrected 15-term  {rv.smile_rmse(ref, cor15):>8.4f}")
    print(f"  corrected 25-term  {rv.smile_rmse(ref, cor25):>8.4f}")

    ms_exp = np.linspace(0.15, 0.90, 16)
    rmse_exp = [
        rv.smile_rmse(ref, approx_smile(inc, grid, kern25, m)) for m in ms_exp
    ]
    be = int(np.argmin(rmse_exp))
    print(
        f"\nbest in-exponent factor for this 25-term fit: m = {ms_exp[be]:.2f}"
        f" (RMSE {rmse_exp[be]:.4f}); tabulated m = {m_tab:.4f}"
    )

    ms_ph = np.linspace(0.10, 1.00, 181)
    rmse_ph = [rv.smile_rmse(ref, rv.scale_smile(raw25, m)) for m in ms_ph]
    bp = int(np.argmin(rmse_ph))
    print(
        f"best post-hoc vol scale on the raw 25-term smile: "
        f"m = {ms_ph[bp]:.3f} (RMSE {rmse_ph[bp]:.4f})"
    )
    print(
        "The tabulated factor was calibrated once per step count against a"
        "\nparticular family of kernel fits, so on a different fit it lands"
        "\naway from the optimum — the level error it leaves behind is the"
        "\ndominant part of the corrected RMSE above.  Even at the optimal"
        "\nfactor a residual remains: that part is shape, the OU driver's"
        "\nterm structure differing from the rough kernel's."
    )


if __name__ == "__main__":
    main()
