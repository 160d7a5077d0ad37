"""Volterra-process simulation via the hybrid scheme with FFT convolution.

Simulates X_t = sqrt(2*alpha+1) * int_0^t (t-s)^alpha dB_s on a uniform
grid.  The kernel singularity at s = t is handled cell-exactly: the cell
nearest the singularity is sampled from the exact joint Gaussian law of
(int_cell (t-s)^alpha dB_s, dB) — this is what makes the per-node variance
land on t^{2H} — while the remaining cells use the optimally displaced
left-rule nodes b_k^* and a single lower-triangular Toeplitz convolution,
evaluated in O(N log N) by zero-padded FFT.

A ``midpoint`` first-cell variant (coefficient (dt/2)^alpha on dB alone) is
kept for comparison; it underweights the singular cell badly for alpha near
-1/2 (at alpha = -0.43, N = 100 it loses ~39% of the total variance), so it
is not the default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim_core import PathIncrements, TimeGrid, _readonly

__all__ = [
    "HybridPlan",
    "VolterraPaths",
    "optimal_nodes",
    "make_hybrid_plan",
    "toeplitz_convolve",
    "simulate_volterra",
]


@dataclass(frozen=True, eq=False)
class HybridPlan:
    """Precomputed discretization of the Volterra kernel on one grid.

    Attributes
    ----------
    grid : TimeGrid
    alpha : float
        Kernel exponent in (-1/2, 0).
    b_star : ndarray
        Optimal evaluation points b_k^*, k = 2..N; b_k^* lies in [k-1, k].
    kernel_weights : ndarray
        g(b_k^* * dt) = (b_k^* * dt)^alpha, strictly decreasing in k.
    first_cell : str
        'exact' (default) or 'midpoint' treatment of the singular cell.
    """

    grid: TimeGrid
    alpha: float
    b_star: np.ndarray
    kernel_weights: np.ndarray
    first_cell: str = "exact"


@dataclass(frozen=True, eq=False)
class VolterraPaths:
    """Simulated X paths, values[p, j] = X_{t_j}, values[:, 0] = 0."""

    values: np.ndarray
    grid: TimeGrid
    alpha: float


def optimal_nodes(alpha: float, N: int) -> np.ndarray:
    """Optimal displaced evaluation points b_k^* for k = 2..N.

    b_k^* = ((k^(a+1) - (k-1)^(a+1)) / (a+1))^(1/a) minimizes the L2 kernel
    error of a left-rule cell evaluation; it always lies in [k-1, k].

    Parameters
    ----------
    alpha : float
        Exponent in (-1/2, 0).
    N : int
        Number of grid steps (>= 2).

    Returns
    -------
    ndarray of shape (N-1,), entries b_2^*, ..., b_N^*.
    """
    if not (-0.5 < alpha < 0.0):
        raise ValueError(f"alpha must lie in (-1/2, 0), got {alpha}")
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    k = np.arange(2, N + 1, dtype=float)
    return ((k ** (alpha + 1) - (k - 1) ** (alpha + 1)) / (alpha + 1)) ** (1.0 / alpha)


def make_hybrid_plan(grid: TimeGrid, alpha: float, first_cell: str = "exact") -> HybridPlan:
    """Assemble the HybridPlan (nodes and kernel weights) for a grid."""
    if first_cell not in ("exact", "midpoint"):
        raise ValueError(f"first_cell must be 'exact' or 'midpoint', got {first_cell!r}")
    b = optimal_nodes(alpha, grid.N)
    w = (b * grid.dt) ** alpha
    return HybridPlan(
        grid=grid,
        alpha=alpha,
        b_star=_readonly(b),
        kernel_weights=_readonly(w),
        first_cell=first_cell,
    )


def toeplitz_convolve(kernel: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """Lower-triangular Toeplitz multiply: out[p, j] = sum_k kernel[k] * signal[p, j-k].

    Computed as a linear convolution via FFT with zero padding to the next
    power of two >= len(kernel) + n_cols - 1, truncated back to the signal
    width.  O(N log N) per path instead of the O(N^2) triangular loop.

    Parameters
    ----------
    kernel : 1-d array, length <= signal.shape[1]
    signal : 2-d array [n_paths x N]
    """
    kernel = np.asarray(kernel, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if kernel.ndim != 1 or kernel.size == 0:
        raise ValueError("kernel must be a non-empty 1-d array")
    if signal.ndim != 2:
        raise ValueError("signal must be a 2-d [n_paths x N] array")
    n = signal.shape[1]
    if kernel.size > n:
        raise ValueError(
            f"kernel length {kernel.size} exceeds signal columns {n}"
        )
    L = 1 << int(np.ceil(np.log2(kernel.size + n - 1)))
    out = np.fft.irfft(
        np.fft.rfft(kernel, L) * np.fft.rfft(signal, L, axis=1), L, axis=1
    )
    return out[:, :n]


def simulate_volterra(plan: HybridPlan, inc: PathIncrements) -> VolterraPaths:
    """Simulate the normalized Volterra process on plan.grid.

    X_{t_j} = sqrt(2*alpha+1) * [ first-cell term + sum_{k=2..j}
    (b_k^* dt)^alpha * dB_{j-k+1} ].  With first_cell='exact' the singular
    cell integral int_{t_{j-1}}^{t_j} (t_j - s)^alpha dB_s is drawn from its
    exact joint law with dB_j, using the orthogonal stream inc.dU:

        a1 * dB_j + b1 * dU_j,
        a1 = dt^alpha / (alpha+1),
        b1 = dt^alpha * sqrt(1/(2*alpha+1) - 1/(alpha+1)^2),

    which reproduces both the exact cell variance dt^{2*alpha+1}/(2*alpha+1)
    and the exact covariance with dB_j.  With first_cell='midpoint' the cell
    is approximated by (dt/2)^alpha * dB_j and inc.dU is not consumed.

    The sqrt(2*alpha+1) normalization is applied here, so Var(X_{t_j}) ~
    t_j^{2H}.
    """
    if inc.grid != plan.grid:
        raise ValueError("increments and plan were built on different grids")
    alpha = plan.alpha
    dt = plan.grid.dt
    N = plan.grid.N
    c = np.zeros(N)
    c[1:] = plan.kernel_weights
    if plan.first_cell == "midpoint":
        c[0] = (dt / 2.0) ** alpha
        body = toeplitz_convolve(c, inc.dB)
    else:
        a1 = dt**alpha / (alpha + 1.0)
        b1 = dt**alpha * np.sqrt(1.0 / (2 * alpha + 1) - 1.0 / (alpha + 1) ** 2)
        body = toeplitz_convolve(c, inc.dB)
        body += a1 * inc.dB + b1 * inc.dU
    values = np.zeros((inc.n_paths, N + 1))
    values[:, 1:] = np.sqrt(2 * alpha + 1) * body
    return VolterraPaths(values=_readonly(values), grid=plan.grid, alpha=alpha)
