"""Time grids and reproducible correlated Brownian increments.

Everything downstream (the Volterra simulator, both variance models, the
smile pipeline) consumes increments produced here, so this module owns the
reproducibility story: a counter-based generator (Philox) is sub-seeded per
fixed-size path block, which makes the output independent of scheduling and
lets two runs with different ``n_paths`` agree on their common prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimeGrid",
    "PathIncrements",
    "ModelParams",
    "make_time_grid",
    "sample_correlated_increments",
    "BLOCK_SIZE",
]

# Paths per RNG block.  Fixed (not tunable) so that every run of the same
# seed draws the same Gaussians for path p, regardless of how many paths the
# caller asked for or how the work is scheduled.
BLOCK_SIZE = 4096


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform grid t_j = j*dt, j = 0..N, with t_N = T."""

    T: float
    N: int
    dt: float
    nodes: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, TimeGrid)
            and self.T == other.T
            and self.N == other.N
        )

    def __hash__(self):
        return hash((self.T, self.N))


def make_time_grid(T: float, N: int) -> TimeGrid:
    """Build the uniform grid on [0, T] with N steps (N >= 2)."""
    if not (T > 0):
        raise ValueError(f"horizon T must be positive, got {T}")
    if int(N) != N or N < 2:
        raise ValueError(f"step count N must be an integer >= 2, got {N}")
    N = int(N)
    nodes = np.linspace(0.0, T, N + 1)
    return TimeGrid(T=float(T), N=N, dt=T / N, nodes=_readonly(nodes))


@dataclass(frozen=True, eq=False)
class PathIncrements:
    """A batch of correlated Gaussian increments on a shared grid.

    dW drives the price, dB the variance, with corr(dW_j, dB_j) = rho.
    dU is an auxiliary stream orthogonal to both, consumed only by the
    exact-first-cell Volterra simulator; models that do not need it simply
    ignore it, so common-random-number comparisons across models still share
    dW and dB.
    """

    n_paths: int
    dW: np.ndarray
    dB: np.ndarray
    dU: np.ndarray
    rho: float
    seed: int
    grid: TimeGrid


@dataclass(frozen=True, eq=False)
class ModelParams:
    """rBergomi parameters with the derived exponent and vol scale.

    alpha = H - 1/2 and sigma = eta*sqrt(2*alpha + 1) are computed, not
    passed.  H must lie in (0, 1/2) (rough regime), xi0 and eta must be
    positive, |rho| <= 1.
    """

    xi0: float
    eta: float
    H: float
    rho: float
    alpha: float = None  # derived
    sigma: float = None  # derived

    def __post_init__(self):
        if not (self.xi0 > 0):
            raise ValueError(f"xi0 must be positive, got {self.xi0}")
        if not (self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (0.0 < self.H < 0.5):
            raise ValueError(f"H must lie in (0, 1/2), got {self.H}")
        if abs(self.rho) > 1:
            raise ValueError(f"|rho| must be <= 1, got {self.rho}")
        object.__setattr__(self, "alpha", self.H - 0.5)
        object.__setattr__(self, "sigma", self.eta * np.sqrt(2 * self.H))


def _block_normals(seed: int, block: int, N: int) -> np.ndarray:
    """Draw the full (3, BLOCK_SIZE, N) Gaussian tile for one block.

    Always draws the complete tile even when fewer paths are needed, so a
    partial block is a row-slice of the full one (prefix property).
    Sampling method: numpy's ziggurat via Generator.standard_normal, an
    exact-distribution sampler, on the counter-based Philox bit stream.
    """
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, block))))
    return gen.standard_normal((3, BLOCK_SIZE, N))


def sample_correlated_increments(
    grid: TimeGrid, rho: float, n_paths: int, seed: int
) -> PathIncrements:
    """Sample dW, dB = rho*dW + sqrt(1-rho^2)*dZ, and the auxiliary dU.

    All three have per-column variance dt.  Identical (seed, grid, rho,
    n_paths) gives bit-identical output on any machine/thread count; the
    first m paths agree between runs with different n_paths.
    """
    if abs(rho) > 1:
        raise ValueError(f"|rho| must be <= 1, got {rho}")
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"n_paths must be a positive integer, got {n_paths}")
    n_paths = int(n_paths)
    seed = int(seed)

    N = grid.N
    sq_dt = np.sqrt(grid.dt)
    dW = np.empty((n_paths, N))
    dB = np.empty((n_paths, N))
    dU = np.empty((n_paths, N))
    root = np.sqrt(1.0 - rho * rho)
    for block in range((n_paths + BLOCK_SIZE - 1) // BLOCK_SIZE):
        lo = block * BLOCK_SIZE
        hi = min(lo + BLOCK_SIZE, n_paths)
        z = _block_normals(seed, block, N)[:, : hi - lo, :]
        dW[lo:hi] = z[0] * sq_dt
        dB[lo:hi] = rho * (z[0] * sq_dt) + root * (z[1] * sq_dt)
        dU[lo:hi] = z[2] * sq_dt
    return PathIncrements(
        n_paths=n_paths,
        dW=_readonly(dW),
        dB=_readonly(dB),
        dU=_readonly(dU),
        rho=float(rho),
        seed=seed,
        grid=grid,
    )
