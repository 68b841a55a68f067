"""Process definitions and differentiable fixed-noise Euler-Maruyama.

All simulation here is driven by noise arrays generated up front from a
seed.  Holding the noise fixed makes the map (parameters, x0) -> path
smooth, which is what the pathwise gradients in :mod:`bridgemark.infer`
rely on.  Only uniform time grids are supported.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SimulationBlowup
from .shapes import KernelSpec, LandmarkShape, build_sigma


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0 = tau_0 < ... < tau_M = t1."""

    t0: float
    t1: float
    steps: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise DomainError(f"need t1 > t0, got [{self.t0}, {self.t1}]")
        if self.steps < 1:
            raise DomainError("need at least one step")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.steps

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True)
class ProcessSpec:
    """Drift/diffusion pair defining dX = f(t, X) dt + sigma(t, X) dW.

    kind records how the diffusion was constructed:
      - 'kunita': sigma(t, X) is the kernel matrix evaluated at the
        current landmark positions (state-dependent, non-linear),
      - 'frozen_brownian': sigma is the kernel matrix of a fixed shape,
        i.e. constant -- a Brownian motion with known transitions,
      - 'generic': arbitrary user-supplied functions.

    For kernel-backed processes the variance factors out of the
    diffusion as sigma = sqrt(v) * sigma_hat, which `unit_diffusion`
    exposes for the variance-profiled likelihood.
    """

    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    kind: str = "generic"
    kernel: Optional[KernelSpec] = None
    frozen_state: Optional[LandmarkShape] = None
    dim: Optional[int] = None

    @property
    def variance(self) -> float:
        if self.kernel is None:
            raise DomainError("process has no kernel; variance is undefined")
        return self.kernel.variance

    def unit_diffusion(self, t: float, x: np.ndarray) -> np.ndarray:
        """Diffusion with the variance factor removed: sigma / sqrt(v)."""
        if self.kernel is None:
            raise DomainError("process has no kernel; unit diffusion is undefined")
        return self.diffusion(t, x) / np.sqrt(self.kernel.variance)

    def with_variance(self, v: float) -> "ProcessSpec":
        if self.kind == "frozen_brownian":
            return frozen_brownian_process(self.frozen_state, self.kernel.with_variance(v))
        if self.kind == "kunita":
            return kunita_process(self.kernel.with_variance(v), d=self._d)
        raise DomainError(f"cannot re-parameterise a {self.kind!r} process")

    @property
    def _d(self) -> int:
        if self.frozen_state is not None:
            return self.frozen_state.d
        if self.dim is not None:
            return self.dim
        raise DomainError("process does not record the landmark dimension")


def zero_drift(t: float, x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


def kunita_process(kernel: KernelSpec, d: int = 2) -> ProcessSpec:
    """Zero-drift Kunita flow: the diffusion is the kernel matrix at the
    current landmark positions."""

    def diffusion(t, x):
        return build_sigma(LandmarkShape.from_flat(x, d), kernel)

    return ProcessSpec(drift=zero_drift, diffusion=diffusion, kind="kunita",
                       kernel=kernel, dim=d)


def frozen_brownian_process(shape: LandmarkShape, kernel: KernelSpec) -> ProcessSpec:
    """Zero-drift process with the kernel matrix frozen at a reference
    shape; a Brownian motion with Gaussian transition densities."""
    sigma0 = build_sigma(shape, kernel)
    sigma0.flags.writeable = False

    def diffusion(t, x):
        return sigma0

    return ProcessSpec(drift=zero_drift, diffusion=diffusion, kind="frozen_brownian",
                       kernel=kernel, frozen_state=shape)


@dataclass(frozen=True)
class NoiseArray:
    """Pre-drawn Wiener increments for one path on one grid.

    Row i is N(0, dt I) and drives the step tau_i -> tau_{i+1};
    regenerable bit-exactly from (seed, grid, dim).
    """

    increments: np.ndarray
    seed: int

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        inc = inc.copy()
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)


@dataclass(frozen=True)
class PathSample:
    """Discretised trajectory: states[i] is the state at grid node i."""

    states: np.ndarray
    grid: TimeGrid
    noise: Optional[NoiseArray] = None


def sample_noise(seed: int, grid: TimeGrid, dim: int) -> NoiseArray:
    if dim < 1:
        raise DomainError("noise dimension must be >= 1")
    rng = np.random.default_rng(seed)
    increments = rng.normal(0.0, np.sqrt(grid.dt), size=(grid.steps, dim))
    return NoiseArray(increments=increments, seed=seed)


def euler_maruyama(proc: ProcessSpec, x0, grid: TimeGrid, noise: NoiseArray) -> PathSample:
    """Fixed-noise explicit Euler-Maruyama scan.

    states[i+1] = states[i] + f(tau_i, states[i]) dt + sigma(tau_i, states[i]) w_i.
    Raises SimulationBlowup with the failing step index if any state goes
    non-finite; callers must not silently clamp.
    """
    x0 = np.asarray(x0, dtype=float)
    if noise.increments.shape != (grid.steps, x0.size):
        raise DomainError(
            f"noise shape {noise.increments.shape} does not match grid/state "
            f"({grid.steps}, {x0.size})"
        )
    states = np.empty((grid.steps + 1, x0.size))
    states[0] = x0
    dt = grid.dt
    x = x0
    for i in range(grid.steps):
        t = grid.t0 + i * dt
        x = x + proc.drift(t, x) * dt + proc.diffusion(t, x) @ noise.increments[i]
        if not np.all(np.isfinite(x)):
            raise SimulationBlowup(i)
        states[i + 1] = x
    return PathSample(states=states, grid=grid, noise=noise)


def simulate_batch(drift, diffusion, x0s: np.ndarray, grid: TimeGrid,
                   increments: np.ndarray, sigma_const: np.ndarray | None = None) -> np.ndarray:
    """Vectorised Euler-Maruyama over a batch of paths.

    x0s is (N, k), increments is (N, M, k); returns (N, M+1, k).
    `drift` must accept batched states (N, k).  Passing sigma_const
    applies a constant diffusion as one matmul per step; otherwise
    `diffusion(t, x_j)` is evaluated per path.
    """
    n_paths, k = x0s.shape
    steps = grid.steps
    dt = grid.dt
    out = np.empty((n_paths, steps + 1, k))
    out[:, 0] = x0s
    x = x0s
    for i in range(steps):
        t = grid.t0 + i * dt
        if sigma_const is not None:
            shot = increments[:, i] @ sigma_const.T
        else:
            shot = np.empty_like(x)
            for j in range(n_paths):
                shot[j] = diffusion(t, x[j]) @ increments[j, i]
        x = x + drift(t, x) * dt + shot
        if not np.all(np.isfinite(x)):
            raise SimulationBlowup(i)
        out[:, i + 1] = x
    return out


def divergence_sigma(proc: ProcessSpec, x, t: float, step: float | None = None) -> np.ndarray:
    """Divergence of Sigma = sigma sigma^T: out_i = sum_j d Sigma_ij / d x_j.

    Central finite differences; the default step follows the state scale.
    A closed-form kernel implementation can replace this behind the same
    signature if profiling ever demands it.
    """
    x = np.asarray(x, dtype=float)
    k = x.size
    h = step if step is not None else 1e-4 * max(1.0, float(np.max(np.abs(x))))
    out = np.zeros(k)
    for j in range(k):
        ej = np.zeros(k)
        ej[j] = h
        sig_p = proc.diffusion(t, x + ej)
        sig_m = proc.diffusion(t, x - ej)
        d_sigma_j = ((sig_p @ sig_p.T) - (sig_m @ sig_m.T)) / (2.0 * h)
        out += d_sigma_j[:, j]
    return out


def export_path_csv(path: PathSample, file) -> None:
    """Write a path as CSV with columns t, x1, ..., x_{n*d}."""
    k = path.states.shape[1]
    nodes = path.grid.nodes
    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(k)])
        for t, row in zip(nodes, path.states):
            writer.writerow([format(t, ".17g")] + [format(c, ".17g") for c in row])
