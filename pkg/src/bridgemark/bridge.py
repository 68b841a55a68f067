"""Reverse-time diffusion bridges and the analytic Brownian bridge oracle.

A bridge conditioned to hit `endpoint` at t1 is simulated *backwards*
from the endpoint: stepping from node tau_i to tau_{i-1} uses the
reverse-time drift

    g(x, t) = -f(x, t) + Sigma(x, t) s(x, t - t0) + div Sigma(x, t),

where s is the score of the unconditioned process started at the t0-side
state (analytic for the frozen-kernel Brownian baseline, a trained model
otherwise).  The score blows up as the elapsed time t - t0 approaches
zero, so the simulation stops a guard band above t0; the likelihood
module covers the remaining gap with a single analytic transition term.

For the constant-diffusion analytic case Sigma * score collapses to
-(x - x_start)/(t - t0), which is used directly (valid even for singular
Sigma) and makes zero-diffusion bridges integrate to straight lines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, SimulationBlowup
from .score import ScoreModel
from .sde import (NoiseArray, PathSample, ProcessSpec, TimeGrid,
                  divergence_sigma, zero_drift)


@dataclass(frozen=True)
class BridgeSpec:
    """Bridge of `base` from (t0, x_start) to (t1, endpoint)."""

    base: ProcessSpec
    x_start: np.ndarray
    t0: float
    endpoint: np.ndarray
    t1: float
    score_source: Union[str, ScoreModel] = "analytic_bm"   # 'analytic_bm' or a model
    include_divergence: bool = False
    guard_steps: int = 2

    def __post_init__(self):
        object.__setattr__(self, "x_start", np.asarray(self.x_start, dtype=float))
        object.__setattr__(self, "endpoint", np.asarray(self.endpoint, dtype=float))
        if self.x_start.shape != self.endpoint.shape:
            raise DomainError("bridge endpoints have mismatched dimensions")
        if not self.t1 > self.t0:
            raise DomainError("bridge needs t1 > t0")
        if isinstance(self.score_source, str) and self.score_source != "analytic_bm":
            raise DomainError(f"unknown score source {self.score_source!r}")
        if self.guard_steps < 1:
            raise DomainError("guard band must be at least one step")

    @property
    def duration(self) -> float:
        return self.t1 - self.t0


def _reverse_drift_batch(spec: BridgeSpec, x: np.ndarray, t: float) -> np.ndarray:
    """Reverse-time bridge drift for a batch of states (N, k)."""
    elapsed = t - spec.t0
    base = spec.base
    if isinstance(spec.score_source, str):
        # Analytic Brownian score: Sigma (elapsed Sigma)^{-1} cancels.
        sigma_score = -(x - spec.x_start) / elapsed
    else:
        model = spec.score_source
        s = model(elapsed, x, base.variance)
        s = np.atleast_2d(s)
        if base.kind == "frozen_brownian":
            sigma0 = base.diffusion(t, x[0])
            sigma_score = s @ (sigma0 @ sigma0.T).T
        else:
            sigma_score = np.empty_like(s)
            for j in range(x.shape[0]):
                sig = base.diffusion(t, x[j])
                sigma_score[j] = (sig @ sig.T) @ s[j]
    if base.drift is zero_drift:
        out = sigma_score
    else:
        out = sigma_score - np.array([base.drift(t, xi) for xi in x])
    if spec.include_divergence and base.kind != "frozen_brownian":
        out = out.copy()
        for j in range(x.shape[0]):
            out[j] = out[j] + divergence_sigma(base, x[j], t)
    return out


def reverse_bridge_drift(spec: BridgeSpec, x, t: float) -> np.ndarray:
    """Reverse-time drift at an interior time; stepping toward t0 with
    positive increments of this drift reproduces the bridge law.

    Evaluation at the conditioning time t1 (or outside the interval) is a
    domain error: there the score term of the reversed construction is
    singular and the simulation handles the endpoint separately.
    """
    if not (spec.t0 < t < spec.t1):
        raise DomainError(f"time {t} is not strictly inside ({spec.t0}, {spec.t1})")
    x = np.asarray(x, dtype=float)
    return _reverse_drift_batch(spec, x[None, :], t)[0]


def reverse_bridge_paths(spec: BridgeSpec, grid: TimeGrid, n_paths: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Batched reverse-time simulation, re-indexed to forward time.

    Returns (N, M+1, k): states[:, M] is the endpoint bit-exactly, nodes
    guard_steps..M are simulated, states[:, 0] is x_start and any nodes
    strictly inside the guard band are linear interpolants (they carry no
    probabilistic meaning and the likelihood never reads them).
    """
    if not (np.isclose(grid.t0, spec.t0) and np.isclose(grid.t1, spec.t1)):
        raise DomainError("grid does not cover the bridge interval")
    guard = spec.guard_steps
    if guard >= grid.steps:
        raise DomainError(f"guard band of {guard} steps swallows the whole grid "
                          f"of {grid.steps} steps")
    k = spec.endpoint.size
    dt = grid.dt
    constant = spec.base.kind == "frozen_brownian"
    sigma_const = spec.base.diffusion(grid.t1, spec.endpoint) if constant else None
    states = np.empty((n_paths, grid.steps + 1, k))
    states[:, grid.steps] = spec.endpoint
    x = np.tile(spec.endpoint, (n_paths, 1))
    for i in range(grid.steps, guard, -1):
        t = grid.t0 + i * dt
        g = _reverse_drift_batch(spec, x, t)
        w = rng.normal(0.0, np.sqrt(dt), size=(n_paths, k))
        if constant:
            shot = w @ sigma_const.T
        else:
            shot = np.empty_like(x)
            for j in range(n_paths):
                shot[j] = spec.base.diffusion(t, x[j]) @ w[j]
        x = x + g * dt + shot
        if not np.all(np.isfinite(x)):
            raise SimulationBlowup(i)
        states[:, i - 1] = x
    states[:, 0] = spec.x_start
    for i in range(1, guard):
        frac = i / guard
        states[:, i] = (1.0 - frac) * spec.x_start + frac * states[:, guard]
    return states


def sample_reverse_bridge(spec: BridgeSpec, grid: TimeGrid, noise: NoiseArray) -> PathSample:
    """Single reverse-bridge path driven by a fixed noise array.

    Noise row i-1 drives the reverse step tau_i -> tau_{i-1}; rows inside
    the guard band are unused.
    """
    k = spec.endpoint.size
    if noise.increments.shape != (grid.steps, k):
        raise DomainError("noise does not match grid and state dimension")
    guard = spec.guard_steps
    if guard >= grid.steps:
        raise DomainError("guard band swallows the whole grid")
    dt = grid.dt
    constant = spec.base.kind == "frozen_brownian"
    sigma_const = spec.base.diffusion(grid.t1, spec.endpoint) if constant else None
    states = np.empty((grid.steps + 1, k))
    states[grid.steps] = spec.endpoint
    x = spec.endpoint.copy()
    for i in range(grid.steps, guard, -1):
        t = grid.t0 + i * dt
        g = _reverse_drift_batch(spec, x[None, :], t)[0]
        sigma = sigma_const if constant else spec.base.diffusion(t, x)
        x = x + g * dt + sigma @ noise.increments[i - 1]
        if not np.all(np.isfinite(x)):
            raise SimulationBlowup(i)
        states[i - 1] = x
    states[0] = spec.x_start
    for i in range(1, guard):
        frac = i / guard
        states[i] = (1.0 - frac) * spec.x_start + frac * states[guard]
    return PathSample(states=states, grid=grid, noise=noise)


def forward_bm_bridge_drift(x, t: float, target, t1: float,
                            sigma0: np.ndarray | None = None) -> np.ndarray:
    """Exact Doob drift of the frozen-kernel Brownian bridge.

    For a zero-drift constant-diffusion base the guiding term collapses
    to (target - x)/(t1 - t) independently of sigma0; the argument is
    kept for signature symmetry with the general construction.
    """
    if t >= t1:
        raise DomainError(f"forward bridge drift needs t < t1, got t={t}, t1={t1}")
    x = np.asarray(x, dtype=float)
    return (np.asarray(target, dtype=float) - x) / (t1 - t)


@dataclass(frozen=True)
class ForwardBridgeProposal:
    """Forward-simulated analytic Brownian bridge proposal.

    Paths are Euler-Maruyama with the exact Doob drift; the last
    `final_gap_steps` steps before t1 are not simulated and the
    likelihood covers them with its separately-treated final transition
    (one step by default).
    """

    base: ProcessSpec
    x_start: np.ndarray
    t0: float
    endpoint: np.ndarray
    t1: float
    final_gap_steps: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x_start", np.asarray(self.x_start, dtype=float))
        object.__setattr__(self, "endpoint", np.asarray(self.endpoint, dtype=float))
        if self.final_gap_steps < 1:
            raise DomainError("final gap must be at least one step")

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        return forward_bm_bridge_drift(x, t, self.endpoint, self.t1)


@dataclass(frozen=True)
class ReverseBridgeProposal:
    """Reverse-bridge proposal for the importance sampler."""

    spec: BridgeSpec

    @property
    def guard_steps(self) -> int:
        return self.spec.guard_steps
