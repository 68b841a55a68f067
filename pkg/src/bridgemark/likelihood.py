"""Importance-sampled simulated likelihood with the stability tricks.

The transition density p(X_t1 | x_t0) is estimated by drawing bridge
proposal paths, accumulating per-step Gaussian log-density ratios of the
base process against the proposal law, and combining the per-path
log-weights with log-sum-exp.  Two proposal routes exist:

  - forward: Euler paths from x_t0 with the analytic Doob drift.  Base
    and proposal share the step covariance, so the ratio reduces to a
    difference of whitened quadratic forms (no determinants at all) plus
    the separately-treated final transition into X_t1.
  - reverse: score-driven reverse-bridge paths from X_t1.  The proposal
    density is evaluated in the reverse factorisation -- the exact law of
    the sampler -- and the base in the forward factorisation; the guard
    gap above t0 is covered by one analytic transition.

Quadratic forms are computed by whitening against the diffusion factor
with linear solves; nothing in this module inverts a matrix, and only
the clearly-marked full_gaussian mode evaluates log-determinants.  In
variance_profile mode every step density is reduced to
-(k/2) log v - (1/(2v)) z^T z with z whitened against the unit-variance
factor, which drops v-independent additive constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bridge import ForwardBridgeProposal, ReverseBridgeProposal, _reverse_drift_batch
from .errors import DomainError, EstimationError, SimulationBlowup
from .sde import PathSample, ProcessSpec, TimeGrid

MODES = ("full_gaussian", "variance_profile")
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LogLikEstimate:
    """Estimator value (possibly off by a v-independent constant in
    variance_profile mode) plus importance-sampling diagnostics."""

    value: float
    ess: float
    n_samples: int
    mode: str

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise EstimationError(f"non-finite log-likelihood estimate {self.value}")
        if not 1.0 <= self.ess <= self.n_samples + 1e-9:
            raise EstimationError(f"ESS {self.ess} outside [1, {self.n_samples}]")


def gauss_quad_form(residual: np.ndarray, sigma: np.ndarray) -> float:
    """z^T z for the least-squares solution of sigma z = residual.

    Equals residual^T (sigma sigma^T)^{-1} residual for full-rank sigma,
    but never forms an inverse and tolerates rank deficiency.
    """
    residual = np.asarray(residual, dtype=float)
    z = np.linalg.lstsq(np.asarray(sigma, dtype=float), residual, rcond=None)[0]
    return float(z @ z)


def _whiten(sigma: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Batched whitening: rows of `residuals` solved against `sigma`.

    Uses a direct solve when sigma is square and well-posed, falling back
    to least squares for rank-deficient factors.
    """
    try:
        return np.linalg.solve(sigma, residuals.T).T
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(sigma, residuals.T, rcond=None)[0].T


def logsumexp(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    m = np.max(values)
    if not np.isfinite(m):
        raise EstimationError("all importance weights are -inf")
    return float(m + np.log(np.sum(np.exp(values - m))))


def effective_sample_size(log_weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2 over normalised weights."""
    m = np.max(log_weights)
    u = np.exp(log_weights - m)
    return float(u.sum() ** 2 / (u * u).sum())


def log_step_density(x_next, x, proc: ProcessSpec, t: float, delta: float,
                     mode: str = "full_gaussian") -> float:
    """Euler-step transition log-density N(x_next; x + f dt, Sigma dt).

    full_gaussian evaluates the complete multivariate normal (the only
    place log-determinants appear; meant for desk-scale validation).
    variance_profile keeps only -(k/2) log v - (1/(2v)) z^T z, i.e. the
    terms that vary with the process variance.
    """
    if delta <= 0:
        raise DomainError(f"step length must be positive, got {delta}")
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}")
    x_next = np.asarray(x_next, dtype=float)
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(x))):
        raise DomainError("non-finite state in step density")
    k = x.size
    residual = x_next - x - proc.drift(t, x) * delta
    if mode == "full_gaussian":
        sigma_step = proc.diffusion(t, x) * np.sqrt(delta)
        quad = gauss_quad_form(residual, sigma_step)
        sign, logdet = np.linalg.slogdet(sigma_step @ sigma_step.T)
        if sign <= 0:
            raise DomainError("step covariance is singular; full_gaussian mode "
                              "needs a non-degenerate diffusion")
        return -0.5 * k * LOG_2PI - 0.5 * logdet - 0.5 * quad
    v = proc.variance
    unit_sigma = proc.unit_diffusion(t, x) * np.sqrt(delta)
    z = np.linalg.lstsq(unit_sigma, residual, rcond=None)[0]
    return float(-0.5 * k * np.log(v) - 0.5 * float(z @ z) / v)


def importance_log_weight(path: PathSample, base: ProcessSpec, proposal) -> float:
    """Log density ratio of base vs proposal over the interior nodes.

    Both step densities share the base diffusion evaluated at the
    pre-step node, so their log-determinants cancel exactly and the sum
    is half the difference of whitened quadratic forms (interior steps
    i = 1..M-1; the final transition is handled by the estimator).
    """
    states = path.states
    grid = path.grid
    if states.shape[0] != grid.steps + 1:
        raise DomainError("path and grid disagree on the number of nodes")
    dt = grid.dt
    prop_drift = proposal.drift if hasattr(proposal, "drift") else proposal
    total = 0.0
    for i in range(1, grid.steps):
        t_prev = grid.t0 + (i - 1) * dt
        x_prev = states[i - 1]
        sigma_step = base.diffusion(t_prev, x_prev) * np.sqrt(dt)
        increment = states[i] - x_prev
        q_base = gauss_quad_form(increment - base.drift(t_prev, x_prev) * dt, sigma_step)
        q_prop = gauss_quad_form(increment - prop_drift(t_prev, x_prev) * dt, sigma_step)
        total += 0.5 * (q_prop - q_base)
    return total


def _unit_logdet(unit_sigma: np.ndarray, delta: float, wide: float = 1.0) -> float:
    """log det of the v-free step covariance (delta * wide) * unit Sigma."""
    scaled = unit_sigma * np.sqrt(delta * wide)
    sign, logdet = np.linalg.slogdet(scaled @ scaled.T)
    if sign <= 0:
        raise DomainError("singular step covariance in full_gaussian mode")
    return float(logdet)


def _gaussian_terms(residuals: np.ndarray, unit_sigma: np.ndarray, v: float,
                    delta: float, mode: str, wide: float = 1.0,
                    logdet_unit: float | None = None):
    """Batched log N(residual; 0, v * delta * wide * unit Sigma) per mode.

    `unit_sigma` is the variance-free diffusion factor; `wide` widens the
    step (the guard-gap transition spans several dt).
    """
    k = residuals.shape[1]
    scale = np.sqrt(delta * wide)
    z = _whiten(unit_sigma * scale, residuals)
    quad = (z * z).sum(axis=1) / v
    if mode == "variance_profile":
        return -0.5 * k * np.log(v) - 0.5 * quad
    if logdet_unit is None:
        logdet_unit = _unit_logdet(unit_sigma, delta, wide)
    return -0.5 * k * LOG_2PI - 0.5 * (logdet_unit + k * np.log(v)) - 0.5 * quad


def _estimate_forward(x_t0, x_t1, base, drift_fn, final_gap_steps, grid,
                      n_samples, mode, rng):
    """Forward route: simulate and weight in one pass over the grid.

    `drift_fn(t, x_batch)` is the proposal drift; the base diffusion is
    shared, so the interior ratio terms carry no determinants.
    """
    k = x_t0.size
    dt = grid.dt
    gap = final_gap_steps
    if gap > grid.steps:
        raise DomainError("final gap exceeds the grid")
    if base.kind != "frozen_brownian":
        raise DomainError("forward bridge proposals need a frozen_brownian base")
    v = base.variance
    unit_const = base.unit_diffusion(grid.t0, x_t0)
    x = np.tile(x_t0, (n_samples, 1))
    log_w = np.zeros(n_samples)
    for i in range(1, grid.steps - gap + 1):
        t_prev = grid.t0 + (i - 1) * dt
        fstar = drift_fn(t_prev, x)
        w = rng.normal(0.0, np.sqrt(dt), size=(n_samples, k))
        nxt = x + fstar * dt + w @ (unit_const * np.sqrt(v)).T
        if not np.all(np.isfinite(nxt)):
            raise SimulationBlowup(i)
        z = _whiten(unit_const * np.sqrt(v * dt),
                    np.concatenate([nxt - x, nxt - x - fstar * dt], axis=0))
        quads = (z * z).sum(axis=1)
        log_w += 0.5 * (quads[n_samples:] - quads[:n_samples])
        x = nxt
    # final transition over the remaining gap, treated as one analytic term
    residual = x_t1 - x   # base drift is zero for frozen_brownian
    log_w += _gaussian_terms(residual, unit_const, v, dt, mode, wide=gap)
    return log_w


def _estimate_reverse(x_t0, x_t1, base, proposal, grid, n_samples, mode, rng):
    """Reverse route: exact reverse-factorised proposal density."""
    spec = proposal.spec
    guard = spec.guard_steps
    if guard >= grid.steps:
        raise DomainError("guard band swallows the whole grid")
    k = x_t0.size
    dt = grid.dt
    constant = base.kind == "frozen_brownian"
    v = base.variance
    log_w = np.zeros(n_samples)
    x = np.tile(x_t1, (n_samples, 1))
    if constant:
        unit_sigma = base.unit_diffusion(grid.t1, x_t1)
        logdet_step = _unit_logdet(unit_sigma, dt) if mode == "full_gaussian" else None
    for i in range(grid.steps, guard, -1):
        t = grid.t0 + i * dt
        g = _reverse_drift_batch(spec, x, t)
        mean_rev = x + g * dt
        w = rng.normal(0.0, np.sqrt(dt), size=(n_samples, k))
        if constant:
            nxt = mean_rev + w @ (unit_sigma * np.sqrt(v)).T
            if not np.all(np.isfinite(nxt)):
                raise SimulationBlowup(i)
            # base forward step tau_{i-1} -> tau_i minus reverse proposal step
            log_w += _gaussian_terms(x - nxt, unit_sigma, v, dt, mode,
                                     logdet_unit=logdet_step)
            log_w -= _gaussian_terms(nxt - mean_rev, unit_sigma, v, dt, mode,
                                     logdet_unit=logdet_step)
        else:
            nxt = np.empty_like(x)
            for j in range(n_samples):
                sig_unit = base.unit_diffusion(t, x[j])
                nxt[j] = mean_rev[j] + (sig_unit * np.sqrt(v)) @ w[j]
                log_w[j] -= _gaussian_terms((nxt[j] - mean_rev[j])[None, :],
                                            sig_unit, v, dt, mode)[0]
            if not np.all(np.isfinite(nxt)):
                raise SimulationBlowup(i)
            t_left = t - dt
            for j in range(n_samples):
                sig_unit = base.unit_diffusion(t_left, nxt[j])
                drift_term = base.drift(t_left, nxt[j]) * dt
                log_w[j] += _gaussian_terms((x[j] - nxt[j] - drift_term)[None, :],
                                            sig_unit, v, dt, mode)[0]
        x = nxt
    # analytic first transition x_t0 -> X_{tau_guard} over guard * dt
    unit_sigma0 = base.unit_diffusion(grid.t0, x_t0)
    residual = x - x_t0 - base.drift(grid.t0, x_t0) * (guard * dt)
    log_w += _gaussian_terms(residual, unit_sigma0, v, dt, mode, wide=guard)
    return log_w


def estimate_loglik(x_t0, x_t1, base: ProcessSpec, proposal, grid: TimeGrid,
                    n_samples: int, mode: str = "full_gaussian",
                    seed: int = 0) -> LogLikEstimate:
    """log p(X_t1 | x_t0) by importance sampling over bridge proposals.

    Deterministic for fixed seed.  `proposal` is a ForwardBridgeProposal,
    a ReverseBridgeProposal, or any object with a `.drift(t, x)` usable as
    a forward proposal sharing the base diffusion.
    """
    if n_samples < 1:
        raise DomainError("need at least one proposal sample")
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}")
    x_t0 = np.asarray(x_t0, dtype=float)
    x_t1 = np.asarray(x_t1, dtype=float)
    rng = np.random.default_rng(seed)
    if isinstance(proposal, ReverseBridgeProposal):
        log_w = _estimate_reverse(x_t0, x_t1, base, proposal, grid, n_samples,
                                  mode, rng)
    elif isinstance(proposal, ForwardBridgeProposal):
        log_w = _estimate_forward(x_t0, x_t1, base, proposal.drift,
                                  proposal.final_gap_steps, grid, n_samples,
                                  mode, rng)
    else:
        drift_fn = proposal.drift if hasattr(proposal, "drift") else proposal
        log_w = _estimate_forward(x_t0, x_t1, base, drift_fn, 1, grid,
                                  n_samples, mode, rng)
    finite = np.isfinite(log_w)
    if not finite.any():
        raise EstimationError("all importance weights are degenerate")
    value = logsumexp(log_w[finite]) - np.log(n_samples)
    ess = effective_sample_size(log_w[finite])
    return LogLikEstimate(value=float(value), ess=ess, n_samples=n_samples, mode=mode)


def export_estimate_json(estimate: LogLikEstimate, path, v: float,
                         m_steps: int, seed: int) -> None:
    record = {
        "v": v,
        "loglik": estimate.value,
        "ess": estimate.ess,
        "n_samples": estimate.n_samples,
        "m_steps": m_steps,
        "seed": seed,
        "mode": estimate.mode,
    }
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
