"""Score functions: analytic Brownian oracle, neural approximator and the
numerically stable score-matching trainer.

The trainer regresses a network onto the score of the *unconditioned*
forward process started at a fixed initial state.  Increments of plain
Euler-Maruyama paths serve as i.i.d. regression samples: the item built
from the step tau_i -> tau_{i+1} pairs the network input (tau_i, Y_{i+1})
with the residual v = Y_{i+1} - Y_i - f(tau_i, Y_i) dt and the step
covariance dt * Sigma(tau_i, Y_i).  The loss |p|^2_Sigma + 2 p^T v is the
inversion-free form of the weighted regression objective; the two differ
by a p-independent constant, so they share every minimiser.

Time convention: the network's time input is the elapsed time since the
process start, i.e. the time argument of the transition density whose
score is being learned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DomainError, TrainingDiverged
from .sde import ProcessSpec, TimeGrid, simulate_batch, zero_drift

EMBED_DIM = 32  # variance-conditioning embedding width (artifact choice)


def sinusoidal_embed(value: float, dim: int) -> np.ndarray:
    """Transformer-style sinusoidal embedding of a scalar.

    Component 2k is sin(value / 10000^(2k/dim)), component 2k+1 the
    matching cosine, so each (sin, cos) pair has unit norm.
    """
    if dim < 2 or dim % 2 != 0:
        raise DomainError("embedding dimension must be even and >= 2")
    k = np.arange(dim // 2)
    freq = 10000.0 ** (-2.0 * k / dim)
    out = np.empty(dim)
    out[0::2] = np.sin(value * freq)
    out[1::2] = np.cos(value * freq)
    return out


def analytic_bm_score(x, x_start, elapsed: float, sigma0: np.ndarray) -> np.ndarray:
    """Score of a Brownian transition: grad_x log N(x; x_start, elapsed * Sigma0).

    sigma0 is the constant diffusion factor (Sigma0 = sigma0 sigma0^T);
    the quadratic form is evaluated by two least-squares solves, never an
    explicit inverse.
    """
    if elapsed <= 0:
        raise DomainError(f"elapsed time must be positive, got {elapsed}")
    x = np.asarray(x, dtype=float)
    residual = x - np.asarray(x_start, dtype=float)
    z = np.linalg.lstsq(sigma0, residual, rcond=None)[0]
    y = np.linalg.lstsq(sigma0.T, z, rcond=None)[0]
    return -y / elapsed


@dataclass
class ScoreBatch:
    """Increments harvested from forward paths for one training step.

    Arrays are stacked over items: times/states/residuals row-wise; the
    step covariance dt * Sigma is shared when the process diffusion is
    constant, else per item.
    """

    times: np.ndarray          # (B,) left node tau_i of each increment
    states_next: np.ndarray    # (B, k) Y_{i+1}
    residuals: np.ndarray      # (B, k) v = Y_{i+1} - Y_i - f dt
    step_cov: np.ndarray       # (k, k) shared or (B, k, k) per item
    dt: float
    n_paths: int
    variance: float

    def __post_init__(self):
        if self.times.size == 0:
            raise DomainError("score batch is empty")
        if self.dt <= 0:
            raise DomainError("score batch needs dt > 0")


def stable_score_loss(p: np.ndarray, batch: ScoreBatch) -> float:
    """(1/N) sum_j sum_i dt * (p^T Sigma_i p + 2 p^T v_i), Sigma_i = dt * Sigma.

    Contains no matrix inverse; equals the inversion-based objective up
    to a constant independent of p.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != batch.residuals.shape:
        raise DomainError(
            f"model output shape {p.shape} does not match batch {batch.residuals.shape}"
        )
    if batch.step_cov.ndim == 2:
        sp = p @ batch.step_cov.T
    else:
        sp = np.einsum("bij,bj->bi", batch.step_cov, p)
    quad = np.einsum("bi,bi->b", p, sp)
    cross = 2.0 * np.einsum("bi,bi->b", p, batch.residuals)
    return float(batch.dt * np.sum(quad + cross) / batch.n_paths)


def stable_score_loss_grad(p: np.ndarray, batch: ScoreBatch) -> np.ndarray:
    """d loss / d p, row per item."""
    if batch.step_cov.ndim == 2:
        sp = p @ batch.step_cov.T
    else:
        sp = np.einsum("bij,bj->bi", batch.step_cov, p)
    return batch.dt * (2.0 * sp + 2.0 * batch.residuals) / batch.n_paths


class ScoreModel:
    """Feed-forward score approximator with variance conditioning.

    Input is the flattened state concatenated with the elapsed time; the
    normalised log-variance enters through a sinusoidal embedding applied
    as scale-shift on the down-sizing layers.  Instances are immutable
    after training and safe to share.
    """

    def __init__(self, state_dim: int, v_min: float, v_max: float,
                 seed: int = 0, embed_dim: int = EMBED_DIM, params: dict | None = None):
        if v_min <= 0 or v_max < v_min:
            raise DomainError("need 0 < v_min <= v_max")
        self.state_dim = state_dim
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.embed_dim = embed_dim
        self.params = params if params is not None else nn.init_params(
            state_dim + 1, state_dim, embed_dim, seed)

    def normalised_log_variance(self, v: float) -> float:
        """Affine map of log v onto [0, 1] over the configured range."""
        if v <= 0:
            raise DomainError(f"variance must be positive, got {v}")
        lo, hi = np.log(self.v_min), np.log(self.v_max)
        if hi == lo:
            return 0.0
        return float((np.log(v) - lo) / (hi - lo))

    def _inputs(self, t, x: np.ndarray, v: float):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.state_dim:
            raise DomainError(f"state dim {x.shape[1]} != model dim {self.state_dim}")
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite state passed to score model")
        t_col = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        if not np.all(np.isfinite(t_col)):
            raise DomainError("non-finite time passed to score model")
        inp = np.column_stack([x, t_col])
        emb = sinusoidal_embed(self.normalised_log_variance(v), self.embed_dim)
        # contiguous tile: BLAS falls off a cliff on zero-stride broadcast views
        cond = np.tile(emb, (x.shape[0], 1))
        return inp, cond

    def __call__(self, t, x, v: float) -> np.ndarray:
        """Score field at elapsed time t, state x, process variance v."""
        single = np.asarray(x).ndim == 1
        inp, cond = self._inputs(t, x, v)
        out = nn.forward(self.params, inp, cond)
        return out[0] if single else out

    def forward_cached(self, t, x, v: float):
        inp, cond = self._inputs(t, x, v)
        return nn.forward(self.params, inp, cond, cache=True)

    def save(self, path) -> None:
        """Checkpoint: JSON header (architecture + parameter index) followed
        by raw little-endian float64 blocks; byte-deterministic."""
        keys = sorted(self.params)
        header = {
            "state_dim": self.state_dim,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "embed_dim": self.embed_dim,
            "widths": list(nn.HIDDEN_WIDTHS),
            "arrays": {k: list(self.params[k].shape) for k in keys},
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode())
            fh.write(b"\n")
            for key in keys:
                fh.write(np.ascontiguousarray(self.params[key], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ScoreModel":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            params = {}
            for key in sorted(header["arrays"]):
                shape = tuple(header["arrays"][key])
                count = int(np.prod(shape)) if shape else 1
                buf = fh.read(8 * count)
                if len(buf) != 8 * count:
                    raise DomainError(f"checkpoint truncated at parameter {key}")
                params[key] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        model = cls(header["state_dim"], header["v_min"], header["v_max"],
                    embed_dim=header["embed_dim"], params=params)
        expect = nn.init_params(header["state_dim"] + 1, header["state_dim"],
                                header["embed_dim"], seed=0)
        if set(expect) != set(params):
            raise DomainError("checkpoint parameter set does not match architecture")
        for key, arr in expect.items():
            if params[key].shape != arr.shape:
                raise DomainError(f"checkpoint parameter {key} has shape "
                                  f"{params[key].shape}, expected {arr.shape}")
        return model


def score_forward(model: ScoreModel, t, x, v: float) -> np.ndarray:
    """Functional alias for evaluating a score model."""
    return model(t, x, v)


@dataclass
class ScoreTrainConfig:
    iterations: int = 2000
    paths_per_iter: int = 16
    learning_rate: float = 1e-3
    lr_halvings: int = 3           # step-decay: lr is halved this many times over the run
    ema_decay: float = 0.999       # exponential parameter averaging; 0 disables
    seed: int = 0
    v_min: float | None = None     # conditioning range; defaults to the process variance
    v_max: float | None = None
    guard_steps: int = 2           # drop increments with elapsed time below guard * dt
    val_paths: int = 32
    log_every: int = 50


def _harvest(proc: ProcessSpec, x_start: np.ndarray, grid: TimeGrid, rng,
             n_paths: int, v: float, guard_steps: int) -> ScoreBatch:
    """Simulate n_paths forward paths at variance v and stack their increments."""
    k = x_start.size
    sim = proc if v == proc.variance else proc.with_variance(v)
    increments = rng.normal(0.0, np.sqrt(grid.dt), size=(n_paths, grid.steps, k))
    constant = sim.kind == "frozen_brownian"
    sigma_const = sim.diffusion(grid.t0, x_start) if constant else None
    states = simulate_batch(sim.drift, sim.diffusion, np.tile(x_start, (n_paths, 1)),
                            grid, increments, sigma_const=sigma_const)
    dt = grid.dt
    first = max(guard_steps - 1, 0)   # drop increments ending before guard_steps * dt elapsed
    idx = np.arange(first, grid.steps)
    left_times = grid.t0 + idx * dt
    times = np.tile(left_times - grid.t0, n_paths)  # elapsed time at the left node
    y_next = states[:, idx + 1].reshape(-1, k)
    y_prev = states[:, idx].reshape(-1, k)
    flat_left = np.tile(left_times, n_paths)
    if sim.drift is zero_drift:
        residuals = y_next - y_prev
    else:
        drift_vals = np.array([sim.drift(tl, yp) for tl, yp in zip(flat_left, y_prev)])
        residuals = y_next - y_prev - drift_vals * dt
    if constant:
        step_cov = dt * (sigma_const @ sigma_const.T)
    else:
        step_cov = np.empty((len(y_prev), k, k))
        for row, (tl, yp) in enumerate(zip(flat_left, y_prev)):
            sig = sim.diffusion(tl, yp)
            step_cov[row] = dt * (sig @ sig.T)
    return ScoreBatch(times=times, states_next=y_next, residuals=residuals,
                      step_cov=step_cov, dt=dt, n_paths=n_paths, variance=v)


def train_score(proc: ProcessSpec, x_start, grid: TimeGrid,
                config: ScoreTrainConfig) -> tuple[ScoreModel, list]:
    """Fit a score model on unconditioned forward paths of `proc`.

    Returns the parameters with the best running validation loss and the
    training curve as a list of (iteration, train_loss, val_loss).
    """
    x_start = np.asarray(x_start, dtype=float)
    k = x_start.size
    v_lo = config.v_min if config.v_min is not None else proc.variance
    v_hi = config.v_max if config.v_max is not None else proc.variance
    model = ScoreModel(k, v_lo, v_hi, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    opt = nn.Adam(model.params, lr=config.learning_rate)

    def draw_v(r):
        if v_hi == v_lo:
            return v_lo
        return float(np.exp(r.uniform(np.log(v_lo), np.log(v_hi))))

    val_rng = np.random.default_rng(config.seed + 1)
    val_batch = _harvest(proc, x_start, grid, val_rng, config.val_paths,
                         draw_v(val_rng), config.guard_steps)

    def val_loss(params):
        saved = model.params
        model.params = params
        p = model(val_batch.times, val_batch.states_next, val_batch.variance)
        model.params = saved
        return stable_score_loss(p, val_batch)

    best = {key: arr.copy() for key, arr in model.params.items()}
    best_val = val_loss(model.params)
    curve = [(0, float("nan"), best_val)]
    ema = {key: arr.copy() for key, arr in model.params.items()}
    for it in range(1, config.iterations + 1):
        if config.lr_halvings:
            phase = int(config.lr_halvings * (it - 1) / config.iterations)
            opt.lr = config.learning_rate * 0.5**phase
        v = draw_v(rng)
        batch = _harvest(proc, x_start, grid, rng, config.paths_per_iter, v,
                         config.guard_steps)
        inp, cond = model._inputs(batch.times, batch.states_next, v)
        with np.errstate(over="ignore", invalid="ignore"):
            p, cache = nn.forward(model.params, inp, cond, cache=True)
            loss = stable_score_loss(p, batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(it)
            dp = stable_score_loss_grad(p, batch)
            grads = nn.backward(model.params, cache, dp)
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDiverged(it)
            opt.step(model.params, grads)
        if config.ema_decay:
            d = config.ema_decay
            for key, arr in model.params.items():
                ema[key] = d * ema[key] + (1.0 - d) * arr
        if it % config.log_every == 0 or it == config.iterations:
            candidate = ema if config.ema_decay else model.params
            vl = val_loss(candidate)
            curve.append((it, loss, vl))
            if vl < best_val:
                best_val = vl
                best = {key: arr.copy() for key, arr in candidate.items()}
    if config.iterations > 0:
        model.params = best
    return model, curve
