"""Command-line harness binding the modules into reproducible runs.

Every command reads one INI config, writes its outputs plus the resolved
config into --out, and is deterministic: re-running from the resolved
config reproduces the directory byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bridge import BridgeSpec, sample_reverse_bridge
from .config import ExperimentConfig, load_config, parse_shape_spec, write_config
from .errors import BridgemarkError, ConfigError
from .infer import (AscentConfig, BrownianVarianceFamily, EstimatorConfig,
                    diffusion_mean, export_mean_trajectory_csv, export_methods_csv,
                    export_sweep_csv, infer_variance, loglik_sweep)
from .likelihood import export_estimate_json
from .score import ScoreModel, ScoreTrainConfig, train_score
from .sde import (TimeGrid, euler_maruyama, export_path_csv,
                  frozen_brownian_process, kunita_process, sample_noise)
from .shapes import (KernelSpec, LandmarkShape, load_landmarks_csv,
                     procrustes_align, resample_outline, save_landmarks_csv)


def _build_process(config: ExperimentConfig, shape: LandmarkShape):
    proc_cfg = config["process"]
    kernel = KernelSpec(proc_cfg["variance"], proc_cfg["lengthscale"])
    if proc_cfg["kind"] == "frozen_brownian":
        return frozen_brownian_process(shape, kernel)
    if proc_cfg["kind"] == "kunita":
        return kunita_process(kernel, d=shape.d)
    raise ConfigError(f"unknown process kind {proc_cfg['kind']!r}")


def _grid(config: ExperimentConfig) -> TimeGrid:
    grid_cfg = config["grid"]
    return TimeGrid(grid_cfg["t0"], grid_cfg["t1"], grid_cfg["steps"])


def _estimator_config(config: ExperimentConfig, threads: int) -> EstimatorConfig:
    lik = config["likelihood"]
    model = None
    if lik["proposal"] == "reverse_learned":
        if not lik["checkpoint"]:
            raise ConfigError("reverse_learned proposals need [likelihood] checkpoint")
        model = ScoreModel.load(lik["checkpoint"])
    return EstimatorConfig(grid=_grid(config), n_samples=config["sampler"]["n_paths"],
                           mode=lik["mode"], seed=config["sampler"]["seed"],
                           proposal=lik["proposal"], guard_steps=lik["guard_steps"],
                           score_model=model, threads=threads)


def cmd_simulate(config: ExperimentConfig, out: Path, threads: int) -> None:
    shape = parse_shape_spec(config.get("shapes", "start"))
    proc = _build_process(config, shape)
    grid = _grid(config)
    seed = config["sampler"]["seed"]
    for index in range(config["sampler"]["n_paths"]):
        noise = sample_noise(seed + index, grid, shape.flat.size)
        path = euler_maruyama(proc, shape.flat, grid, noise)
        export_path_csv(path, out / f"path_{index:04d}.csv")


def cmd_train_score(config: ExperimentConfig, out: Path, threads: int) -> None:
    shape = parse_shape_spec(config.get("shapes", "start"))
    proc = _build_process(config, shape)
    train_cfg = config["train"]
    cfg = ScoreTrainConfig(
        iterations=train_cfg["iterations"],
        paths_per_iter=train_cfg["paths_per_iter"],
        learning_rate=train_cfg["learning_rate"],
        seed=config["sampler"]["seed"],
        v_min=train_cfg["v_min"] or None,
        v_max=train_cfg["v_max"] or None,
        guard_steps=train_cfg["guard_steps"],
    )
    model, curve = train_score(proc, shape.flat, _grid(config), cfg)
    model.save(out / "score_model.ckpt")
    with open(out / "loss_log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "train_loss", "val_loss"])
        for iteration, train_loss, val_loss in curve:
            writer.writerow([iteration, format(train_loss, ".17g"),
                             format(val_loss, ".17g")])


def cmd_sample_bridge(config: ExperimentConfig, out: Path, threads: int) -> None:
    start = parse_shape_spec(config.get("shapes", "start"))
    end_spec = config.get("shapes", "end")
    if not end_spec:
        raise ConfigError("sample-bridge needs [shapes] end")
    end = parse_shape_spec(end_spec)
    proc = _build_process(config, start)
    grid = _grid(config)
    lik = config["likelihood"]
    source = "analytic_bm"
    if lik["proposal"] == "reverse_learned":
        if not lik["checkpoint"]:
            raise ConfigError("learned bridges need [likelihood] checkpoint")
        source = ScoreModel.load(lik["checkpoint"])
    spec = BridgeSpec(base=proc, x_start=start.flat, t0=grid.t0,
                      endpoint=end.flat, t1=grid.t1, score_source=source,
                      guard_steps=lik["guard_steps"])
    seed = config["sampler"]["seed"]
    for index in range(config["sampler"]["n_paths"]):
        noise = sample_noise(seed + index, grid, start.flat.size)
        path = sample_reverse_bridge(spec, grid, noise)
        export_path_csv(path, out / f"bridge_{index:04d}.csv")


def cmd_loglik_sweep(config: ExperimentConfig, out: Path, threads: int) -> None:
    start = parse_shape_spec(config.get("shapes", "start"))
    end = parse_shape_spec(config.get("shapes", "end"))
    family = BrownianVarianceFamily(shape=start,
                                    lengthscale=config["process"]["lengthscale"])
    sweep = config["sweep"]
    if sweep["spacing"] == "log":
        v_grid = np.geomspace(sweep["v_min"], sweep["v_max"], sweep["v_count"])
    else:
        v_grid = np.linspace(sweep["v_min"], sweep["v_max"], sweep["v_count"])
    est_cfg = _estimator_config(config, threads)
    methods = [m.strip() for m in sweep["methods"].split(",") if m.strip()]
    curves = {}
    result = None
    for method in methods:
        if method in ("is_profile", "is_full"):
            mode = "variance_profile" if method == "is_profile" else "full_gaussian"
            res = loglik_sweep(start.flat, end.flat, family, v_grid,
                               replace(est_cfg, mode=mode))
            curves[method] = res.logliks
            if result is None or method == "is_profile":
                result = res
        elif method in ("analytic", "stable_analytic"):
            curves[method] = _closed_form_curve(family, start.flat, end.flat,
                                                v_grid, _grid(config), method)
        else:
            raise ConfigError(f"unknown sweep method {method!r}")
    if result is None:
        raise ConfigError("sweep needs at least one is_profile or is_full method")
    export_sweep_csv(result, out / "sweep.csv")
    if len(curves) > 1:
        export_methods_csv(v_grid, curves, out / "sweep_methods.csv")


def _closed_form_curve(family, x0, x1, v_grid, grid, method):
    """Exact Brownian curves: full log-density or its variance-profiled form."""
    unit = family.unit_sigma()
    duration = grid.duration
    resid = np.asarray(x1) - np.asarray(x0)
    z = np.linalg.lstsq(np.sqrt(duration) * unit, resid, rcond=None)[0]
    quad_unit = float(z @ z)
    k = resid.size
    out = []
    for v in v_grid:
        if method == "stable_analytic":
            out.append(-0.5 * k * np.log(v) - 0.5 * quad_unit / v)
        else:
            scaled = np.sqrt(duration) * unit
            _, logdet_unit = np.linalg.slogdet(scaled @ scaled.T)
            out.append(-0.5 * k * np.log(2 * np.pi) - 0.5 * (logdet_unit + k * np.log(v))
                       - 0.5 * quad_unit / v)
    return np.array(out)


def cmd_infer_variance(config: ExperimentConfig, out: Path, threads: int) -> None:
    start = parse_shape_spec(config.get("shapes", "start"))
    end = parse_shape_spec(config.get("shapes", "end"))
    family = BrownianVarianceFamily(shape=start,
                                    lengthscale=config["process"]["lengthscale"])
    iv = config["infer_variance"]
    fit = infer_variance(start.flat, end.flat, family, iv["init_v"],
                         _estimator_config(config, threads),
                         AscentConfig(tolerance=iv["tolerance"],
                                      max_iterations=iv["max_iterations"]))
    from .infer import estimate_for_variance
    est = estimate_for_variance(family, fit.v, start.flat, end.flat,
                                _estimator_config(config, threads))
    export_estimate_json(est, out / "variance.json", v=fit.v,
                         m_steps=config["grid"]["steps"],
                         seed=config["sampler"]["seed"])


def cmd_diffusion_mean(config: ExperimentConfig, out: Path, threads: int) -> None:
    dm = config["diffusion_mean"]
    observations = [parse_shape_spec(s.strip())
                    for s in dm["observations"].split(";") if s.strip()]
    init = parse_shape_spec(config.get("shapes", "start"))
    family = BrownianVarianceFamily(shape=init,
                                    lengthscale=config["process"]["lengthscale"])
    trajectory = diffusion_mean(
        observations, family, init, _estimator_config(config, threads),
        v=dm["variance"],
        ascent=AscentConfig(tolerance=dm["tolerance"],
                            max_iterations=dm["max_iterations"]),
        fresh_noise=dm["fresh_noise"])
    export_mean_trajectory_csv(trajectory, out / "mean_trajectory.csv")


def cmd_align(config: ExperimentConfig, out: Path, threads: int) -> None:
    align_cfg = config["align"]
    reference = load_landmarks_csv(align_cfg["reference"])
    for index, target_path in enumerate(p.strip() for p in
                                        align_cfg["targets"].split(";") if p.strip()):
        aligned = procrustes_align(reference, load_landmarks_csv(target_path))
        save_landmarks_csv(aligned, out / f"aligned_{index:03d}.csv")


def cmd_resample(config: ExperimentConfig, out: Path, threads: int) -> None:
    rs = config["resample"]
    outline = load_landmarks_csv(rs["input"])
    resampled = resample_outline(outline.points, rs["count"])
    save_landmarks_csv(resampled, out / "landmarks.csv")


COMMANDS = {
    "simulate": cmd_simulate,
    "train-score": cmd_train_score,
    "sample-bridge": cmd_sample_bridge,
    "loglik-sweep": cmd_loglik_sweep,
    "infer-variance": cmd_infer_variance,
    "diffusion-mean": cmd_diffusion_mean,
    "align": cmd_align,
    "resample": cmd_resample,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bridgemark",
        description="Diffusion-bridge importance sampling experiments")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="INI experiment config")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override [sampler] seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for grid/observation parallelism")
    parser.add_argument("--mode", choices=["full_gaussian", "variance_profile"],
                        default=None, help="override [likelihood] mode")
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    overrides = {}
    if args.seed is not None:
        overrides[("sampler", "seed")] = args.seed
    if args.mode is not None:
        overrides[("likelihood", "mode")] = args.mode
    try:
        config = load_config(args.config, args.command, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](config, out, max(1, args.threads))
        write_config(config, out / "resolved.ini")
    except BridgemarkError as exc:
        print(f"bridgemark {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
