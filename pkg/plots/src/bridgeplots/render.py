"""Figure renderers for the four supported kinds.

Inputs are read-only; layout is deterministic for fixed inputs.  Each
renderer returns a small dict describing what was drawn (used by tests
and printed by the CLI).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_landmarks, read_mean_trajectory, read_path, read_sweep

KINDS = ("loglik_curve", "shape_overlay", "mean_trajectory", "bridge_snapshots")


def _close_outline(points: np.ndarray) -> np.ndarray:
    return np.vstack([points, points[:1]])


def render_loglik_curve(inputs, output) -> dict:
    """Overlay sweep curves with a dashed vertical line at each argmax."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    argmaxes = {}
    for path in inputs:
        names, v, curves = read_sweep(path)
        for j, name in enumerate(names):
            label = name if len(inputs) == 1 else f"{path}:{name}"
            line, = ax.plot(v, curves[:, j], label=label)
            v_hat = float(v[int(np.argmax(curves[:, j]))])
            ax.axvline(v_hat, linestyle="--", linewidth=0.8,
                       color=line.get_color())
            argmaxes[label] = v_hat
    ax.set_xlabel("variance v")
    ax.set_ylabel("log-likelihood")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(output, dpi=150)
    plt.close(fig)
    return {"kind": "loglik_curve", "curves": len(argmaxes), "argmax": argmaxes}


def render_shape_overlay(inputs, output) -> dict:
    """Closed landmark outlines drawn on a shared equal-aspect axis."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for path in inputs:
        points = read_landmarks(path)
        closed = _close_outline(points)
        ax.plot(closed[:, 0], closed[:, 1], marker="o", markersize=2.5,
                linewidth=1.0, label=str(path))
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(output, dpi=150)
    plt.close(fig)
    return {"kind": "shape_overlay", "outlines": len(inputs)}


def render_mean_trajectory(inputs, output) -> dict:
    """Estimate path with start/end markers; extra inputs are observations.

    The first input must be a trajectory CSV.  Two-coordinate iterates are
    drawn as a path in the plane; higher-dimensional iterates are drawn as
    outlines fading from start to end.
    """
    traj_path, obs_paths = inputs[0], inputs[1:]
    iterations, logliks, coords = read_mean_trajectory(traj_path)
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for path in obs_paths:
        points = read_landmarks(path)
        if coords.shape[1] == 2:
            ax.plot(points[:, 0], points[:, 1], "k*", markersize=9,
                    linestyle="none")
        else:
            closed = _close_outline(points)
            ax.plot(closed[:, 0], closed[:, 1], color="0.6", linewidth=0.8)
    if coords.shape[1] == 2:
        ax.plot(coords[:, 0], coords[:, 1], "r-", linewidth=1.2)
        ax.plot(coords[0, 0], coords[0, 1], "ro", fillstyle="none",
                markersize=10, label="start")
        ax.plot(coords[-1, 0], coords[-1, 1], "r*", markersize=12, label="end")
        ax.legend(fontsize=8)
    else:
        n_iter = coords.shape[0]
        for i, row in enumerate(coords):
            outline = _close_outline(row.reshape(-1, 2))
            shade = plt.cm.Reds(0.25 + 0.75 * i / max(n_iter - 1, 1))
            width = 1.8 if i in (0, n_iter - 1) else 0.7
            ax.plot(outline[:, 0], outline[:, 1], color=shade, linewidth=width)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(output, dpi=150)
    plt.close(fig)
    return {"kind": "mean_trajectory", "steps": len(iterations),
            "final_loglik": float(logliks[-1]),
            "start": coords[0].tolist(), "end": coords[-1].tolist()}


def render_bridge_snapshots(inputs, output, times=(0.0, 0.25, 0.5, 0.75, 1.0)) -> dict:
    """Path ensemble at chosen times, one panel per time.

    States are interpreted as flattened 2D landmark shapes; each panel
    overlays every path's outline at the nearest grid node.
    """
    ensembles = [read_path(p) for p in inputs]
    t0 = ensembles[0][0]
    k = ensembles[0][1].shape[1]
    for path, (t, states) in zip(inputs, ensembles):
        if states.shape[1] != k or len(t) != len(t0):
            raise SchemaError(f"{path}: grid or dimension differs from the "
                              "first ensemble member")
    if k % 2 != 0:
        raise SchemaError("bridge snapshots need an even state dimension "
                          "(flattened 2D landmarks)")
    fig, axes = plt.subplots(1, len(times), figsize=(3.0 * len(times), 3.2),
                             sharex=True, sharey=True)
    if len(times) == 1:
        axes = [axes]
    for ax, when in zip(axes, times):
        idx = int(np.argmin(np.abs(t0 - when)))
        for _, states in ensembles:
            outline = _close_outline(states[idx].reshape(-1, 2))
            ax.plot(outline[:, 0], outline[:, 1], linewidth=0.7, alpha=0.7)
        ax.set_title(f"t = {t0[idx]:.3g}", fontsize=9)
        ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(output, dpi=150)
    plt.close(fig)
    return {"kind": "bridge_snapshots", "paths": len(ensembles),
            "times": [float(t0[int(np.argmin(np.abs(t0 - w)))]) for w in times]}


RENDERERS = {
    "loglik_curve": render_loglik_curve,
    "shape_overlay": render_shape_overlay,
    "mean_trajectory": render_mean_trajectory,
    "bridge_snapshots": render_bridge_snapshots,
}


def render(kind: str, inputs, output, **kwargs) -> dict:
    if kind not in RENDERERS:
        raise SchemaError(f"unknown figure kind {kind!r}; choose from {KINDS}")
    if not inputs:
        raise SchemaError("at least one --in file is required")
    return RENDERERS[kind](list(inputs), output, **kwargs)
