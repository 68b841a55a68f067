"""Readers for the experiment CSV schemas.

Each reader validates the exact column layout produced by the main
package's exporters and fails with a descriptive message otherwise;
rendering never guesses at malformed inputs.
"""

from __future__ import annotations

import csv

import numpy as np


class SchemaError(Exception):
    """Input file does not match the expected CSV schema."""


def _read_rows(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc})") from exc
    if not rows:
        raise SchemaError(f"{path}: file is empty")
    header = [c.strip() for c in rows[0]]
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path}: header only, no data rows")
    try:
        data = np.array([[float(c) for c in row] for row in body])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric data row ({exc})") from exc
    if data.shape[1] != len(header):
        raise SchemaError(f"{path}: ragged rows against header {header}")
    return header, data


def read_sweep(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Sweep curves: 'v,loglik,ess' or a combined 'v,<method>...' file.

    Returns (curve names, v values, matrix with one column per curve).
    """
    header, data = _read_rows(path)
    if header[0] != "v" or len(header) < 2:
        raise SchemaError(f"{path}: expected first column 'v', got {header}")
    if header[:3] == ["v", "loglik", "ess"] and len(header) == 3:
        return ["loglik"], data[:, 0], data[:, 1:2]
    return header[1:], data[:, 0], data[:, 1:]


def read_landmarks(path) -> np.ndarray:
    """Landmark outline: columns x,y (z rejected, rendering is 2D only)."""
    header, data = _read_rows(path)
    if header == ["x", "y", "z"]:
        raise SchemaError(f"{path}: 3D landmark files are not renderable")
    if header != ["x", "y"]:
        # headerless files: first row was numeric and already consumed
        try:
            first = np.array([[float(c) for c in header]])
        except ValueError as exc:
            raise SchemaError(f"{path}: expected landmark columns x,y, "
                              f"got {header}") from exc
        if first.shape[1] != 2:
            raise SchemaError(f"{path}: expected 2 landmark columns")
        data = np.vstack([first, data])
    if data.shape[1] != 2:
        raise SchemaError(f"{path}: expected 2 landmark columns")
    return data


def read_mean_trajectory(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trajectory rows: iteration, loglik, x1..xk."""
    header, data = _read_rows(path)
    if header[:2] != ["iteration", "loglik"] or len(header) < 4:
        raise SchemaError(f"{path}: expected 'iteration,loglik,x1,...', got {header}")
    expected = [f"x{i + 1}" for i in range(len(header) - 2)]
    if header[2:] != expected:
        raise SchemaError(f"{path}: coordinate columns must be x1..x{len(expected)}")
    return data[:, 0], data[:, 1], data[:, 2:]


def read_path(path) -> tuple[np.ndarray, np.ndarray]:
    """Simulated path rows: t, x1..xk."""
    header, data = _read_rows(path)
    if header[0] != "t" or len(header) < 2:
        raise SchemaError(f"{path}: expected 't,x1,...', got {header}")
    expected = [f"x{i + 1}" for i in range(len(header) - 1)]
    if header[1:] != expected:
        raise SchemaError(f"{path}: state columns must be x1..x{len(expected)}")
    return data[:, 0], data[:, 1:]
