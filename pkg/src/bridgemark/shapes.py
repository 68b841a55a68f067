"""Landmark shapes, kernels, alignment and synthetic outline generation.

A landmark shape is an ordered set of n points in 2 or 3 dimensions.
Ordering carries the correspondence between shapes and is preserved by
every operation in this module.  The stacked vector representation is
landmark-major: (x1_1, .., x1_d, x2_1, ..), so the diffusion matrix built
from a kernel consists of contiguous d x d blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DomainError


@dataclass(frozen=True)
class LandmarkShape:
    """Ordered set of n landmarks in d dimensions (d in {2, 3})."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise DomainError(f"points must be an (n, d) array, got shape {pts.shape}")
        n, d = pts.shape
        if n < 1:
            raise DomainError("a shape needs at least one landmark")
        if d not in (2, 3):
            raise DomainError(f"landmark dimension must be 2 or 3, got {d}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("landmark coordinates must be finite")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def flat(self) -> np.ndarray:
        """Stacked landmark-major vector of length n*d."""
        return self.points.reshape(-1)

    @classmethod
    def from_flat(cls, vec, d: int) -> "LandmarkShape":
        vec = np.asarray(vec, dtype=float)
        if vec.size % d != 0:
            raise DomainError(f"flat vector of size {vec.size} is not divisible by d={d}")
        return cls(vec.reshape(-1, d))


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel k(x, y) = sqrt(v) * exp(-|x-y|^2 / (2 kappa^2)).

    The sqrt(v) factor in the kernel puts v multiplicatively into
    Sigma = sigma sigma^T, which is what the variance-profiled likelihood
    relies on.
    """

    variance: float
    lengthscale: float

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise DomainError(f"variance must be positive, got {self.variance}")
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise DomainError(f"lengthscale must be positive, got {self.lengthscale}")

    def with_variance(self, v: float) -> "KernelSpec":
        return KernelSpec(variance=v, lengthscale=self.lengthscale)

    def unit(self) -> "KernelSpec":
        """Same kernel with variance 1 (the profiled factor sigma-hat)."""
        return KernelSpec(variance=1.0, lengthscale=self.lengthscale)


def kernel_eval(x, y, spec: KernelSpec) -> float:
    """Evaluate the scalar kernel between two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DomainError(f"point dimensions differ: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("kernel arguments must be finite")
    sq = float(np.sum((x - y) ** 2))
    return float(np.sqrt(spec.variance) * np.exp(-sq / (2.0 * spec.lengthscale**2)))


def kernel_matrix(points: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """n x n matrix of pairwise kernel values."""
    pts = np.asarray(points, dtype=float)
    sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    return np.sqrt(spec.variance) * np.exp(-sq / (2.0 * spec.lengthscale**2))


def build_sigma(shape: LandmarkShape, spec: KernelSpec) -> np.ndarray:
    """(n*d) x (n*d) block diffusion matrix in the stacked representation.

    Entry for (landmark i, component l), (landmark j, component m) is
    delta_lm * k(x_i, x_j); coincident landmarks make it singular, which
    downstream code tolerates by never inverting it.
    """
    gram = kernel_matrix(shape.points, spec)
    return np.kron(gram, np.eye(shape.d))


def procrustes_align(reference: LandmarkShape, target: LandmarkShape) -> LandmarkShape:
    """Translate, uniformly scale and rotate target onto reference.

    Ordinary full Procrustes without reflection; landmark correspondence
    (ordering) is preserved.
    """
    if reference.points.shape != target.points.shape:
        raise DomainError(
            f"shape mismatch: {reference.points.shape} vs {target.points.shape}"
        )
    ref = reference.points
    tgt = target.points
    mu_ref = ref.mean(axis=0)
    mu_tgt = tgt.mean(axis=0)
    a = tgt - mu_tgt
    b = ref - mu_ref
    norm_a = np.linalg.norm(a)
    if norm_a < 1e-14:
        raise AlignmentError("target landmarks are all coincident")
    # Orthogonal Procrustes with det +1: SVD of the cross-covariance.
    u, s, vt = np.linalg.svd(a.T @ b)
    sign = np.sign(np.linalg.det(u @ vt))
    flip = np.ones(len(s))
    flip[-1] = sign
    rotation = (u * flip) @ vt
    scale = float((s * flip).sum()) / float((a * a).sum())
    aligned = scale * a @ rotation + mu_ref
    return LandmarkShape(aligned)


def procrustes_residual(reference: LandmarkShape, other: LandmarkShape) -> float:
    """Sum of squared distances between corresponding landmarks."""
    return float(((reference.points - other.points) ** 2).sum())


def resample_outline(polyline, n: int) -> LandmarkShape:
    """n points equally spaced by arc length along a closed polyline.

    The polyline is closed by connecting the last vertex back to the
    first; resampling starts at the first input vertex.
    """
    pts = np.asarray(polyline, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DomainError("polyline needs at least two points")
    if n < 1:
        raise DomainError("need n >= 1 output landmarks")
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        raise DomainError("polyline has zero total arc length")
    targets = np.arange(n) * total / n
    out = np.empty((n, pts.shape[1]))
    for j in range(pts.shape[1]):
        out[:, j] = np.interp(targets, cum, closed[:, j])
    return LandmarkShape(out)


def synth_shape(kind: str, n: int, params: dict | None = None, seed: int = 0) -> LandmarkShape:
    """Deterministic synthetic closed outlines: circle, ellipse or blob.

    The blob is a circle with a seeded low-frequency radial perturbation,
    kept small enough that the outline cannot self-intersect.
    """
    if n < 3:
        raise DomainError("need n >= 3 landmarks for a closed outline")
    params = dict(params or {})
    theta = 2.0 * np.pi * np.arange(n) / n
    cx, cy = params.get("center", (0.0, 0.0))
    if kind == "circle":
        r = params.get("radius", 1.0)
        pts = np.c_[cx + r * np.cos(theta), cy + r * np.sin(theta)]
    elif kind == "ellipse":
        a = params.get("a", 2.0)
        b = params.get("b", 1.0)
        pts = np.c_[cx + a * np.cos(theta), cy + b * np.sin(theta)]
    elif kind == "blob":
        r = params.get("radius", 1.0)
        amplitude = params.get("amplitude", 0.15)
        modes = params.get("modes", (2, 3, 4))
        rng = np.random.default_rng(seed)
        radial = np.ones_like(theta)
        for m in modes:
            am, bm = rng.normal(size=2)
            radial += amplitude / len(modes) * (am * np.cos(m * theta) + bm * np.sin(m * theta))
        radial = np.maximum(radial, 0.1)  # radial outline: positive radius => simple curve
        pts = np.c_[cx + r * radial * np.cos(theta), cy + r * radial * np.sin(theta)]
    else:
        raise DomainError(f"unknown synthetic shape kind {kind!r}")
    return LandmarkShape(pts)


def load_landmarks_csv(path) -> LandmarkShape:
    """Load an ordered landmark CSV with columns x,y[,z]; header optional."""
    rows = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            record = [c.strip() for c in record if c.strip() != ""]
            if not record:
                continue
            rows.append(record)
    if not rows:
        raise DomainError(f"{path}: no landmark rows")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1  # header row
    if start == len(rows):
        raise DomainError(f"{path}: header but no landmark rows")
    width = len(rows[start])
    if width not in (2, 3):
        raise DomainError(f"{path}: expected 2 or 3 columns, got {width}")
    pts = []
    for i, record in enumerate(rows[start:], start=start + 1):
        if len(record) != width:
            raise DomainError(f"{path}: row {i} has {len(record)} columns, expected {width}")
        try:
            pts.append([float(c) for c in record])
        except ValueError as exc:
            raise DomainError(f"{path}: row {i} is not numeric") from exc
    return LandmarkShape(np.array(pts))


def save_landmarks_csv(shape: LandmarkShape, path) -> None:
    header = ["x", "y", "z"][: shape.d]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in shape.points:
            writer.writerow([format(c, ".17g") for c in row])
