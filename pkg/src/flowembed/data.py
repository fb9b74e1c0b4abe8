"""Synthetic position-velocity datasets, noise, CSV I/O and splits.

Each dataset is a set of points ``(x_i, v_i)`` sampled from a curve together
with the curve's tangent scaled to a constant speed.  Four toy shapes are
provided: ``circle``, ``branch``, ``spiral`` and ``double_helix``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SHAPES = ("circle", "branch", "spiral", "double_helix")

DEFAULT_SHAPE_PARAMS = {
    "circle": {"radius": 1.0},
    "branch": {"trunk_length": 1.0, "arm_length": 1.0, "branch_angle": math.pi / 4},
    "spiral": {"inner_radius": 0.5, "growth": 0.15, "turns": 3.0},
    "double_helix": {"radius": 1.0, "pitch": 0.2, "turns": 3.0},
}


class SchemaError(ValueError):
    """Raised when a CSV file does not follow the dataset schema."""


@dataclass(frozen=True)
class VelocityPoint:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.ndim != 1 or x.shape != v.shape:
            raise ValueError(f"position/velocity shape mismatch: {x.shape} vs {v.shape}")
        if x.size < 2:
            raise ValueError("points need dimension n >= 2")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite coordinates")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


@dataclass
class FlowDataset:
    """Ordered collection of position-velocity pairs.

    Positions and velocities are stored as ``(N, n)`` arrays.  ``labels`` holds
    an optional integer per point (strand or branch id) and ``scalar_meta`` an
    optional real per point (pseudotime or path parameter).
    """

    positions: np.ndarray
    velocities: np.ndarray
    labels: np.ndarray | None = None
    scalar_meta: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape != self.velocities.shape:
            raise ValueError(
                f"positions {self.positions.shape} and velocities "
                f"{self.velocities.shape} must be matching (N, n) arrays"
            )
        if self.n_points < 2:
            raise ValueError("a dataset needs at least 2 points")
        if self.dim < 2:
            raise ValueError("points need dimension n >= 2")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("non-finite coordinates in dataset")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (self.n_points,):
                raise ValueError("labels must have one entry per point")
        if self.scalar_meta is not None:
            self.scalar_meta = np.asarray(self.scalar_meta, dtype=float)
            if self.scalar_meta.shape != (self.n_points,):
                raise ValueError("scalar_meta must have one entry per point")

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.n_points

    def __getitem__(self, i) -> VelocityPoint:
        return VelocityPoint(self.positions[i], self.velocities[i])

    @property
    def points(self) -> list[VelocityPoint]:
        return [self[i] for i in range(self.n_points)]

    def subset(self, indices) -> FlowDataset:
        idx = np.asarray(indices, dtype=int)
        return FlowDataset(
            self.positions[idx],
            self.velocities[idx],
            None if self.labels is None else self.labels[idx],
            None if self.scalar_meta is None else self.scalar_meta[idx],
            self.name,
        )


@dataclass(frozen=True)
class GeneratorSpec:
    shape: str
    n_points: int = 500
    speed: float = 1.0
    shape_params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if int(self.n_points) < 2:
            raise ValueError(f"n_points must be >= 2, got {self.n_points}")
        if not self.speed > 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        unknown = set(self.shape_params) - set(DEFAULT_SHAPE_PARAMS[self.shape])
        if unknown:
            raise ValueError(f"unknown parameters for {self.shape}: {sorted(unknown)}")

    def params(self) -> dict:
        return {**DEFAULT_SHAPE_PARAMS[self.shape], **self.shape_params}


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"noise sigma must be nonnegative, got {self.sigma}")


def _unit(vectors):
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def _circle(n, p):
    theta = 2 * np.pi * np.arange(n) / n
    r = p["radius"]
    x = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    tangent = np.column_stack([-np.sin(theta), np.cos(theta)])
    return x, tangent, None, theta / (2 * np.pi)


def _branch(n, p):
    # trunk along +y, then two arms at +-angle from the vertical
    n_arm = n // 3
    n_trunk = n - 2 * n_arm
    trunk_len, arm_len, angle = p["trunk_length"], p["arm_length"], p["branch_angle"]
    s = np.arange(n_trunk) / n_trunk
    trunk = np.column_stack([np.zeros(n_trunk), trunk_len * s])
    xs, vs, labels, meta = [trunk], [np.tile([0.0, 1.0], (n_trunk, 1))], [np.zeros(n_trunk, int)], [s * trunk_len]
    s_arm = (np.arange(n_arm) + 1) / n_arm
    for label, sign in ((1, -1.0), (2, 1.0)):
        direction = np.array([sign * math.sin(angle), math.cos(angle)])
        xs.append(np.array([0.0, trunk_len]) + arm_len * s_arm[:, None] * direction)
        vs.append(np.tile(direction, (n_arm, 1)))
        labels.append(np.full(n_arm, label))
        meta.append(trunk_len + arm_len * s_arm)
    total = trunk_len + arm_len
    return np.vstack(xs), np.vstack(vs), np.concatenate(labels), np.concatenate(meta) / total


def _spiral(n, p):
    r0, growth = p["inner_radius"], p["growth"]
    theta_max = 2 * np.pi * p["turns"]

    def curve(theta):
        r = r0 + growth * theta
        pos = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        deriv = np.column_stack(
            [growth * np.cos(theta) - r * np.sin(theta), growth * np.sin(theta) + r * np.cos(theta)]
        )
        return pos, deriv

    # invert arc length on a fine grid so samples are evenly spaced along the curve
    fine = np.linspace(0.0, theta_max, 20001)
    _, d = curve(fine)
    speed = np.linalg.norm(d, axis=1)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(fine))])
    targets = np.linspace(0.0, arc[-1], n)
    theta = np.interp(targets, arc, fine)
    x, tangent = curve(theta)
    return x, tangent, None, targets / arc[-1]


def _double_helix(n, p):
    radius, pitch = p["radius"], p["pitch"]
    t_max = 2 * np.pi * p["turns"]
    n0 = (n + 1) // 2
    xs, vs, labels, meta = [], [], [], []
    for strand, count, phase in ((0, n0, 0.0), (1, n - n0, np.pi)):
        t = np.linspace(0.0, t_max, count)
        x = np.column_stack([radius * np.cos(t + phase), radius * np.sin(t + phase), pitch * t])
        d = np.column_stack([-radius * np.sin(t + phase), radius * np.cos(t + phase), np.full(count, pitch)])
        frac = t / t_max
        if strand == 1:
            # opposing flow on the second strand
            d = -d
            frac = 1.0 - frac
        xs.append(x)
        vs.append(d)
        labels.append(np.full(count, strand))
        meta.append(frac)
    return np.vstack(xs), np.vstack(vs), np.concatenate(labels), np.concatenate(meta)


_GENERATORS = {
    "circle": _circle,
    "branch": _branch,
    "spiral": _spiral,
    "double_helix": _double_helix,
}


def generate_dataset(spec: GeneratorSpec) -> FlowDataset:
    """Sample a toy shape with constant-speed tangent velocities.

    Points are placed on a fixed, evenly spaced grid along the curve, so the
    output depends only on ``spec`` (``spec.seed`` is carried for provenance).
    """
    x, tangent, labels, meta = _GENERATORS[spec.shape](int(spec.n_points), spec.params())
    v = spec.speed * _unit(tangent)
    return FlowDataset(x, v, labels, meta, name=spec.shape)


def add_noise(ds: FlowDataset, noise: NoiseSpec) -> FlowDataset:
    """Perturb positions by i.i.d. Gaussian noise; velocities are untouched."""
    if noise.sigma == 0:
        return replace(ds, positions=ds.positions.copy())
    rng = np.random.default_rng(noise.seed)
    noisy = ds.positions + rng.normal(0.0, noise.sigma, size=ds.positions.shape)
    return replace(ds, positions=noisy)


def train_test_split(ds: FlowDataset, test_fraction: float, seed: int = 0):
    """Random partition of ``range(N)`` into sorted (train, test) index arrays."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = ds.n_points if isinstance(ds, FlowDataset) else int(ds)
    n_test = int(round(test_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


# --- CSV ------------------------------------------------------------------

def csv_header(n: int, labels: bool = False, pseudotime: bool = False) -> list[str]:
    cols = [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)]
    if labels:
        cols.append("label")
    if pseudotime:
        cols.append("pseudotime")
    return cols


def save_csv(ds: FlowDataset, path) -> None:
    header = csv_header(ds.dim, ds.labels is not None, ds.scalar_meta is not None)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n_points):
            row = [repr(float(c)) for c in ds.positions[i]] + [repr(float(c)) for c in ds.velocities[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            if ds.scalar_meta is not None:
                row.append(repr(float(ds.scalar_meta[i])))
            writer.writerow(row)


def _parse_header(header, n):
    if not header:
        raise SchemaError("empty file: missing header")
    coords = [h.strip() for h in header]
    has_time = bool(coords) and coords[-1] == "pseudotime"
    if has_time:
        coords.pop()
    has_label = bool(coords) and coords[-1] == "label"
    if has_label:
        coords.pop()
    if not coords:
        raise SchemaError("header has no coordinate columns")
    if len(coords) % 2:
        raise SchemaError(f"header has an odd number of coordinate columns: {coords}")
    dim = len(coords) // 2
    if coords != csv_header(dim):
        raise SchemaError(f"missing or misnamed coordinate columns; expected {csv_header(dim)}, got {coords}")
    if n is not None and dim != n:
        raise SchemaError(f"dimension mismatch: file has n={dim}, expected n={n}")
    return dim, has_label, has_time


def load_csv(path, n: int | None = None, name: str | None = None) -> FlowDataset:
    """Read a dataset written by :func:`save_csv` (or any file following its schema).

    ``n`` is the expected point dimension; when omitted it is inferred from the
    header.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        dim, has_label, has_time = _parse_header(next(reader, None), n)
        width = 2 * dim + has_label + has_time
        pos, vel, labels, times = [], [], [], []
        for row_index, row in enumerate(reader):
            if not row:
                continue
            if len(row) != width:
                raise SchemaError(f"row {row_index}: expected {width} fields, got {len(row)}")
            try:
                values = [float(f) for f in row[: 2 * dim]]
                if has_label:
                    labels.append(int(row[2 * dim]))
                if has_time:
                    times.append(float(row[-1]))
            except ValueError as exc:
                raise SchemaError(f"row {row_index}: {exc}") from None
            if not all(math.isfinite(c) for c in values):
                raise SchemaError(f"row {row_index}: non-finite coordinate")
            pos.append(values[:dim])
            vel.append(values[dim:])
    if len(pos) < 2:
        raise SchemaError(f"{path}: need at least 2 data rows, got {len(pos)}")
    return FlowDataset(
        np.array(pos),
        np.array(vel),
        np.array(labels) if has_label else None,
        np.array(times) if has_time else None,
        name=name or path.stem,
    )
