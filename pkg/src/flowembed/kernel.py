"""Flashlight kernel, directed affinity matrix and flow neighborhoods.

The flashlight kernel between ``p_i = (x_i, v_i)`` and ``p_j = (x_j, v_j)`` is

    K(p_i, p_j) = exp(-(|x_j - x_i|^2 + beta * (|v_i| - <v_i, u_ij>)) / sigma)

with ``u_ij`` the unit vector from ``x_i`` to ``x_j``.  The flow term is zero
when ``x_j`` lies straight ahead of ``v_i`` and largest (``2 beta |v_i|``) when
it lies straight behind, so the affinity is asymmetric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import FlowDataset, VelocityPoint

logger = logging.getLogger(__name__)

DENSE_LIMIT = 5000
_ROW_BLOCK = 256


@dataclass(frozen=True)
class KernelParams:
    sigma: float
    beta: float = 1.0
    epsilon_pos: float = 1e-12

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"kernel sigma must be positive, got {self.sigma}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not self.epsilon_pos > 0:
            raise ValueError(f"epsilon_pos must be positive, got {self.epsilon_pos}")


@dataclass(frozen=True)
class AffinityMatrix:
    weights: np.ndarray
    params: KernelParams

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class FlowNeighborhoods:
    k: int
    neighbors: np.ndarray  # (N, k) int, descending affinity per row

    def __getitem__(self, i):
        return self.neighbors[i]

    def __len__(self):
        return self.neighbors.shape[0]


def flashlight_affinity(p_i: VelocityPoint, p_j: VelocityPoint, params: KernelParams) -> float:
    """Flashlight affinity of ``p_j`` as seen from ``p_i``."""
    x_i, v_i, x_j = np.asarray(p_i.x, float), np.asarray(p_i.v, float), np.asarray(p_j.x, float)
    if x_i.shape != x_j.shape:
        raise ValueError("points have different dimensions")
    if not (np.all(np.isfinite(x_i)) and np.all(np.isfinite(v_i)) and np.all(np.isfinite(x_j))):
        raise ValueError("non-finite input to flashlight_affinity")
    delta = x_j - x_i
    d = float(np.linalg.norm(delta))
    speed = float(np.linalg.norm(v_i))
    along = float(v_i @ delta) / d if d > params.epsilon_pos else 0.0
    return float(np.exp(-(d * d + params.beta * (speed - along)) / params.sigma))


def _affinity_rows(x, v, rows, params):
    delta = x[None, :, :] - x[rows, None, :]  # delta[r, j] = x_j - x_i
    sq = np.einsum("rjk,rjk->rj", delta, delta)
    d = np.sqrt(sq)
    speed = np.linalg.norm(v[rows], axis=1)
    proj = np.einsum("rjk,rk->rj", delta, v[rows])
    far = d > params.epsilon_pos
    along = np.zeros_like(d)
    along[far] = proj[far] / d[far]
    # <v, u> <= |v| holds exactly in theory; clip rounding so the flow term stays >= 0
    flow = np.maximum(speed[:, None] - along, 0.0)
    return np.exp(-(sq + params.beta * flow) / params.sigma)


def build_affinity_matrix(ds: FlowDataset, params: KernelParams, prefilter: int | None = None) -> AffinityMatrix:
    """Dense ``N x N`` flashlight affinities with zero diagonal.

    ``prefilter`` keeps only the ``prefilter`` Euclidean-nearest candidates per
    row (others are set to 0).  It defaults to off up to ``DENSE_LIMIT`` points;
    pass an int to force it.
    """
    n = ds.n_points
    if n < 2:
        raise ValueError("need at least 2 points")
    x, v = ds.positions, ds.velocities
    weights = np.empty((n, n))
    for start in range(0, n, _ROW_BLOCK):
        rows = np.arange(start, min(start + _ROW_BLOCK, n))
        weights[rows] = _affinity_rows(x, v, rows, params)
    np.fill_diagonal(weights, 0.0)
    if prefilter is None and n > DENSE_LIMIT:
        prefilter = 40
    if prefilter is not None and prefilter < n - 1:
        _, idx = cKDTree(x).query(x, k=prefilter + 1)
        mask = np.zeros((n, n), dtype=bool)
        mask[np.arange(n)[:, None], idx] = True
        weights[~mask] = 0.0
    return AffinityMatrix(weights, params)


def gaussian_affinity(positions: np.ndarray, sigma: float) -> np.ndarray:
    """Symmetric ``exp(-|x_i - x_j|^2 / sigma)`` with zero diagonal."""
    x = np.asarray(positions, float)
    sq = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    w = np.exp(-sq / sigma)
    np.fill_diagonal(w, 0.0)
    return w


def flow_neighborhoods(A: AffinityMatrix | np.ndarray, k: int) -> FlowNeighborhoods:
    """Top-``k`` columns per row by affinity; ties go to the lower index."""
    W = A.weights if isinstance(A, AffinityMatrix) else np.asarray(A, float)
    n = W.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    keyed = -W.copy()
    np.fill_diagonal(keyed, np.inf)
    order = np.argsort(keyed, axis=1, kind="stable")[:, :k]
    return FlowNeighborhoods(k, order)


def median_heuristic_sigma(ds: FlowDataset | np.ndarray, k: int = 10) -> float:
    """Median over points of the squared distance to the k-th nearest neighbour."""
    x = ds.positions if isinstance(ds, FlowDataset) else np.asarray(ds, float)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < N, got k={k}, N={n}")
    dist, _ = cKDTree(x).query(x, k=k + 1)
    sigma = float(np.median(dist[:, k] ** 2))
    if not sigma > 0:
        raise ValueError(
            "degenerate point cloud: median k-NN distance is zero (coincident points)"
        )
    return sigma
