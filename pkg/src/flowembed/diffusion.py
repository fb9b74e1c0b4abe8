"""Directed and symmetrized diffusion operators and diffusion maps."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .data import FlowDataset
from .kernel import AffinityMatrix, gaussian_affinity

logger = logging.getLogger(__name__)

UNDERFLOW_FLOOR = 1e-300
RESIDUAL_TOL = 1e-8


class UnderflowError(FloatingPointError):
    """A row of the affinity matrix has no usable mass."""


class EigenConvergenceError(np.linalg.LinAlgError):
    """The eigensolver did not reach the residual tolerance."""


@dataclass(frozen=True)
class DiffusionOperator:
    P: np.ndarray
    kind: str  # "directed" or "symmetrized"

    def __post_init__(self):
        if self.kind not in ("directed", "symmetrized"):
            raise ValueError(f"unknown operator kind {self.kind!r}")


@dataclass(frozen=True)
class DiffusionMapResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    t: int
    coords: np.ndarray


@dataclass(frozen=True)
class LaplacianMatrix:
    L: np.ndarray


def _weights(A):
    return A.weights if isinstance(A, AffinityMatrix) else np.asarray(A, dtype=float)


def row_normalize(A: AffinityMatrix | np.ndarray, positions: np.ndarray | None = None) -> DiffusionOperator:
    """Directed diffusion operator ``D^-1 A``.

    Rows whose mass underflowed (sum below ``UNDERFLOW_FLOOR``) are replaced by
    a one-hot on the Euclidean nearest neighbour when ``positions`` is given.
    """
    W = _weights(A).copy()
    sums = W.sum(axis=1)
    bad = np.flatnonzero(~(sums >= UNDERFLOW_FLOOR))
    if bad.size:
        if positions is None:
            raise UnderflowError(f"row {bad[0]} of the affinity matrix sums to {sums[bad[0]]:.3g}")
        positions = np.asarray(positions, dtype=float)
        _, nn = cKDTree(positions).query(positions[bad], k=2)
        for row, cand in zip(bad, nn):
            target = cand[1] if cand[0] == row else cand[0]
            logger.warning("affinity row %d underflowed; falling back to nearest neighbour %d", row, target)
            W[row] = 0.0
            W[row, target] = 1.0
        sums = W.sum(axis=1)
    return DiffusionOperator(W / sums[:, None], "directed")


def symmetrize(P_d: DiffusionOperator | np.ndarray) -> DiffusionOperator:
    if isinstance(P_d, DiffusionOperator):
        if P_d.kind != "directed":
            raise ValueError("symmetrize expects a directed operator")
        P = P_d.P
    else:
        P = np.asarray(P_d, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {P.shape}")
    return DiffusionOperator(0.5 * (P + P.T), "symmetrized")


def _sign_fix(vecs):
    # first component with magnitude above noise made positive
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            vecs[:, k] = -col
    return vecs


def symmetric_eigendecomposition(P_sd, m: int, tol: float = RESIDUAL_TOL):
    """Top-``m`` eigenpairs of a symmetric matrix, by descending eigenvalue.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as orthonormal
    columns.  Every retained pair is checked against ``tol``; a larger residual
    raises :class:`EigenConvergenceError`.
    """
    S = P_sd.P if isinstance(P_sd, DiffusionOperator) else np.asarray(P_sd, dtype=float)
    n = S.shape[0]
    if S.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not 1 <= m <= n:
        raise ValueError(f"m must lie in [1, {n}], got {m}")
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    order = np.argsort(-vals, kind="stable")[:m]
    vals, vecs = vals[order], _sign_fix(vecs[:, order].copy())
    residual = np.linalg.norm(S @ vecs - vecs * vals, axis=0).max()
    if residual > tol * scale:
        raise EigenConvergenceError(f"eigen-residual {residual:.3e} exceeds {tol:.1e}")
    return vals, vecs


def diffusion_coordinates(eigenvalues, eigenvectors, t: int = 1) -> np.ndarray:
    """``coords[i, k] = eigenvalues[k] ** t * eigenvectors[i, k]``."""
    if int(t) != t or t < 1:
        raise ValueError(f"diffusion time must be a positive integer, got {t}")
    lam = np.asarray(eigenvalues, dtype=float)
    return np.asarray(eigenvectors, dtype=float) * lam ** int(t)


def diffusion_map(P_sd, m: int = 25, t: int = 1) -> DiffusionMapResult:
    S = P_sd.P if isinstance(P_sd, DiffusionOperator) else np.asarray(P_sd, dtype=float)
    vals, vecs = symmetric_eigendecomposition(S, min(m, S.shape[0]))
    return DiffusionMapResult(vals, vecs, int(t), diffusion_coordinates(vals, vecs, t))


def diffusion_distance_matrix(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise ValueError("coords must be a nonempty (N, m) array")
    D = cdist(coords, coords)
    np.fill_diagonal(D, 0.0)
    return D


def propagate(P_d, start: int, t: int) -> np.ndarray:
    """Distribution of a ``t``-step walk started at ``start``: ``e_start^T P^t``."""
    P = P_d.P if isinstance(P_d, DiffusionOperator) else np.asarray(P_d, dtype=float)
    n = P.shape[0]
    if not 0 <= start < n:
        raise IndexError(f"start index {start} out of range for {n} points")
    if t < 0:
        raise ValueError("t must be nonnegative")
    p = np.zeros(n)
    p[start] = 1.0
    for _ in range(int(t)):
        p = p @ P
    return p


def shannon_entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def graph_laplacian(ds: FlowDataset | np.ndarray, sigma: float) -> LaplacianMatrix:
    """Combinatorial Laplacian ``D - W`` of the Gaussian affinity on positions."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = ds.positions if isinstance(ds, FlowDataset) else np.asarray(ds, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 points")
    W = gaussian_affinity(x, sigma)
    L = np.diag(W.sum(axis=1)) - W
    return LaplacianMatrix(L)
