"""Quantitative checks on embeddings and a PCA baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .data import FlowDataset
from .diffusion import UNDERFLOW_FLOOR, propagate, row_normalize, shannon_entropy
from .kernel import AffinityMatrix, KernelParams, build_affinity_matrix, gaussian_affinity


@dataclass
class MetricReport:
    stress: float | None = None
    flow_cosine: float | None = None
    flow_cosine_excluded: int = 0
    strand_accuracy_plain: float | None = None
    strand_accuracy_velocity: float | None = None
    diffusion_entropies: dict = field(default_factory=dict)
    preprocessing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["diffusion_entropies"] = {str(t): list(v) for t, v in self.diffusion_entropies.items()}
        return d

    def table(self) -> str:
        rows = [
            ("stress", self.stress),
            ("flow_cosine", self.flow_cosine),
            ("flow_cosine_excluded", self.flow_cosine_excluded),
            ("strand_accuracy_plain", self.strand_accuracy_plain),
            ("strand_accuracy_velocity", self.strand_accuracy_velocity),
        ]
        for t, (directed, sym) in sorted(self.diffusion_entropies.items()):
            rows.append((f"entropy_t{t}_directed", directed))
            rows.append((f"entropy_t{t}_symmetric", sym))
        width = max(len(name) for name, _ in rows)
        lines = []
        for name, value in rows:
            if value is None:
                text = "n/a"
            elif isinstance(value, float):
                text = f"{value:.6g}"
            else:
                text = str(value)
            lines.append(f"{name:<{width}}  {text}")
        return "\n".join(lines)


def _arrays(result):
    E = np.asarray(getattr(result, "embeddings", result), dtype=float)
    F = getattr(result, "field_at_points", None)
    return E, None if F is None else np.asarray(F, dtype=float)


def stress(embeddings, D_manifold) -> float:
    """Mean over ordered pairs ``i != j`` of squared distance mismatch."""
    E = np.asarray(embeddings, dtype=float)
    D = np.asarray(D_manifold, dtype=float)
    n = E.shape[0]
    if D.shape != (n, n):
        raise ValueError(f"D_manifold shape {D.shape} does not match {n} embedded points")
    resid = cdist(E, E) - D
    np.fill_diagonal(resid, 0.0)
    return float(np.sum(resid * resid) / (n * (n - 1)))


def flow_cosine(embeddings, field_at_points, neighborhoods):
    """Mean cosine between the field and the mean displacement to flow neighbours.

    Returns ``(mean_cosine, n_excluded)``; points where either vector has zero
    norm are excluded.
    """
    E = np.asarray(embeddings, dtype=float)
    F = np.asarray(field_at_points, dtype=float)
    nbrs = np.asarray(getattr(neighborhoods, "neighbors", neighborhoods), dtype=int)
    if nbrs.shape[0] != E.shape[0] or F.shape != E.shape:
        raise ValueError("inconsistent N across embeddings, field and neighbourhoods")
    disp = (E[nbrs] - E[:, None, :]).mean(axis=1)
    nd = np.linalg.norm(disp, axis=1)
    nf = np.linalg.norm(F, axis=1)
    ok = (nd > 1e-12) & (nf > 1e-12)
    if not ok.any():
        raise ValueError("degenerate field: every point has a zero-norm field or displacement")
    cos = np.sum(disp[ok] * F[ok], axis=1) / (nd[ok] * nf[ok])
    return float(np.clip(cos, -1.0, 1.0).mean()), int((~ok).sum())


def evaluate_metrics(result, D_manifold, neighborhoods) -> MetricReport:
    E, F = _arrays(result)
    cos, excluded = flow_cosine(E, F, neighborhoods)
    return MetricReport(stress=stress(E, D_manifold), flow_cosine=cos, flow_cosine_excluded=excluded)


def _standardize_block(block):
    centered = block - block.mean(axis=0)
    scale = float(np.sqrt(np.mean(centered.var(axis=0))))
    if scale < 1e-12:
        return centered, 0.0
    return centered / scale, scale


def _loo_1nn_accuracy(features, labels):
    D = cdist(features, features)
    np.fill_diagonal(D, np.inf)
    nearest = np.argmin(D, axis=1)  # first minimum: ties go to the lower index
    return float(np.mean(labels[nearest] == labels))


def strand_separability(result, labels=None, return_metadata: bool = False):
    """Leave-one-out 1-NN label accuracy without and with field features.

    Each feature block (embedding, field) is centred and scaled to unit mean
    per-coordinate variance before concatenation.
    """
    E, F = _arrays(result)
    if labels is None:
        labels = getattr(result, "labels", None)
    if labels is None:
        raise ValueError("strand separability needs labels")
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise ValueError("strand separability needs at least two label classes")
    if F is None:
        raise ValueError("strand separability needs field values")
    emb, s_emb = _standardize_block(E)
    fld, s_fld = _standardize_block(F)
    plain = _loo_1nn_accuracy(emb, labels)
    velocity = _loo_1nn_accuracy(np.hstack([emb, fld]), labels)
    if return_metadata:
        meta = {"standardization": "block-unit-variance", "embedding_scale": s_emb, "field_scale": s_fld}
        return plain, velocity, meta
    return plain, velocity


def default_start(ds: FlowDataset) -> int:
    """Start of the flow: minimal path parameter if known, else the lowest point."""
    if ds.scalar_meta is not None:
        return int(np.argmin(ds.scalar_meta))
    return int(np.argmin(ds.positions[:, 1]))


def diffusion_entropy_comparison(ds: FlowDataset, params: KernelParams, t_list, start: int | None = None) -> dict:
    """Entropy of directed vs symmetric (beta = 0) diffusion from one start point.

    Returns ``{t: (directed_entropy, symmetric_entropy)}``.
    """
    if start is None:
        start = default_start(ds)
    P_dir = row_normalize(build_affinity_matrix(ds, params), positions=ds.positions)
    W = gaussian_affinity(ds.positions, params.sigma)
    P_sym = row_normalize(AffinityMatrix(W, KernelParams(params.sigma, 0.0)), positions=ds.positions)
    out = {}
    for t in t_list:
        out[int(t)] = (shannon_entropy(propagate(P_dir, start, t)),
                       shannon_entropy(propagate(P_sym, start, t)))
    return out


def pca_baseline(ds: FlowDataset | np.ndarray, velocities=None):
    """Project positions onto their top two principal axes; velocities follow linearly.

    Each axis is sign-fixed so its largest-magnitude loading is positive.
    """
    if isinstance(ds, FlowDataset):
        X, V = ds.positions, ds.velocities
    else:
        X, V = np.asarray(ds, dtype=float), None if velocities is None else np.asarray(velocities, dtype=float)
    if X.shape[0] < 3:
        raise ValueError("PCA baseline needs at least 3 points")
    centered = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s.size < 2 or s[1] <= 1e-12 * max(s[0], UNDERFLOW_FLOOR):
        raise ValueError(f"rank-deficient data: second principal value {s[1] if s.size > 1 else 0.0:.3g}")
    axes = vt[:2]
    flip = np.sign(axes[np.arange(2), np.argmax(np.abs(axes), axis=1)])
    axes = axes * flip[:, None]
    emb = centered @ axes.T
    vel = None if V is None else V @ axes.T
    return emb, vel
