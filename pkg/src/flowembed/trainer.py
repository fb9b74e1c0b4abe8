"""Joint training of the point embedder and the learnable vector field.

The embedder maps ambient positions to the plane and the field maps the plane
to planar velocities.  Each optimisation step works on one pointwise batch: a
centre, its flow neighbours and a few random non-neighbours.  The distance
loss compares embedded distances on the whole batch with diffusion
distances; the flow loss asks the field at the embedded centre to match the
embedded displacements towards the flow neighbours.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import FlowDataset, train_test_split
from .diffusion import graph_laplacian
from .kernel import FlowNeighborhoods, median_heuristic_sigma
from .losses import distance_loss, flow_neighbor_loss, laplacian_smoothness
from .nn import MLP, AdamState, MLPSpec, adam_step, backward, forward, init_mlp

logger = logging.getLogger(__name__)

LOSS_TERMS = ("distance", "flow", "smooth", "total")
_EVAL_SEED_OFFSET = 1_000_003


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainerConfig:
    k: int = 10
    n_random: int = 10
    lr: float = 1e-3
    epochs: int = 100
    weight_flow: float = 1.0
    weight_dist: float = 1.0
    weight_smooth: float = 0.0
    t: int = 1
    m: int = 25
    seed: int = 0
    test_fraction: float = 0.2
    embedder_hidden: tuple = (64, 64, 64)
    field_hidden: tuple = (64, 64, 64)
    leaky_slope: float = 0.01
    early_stopping: bool = False
    patience: int = 10
    min_rel_improvement: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "embedder_hidden", tuple(int(h) for h in self.embedder_hidden))
        object.__setattr__(self, "field_hidden", tuple(int(h) for h in self.field_hidden))
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.n_random < 0:
            raise ValueError(f"n_random must be >= 0, got {self.n_random}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        for name in ("weight_flow", "weight_dist", "weight_smooth"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.t < 1 or self.m < 1:
            raise ValueError("t and m must be positive")
        if not 0 <= self.test_fraction < 1:
            raise ValueError(f"test_fraction must lie in [0, 1), got {self.test_fraction}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["embedder_hidden"] = list(self.embedder_hidden)
        d["field_hidden"] = list(self.field_hidden)
        return d


@dataclass(frozen=True)
class Batch:
    center: int
    neighbor_indices: np.ndarray
    random_indices: np.ndarray

    @property
    def indices(self) -> np.ndarray:
        return np.concatenate([[self.center], self.neighbor_indices, self.random_indices]).astype(int)


@dataclass
class EmbeddingResult:
    embeddings: np.ndarray
    field_at_points: np.ndarray
    loss_curves: dict
    config: dict
    xi: MLP
    psi: MLP
    train_indices: np.ndarray
    test_indices: np.ndarray
    labels: np.ndarray | None = None
    pseudotime: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_points(self):
        return self.embeddings.shape[0]


def make_batches(neighborhoods: FlowNeighborhoods, config: TrainerConfig, epoch_seed,
                 centers=None, pool=None) -> list[Batch]:
    """One batch per centre, in shuffled order.

    ``centers`` defaults to every point.  When ``pool`` is given, neighbours
    and random non-neighbours are restricted to it (used to keep held-out
    points out of training batches).
    """
    if config.k > neighborhoods.k:
        raise ValueError(f"config.k={config.k} exceeds neighbourhood size {neighborhoods.k}")
    n = len(neighborhoods)
    rng = np.random.default_rng(epoch_seed)
    centers = np.arange(n) if centers is None else np.asarray(centers, dtype=int)
    in_pool = np.ones(n, dtype=bool)
    if pool is not None:
        in_pool[:] = False
        in_pool[np.asarray(pool, dtype=int)] = True
    warned = False
    batches = []
    for c in rng.permutation(centers):
        nbrs = neighborhoods[c][: config.k]
        nbrs = nbrs[in_pool[nbrs]]
        allowed = in_pool.copy()
        allowed[c] = False
        allowed[neighborhoods[c][: config.k]] = False
        candidates = np.flatnonzero(allowed)
        n_rand = config.n_random
        if candidates.size < n_rand:
            if not warned:
                logger.warning("only %d non-neighbours available; reducing n_random from %d",
                               candidates.size, n_rand)
                warned = True
            n_rand = candidates.size
        randoms = rng.choice(candidates, size=n_rand, replace=False) if n_rand else np.empty(0, int)
        batches.append(Batch(int(c), nbrs.astype(int), np.asarray(randoms, dtype=int)))
    return batches


def _build_models(dim, config):
    xi = init_mlp(MLPSpec((dim, *config.embedder_hidden, 2), config.leaky_slope, config.seed))
    psi = init_mlp(MLPSpec((2, *config.field_hidden, 2), config.leaky_slope, config.seed + 1))
    return xi, psi


def _batch_losses(batch, E, F, D_manifold):
    idx = batch.indices
    l_dist = distance_loss(E[idx], D_manifold[np.ix_(idx, idx)])[0]
    if batch.neighbor_indices.size:
        l_flow = flow_neighbor_loss(E[batch.center], E[batch.neighbor_indices], F[batch.center])[0]
    else:
        l_flow = 0.0
    return l_dist, l_flow


def evaluate_losses(xi, psi, X, D_manifold, batches, laplacian, subset, config) -> dict:
    """Mean batch losses of the current models over a fixed batch list."""
    E = xi(X)
    F = psi(E)
    dist = np.array([_batch_losses(b, E, F, D_manifold) for b in batches]).reshape(-1, 2)
    l_dist = float(dist[:, 0].mean()) if len(batches) else 0.0
    l_flow = float(dist[:, 1].mean()) if len(batches) else 0.0
    l_smooth = laplacian_smoothness(F[subset], laplacian)[0] if laplacian is not None else 0.0
    total = config.weight_dist * l_dist + config.weight_flow * l_flow + config.weight_smooth * l_smooth
    return {"distance": l_dist, "flow": l_flow, "smooth": float(l_smooth), "total": float(total)}


def _train_step(xi, psi, adam_xi, adam_psi, batch, X, D_manifold, config, smooth_ctx):
    idx = batch.indices
    E, cache_xi = forward(xi, X[idx])
    dE = np.zeros_like(E)
    grads_psi = None
    l_flow, l_smooth = 0.0, 0.0
    l_dist, g = distance_loss(E, D_manifold[np.ix_(idx, idx)])
    if config.weight_dist:
        dE += config.weight_dist * g
    k = batch.neighbor_indices.size
    if k:
        F, cache_psi = forward(psi, E[:1])
        l_flow, g_c, g_nb, g_psi = flow_neighbor_loss(E[0], E[1:1 + k], F[0])
        if config.weight_flow:
            w = config.weight_flow
            grads_psi, g_in = backward(psi, cache_psi, w * g_psi[None, :])
            dE[0] += w * g_c + g_in[0]
            dE[1:1 + k] += w * g_nb
    grads_xi, _ = backward(xi, cache_xi, dE)
    if config.weight_smooth and smooth_ctx is not None:
        subset, laplacian = smooth_ctx
        Es, cache_s = forward(xi, X[subset])
        Fs, cache_f = forward(psi, Es)
        l_smooth, gF = laplacian_smoothness(Fs, laplacian)
        gp, gE = backward(psi, cache_f, config.weight_smooth * gF)
        gx, _ = backward(xi, cache_s, gE)
        grads_xi = [a + b for a, b in zip(grads_xi, gx)]
        grads_psi = gp if grads_psi is None else [a + b for a, b in zip(grads_psi, gp)]
    total = config.weight_dist * l_dist + config.weight_flow * l_flow + config.weight_smooth * l_smooth
    if not np.isfinite(total):
        return total
    adam_step(xi, grads_xi, adam_xi)
    if grads_psi is not None:
        adam_step(psi, grads_psi, adam_psi)
    return total


def train(ds: FlowDataset, A, neighborhoods: FlowNeighborhoods, D_manifold, config: TrainerConfig,
          split=None, laplacian_sigma: float | None = None) -> EmbeddingResult:
    """Train embedder and field jointly; return embeddings, field and loss curves.

    ``split`` overrides the random ``(train, test)`` index split drawn from
    ``config.test_fraction`` and ``config.seed``.  ``A`` is accepted for
    provenance only; the flow structure enters through ``neighborhoods``.
    """
    X = ds.positions
    n = ds.n_points
    D_manifold = np.asarray(D_manifold, dtype=float)
    if D_manifold.shape != (n, n) or len(neighborhoods) != n:
        raise ValueError("dataset, neighbourhoods and D_manifold disagree on N")
    if split is not None:
        train_idx, test_idx = (np.sort(np.asarray(s, dtype=int)) for s in split)
    elif config.test_fraction > 0:
        train_idx, test_idx = train_test_split(ds, config.test_fraction, config.seed)
    else:
        train_idx, test_idx = np.arange(n), np.empty(0, int)
    if train_idx.size == 0:
        raise ValueError("empty training set")

    if laplacian_sigma is None:
        laplacian_sigma = median_heuristic_sigma(ds, min(neighborhoods.k, n - 1))
    lap_train = graph_laplacian(X[train_idx], laplacian_sigma) if train_idx.size >= 2 else None
    lap_test = graph_laplacian(X[test_idx], laplacian_sigma) if test_idx.size >= 2 else None

    xi, psi = _build_models(ds.dim, config)
    adam_xi = AdamState.for_model(xi, lr=config.lr)
    adam_psi = AdamState.for_model(psi, lr=config.lr)

    eval_seed = config.seed + _EVAL_SEED_OFFSET
    eval_train = make_batches(neighborhoods, config, eval_seed, centers=train_idx, pool=train_idx)
    eval_test = make_batches(neighborhoods, config, eval_seed + 1, centers=test_idx) if test_idx.size else []

    def snapshot():
        out = {"train": evaluate_losses(xi, psi, X, D_manifold, eval_train, lap_train, train_idx, config)}
        if test_idx.size:
            out["test"] = evaluate_losses(xi, psi, X, D_manifold, eval_test, lap_test, test_idx, config)
        return out

    curves = {split_name: {term: [] for term in LOSS_TERMS} for split_name in ("train", "test")}
    initial = snapshot()
    smooth_ctx = (train_idx, lap_train) if lap_train is not None else None
    epoch_rng = np.random.default_rng(config.seed)
    stall = 0
    for epoch in range(config.epochs):
        batches = make_batches(neighborhoods, config, int(epoch_rng.integers(2**63)),
                               centers=train_idx, pool=train_idx)
        for b_i, batch in enumerate(batches):
            total = _train_step(xi, psi, adam_xi, adam_psi, batch, X, D_manifold, config, smooth_ctx)
            if not np.isfinite(total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b_i} (centre {batch.center})")
        snap = snapshot()
        for split_name, losses in snap.items():
            for term in LOSS_TERMS:
                curves[split_name][term].append(losses[term])
        if not np.isfinite(snap["train"]["total"]):
            raise TrainingError(f"non-finite evaluation loss after epoch {epoch}")
        if config.early_stopping and epoch > 0:
            prev, cur = curves["train"]["total"][-2], curves["train"]["total"][-1]
            stall = stall + 1 if (prev - cur) < config.min_rel_improvement * abs(prev) else 0
            if stall >= config.patience:
                logger.info("early stopping after epoch %d", epoch)
                break
    if not test_idx.size:
        del curves["test"]
    curves["initial"] = initial

    E = xi(X)
    F = psi(E)
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(F))):
        raise TrainingError("non-finite embedding after training")
    return EmbeddingResult(
        embeddings=E,
        field_at_points=F,
        loss_curves=curves,
        config=config.to_dict(),
        xi=xi,
        psi=psi,
        train_indices=train_idx,
        test_indices=test_idx,
        labels=ds.labels,
        pseudotime=ds.scalar_meta,
        metadata={
            "laplacian_sigma": laplacian_sigma,
            "kernel": None if A is None else asdict(A.params),
        },
    )
