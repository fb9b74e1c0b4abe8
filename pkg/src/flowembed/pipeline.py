"""Graph construction and the end-to-end embedding pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import FlowDataset
from .diffusion import (DiffusionMapResult, DiffusionOperator, diffusion_distance_matrix,
                        diffusion_map, row_normalize, symmetrize)
from .kernel import (AffinityMatrix, FlowNeighborhoods, KernelParams, build_affinity_matrix,
                     flow_neighborhoods, median_heuristic_sigma)
from .trainer import EmbeddingResult, TrainerConfig, train


@dataclass(frozen=True)
class GraphConfig:
    beta: float = 1.0
    sigma: float | None = None  # None: median heuristic
    k: int = 10
    sigma_k: int = 10
    m: int = 25
    t: int = 1

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if self.k < 1 or self.sigma_k < 1 or self.m < 1 or self.t < 1:
            raise ValueError("k, sigma_k, m and t must be positive")


@dataclass
class FlowGraph:
    params: KernelParams
    affinity: AffinityMatrix
    neighborhoods: FlowNeighborhoods
    P_d: DiffusionOperator
    P_sd: DiffusionOperator
    dmap: DiffusionMapResult
    D_manifold: np.ndarray

    def summary(self) -> dict:
        return {
            "kernel": asdict(self.params),
            "k": self.neighborhoods.k,
            "m": int(self.dmap.eigenvalues.size),
            "t": self.dmap.t,
            "eigenvalues": [float(v) for v in self.dmap.eigenvalues],
        }


def kernel_params(ds: FlowDataset, cfg: GraphConfig) -> KernelParams:
    sigma = cfg.sigma
    if sigma is None:
        sigma = median_heuristic_sigma(ds, min(cfg.sigma_k, ds.n_points - 1))
    return KernelParams(sigma=sigma, beta=cfg.beta)


def build_graph(ds: FlowDataset, cfg: GraphConfig = GraphConfig()) -> FlowGraph:
    params = kernel_params(ds, cfg)
    A = build_affinity_matrix(ds, params)
    nbhd = flow_neighborhoods(A, min(cfg.k, ds.n_points - 1))
    P_d = row_normalize(A, positions=ds.positions)
    P_sd = symmetrize(P_d)
    dmap = diffusion_map(P_sd, m=min(cfg.m, ds.n_points), t=cfg.t)
    return FlowGraph(params, A, nbhd, P_d, P_sd, dmap, diffusion_distance_matrix(dmap.coords))


def embed(ds: FlowDataset, config: TrainerConfig = TrainerConfig(), graph_cfg: GraphConfig | None = None,
          split=None) -> tuple[EmbeddingResult, FlowGraph]:
    """Build the flow graph for ``ds`` and train embedder and field on it."""
    if graph_cfg is None:
        graph_cfg = GraphConfig(k=config.k, m=config.m, t=config.t)
    graph = build_graph(ds, graph_cfg)
    result = train(ds, graph.affinity, graph.neighborhoods, graph.D_manifold, config, split=split,
                   laplacian_sigma=graph.params.sigma)
    result.metadata["graph"] = graph.summary()
    return result, graph
