"""Joint 2-D embedding of points and their flow.

Positions and velocities are turned into a directed graph with an asymmetric
"flashlight" kernel; diffusion distances on that graph are the geometric
target for a point embedder, and a planar vector field is learned alongside
it so that it follows the embedded flow.
"""

__version__ = "0.1.0"

from .data import (FlowDataset, GeneratorSpec, NoiseSpec, VelocityPoint, add_noise, generate_dataset,
                   load_csv, save_csv, train_test_split)
from .kernel import (AffinityMatrix, FlowNeighborhoods, KernelParams, build_affinity_matrix,
                     flashlight_affinity, flow_neighborhoods, median_heuristic_sigma)
from .pipeline import FlowGraph, GraphConfig, build_graph, embed
from .trainer import EmbeddingResult, TrainerConfig, train

__all__ = [
    "AffinityMatrix", "EmbeddingResult", "FlowDataset", "FlowGraph", "FlowNeighborhoods",
    "GeneratorSpec", "GraphConfig", "KernelParams", "NoiseSpec", "TrainerConfig", "VelocityPoint",
    "add_noise", "build_affinity_matrix", "build_graph", "embed", "flashlight_affinity",
    "flow_neighborhoods", "generate_dataset", "load_csv", "median_heuristic_sigma", "save_csv",
    "train", "train_test_split",
]
