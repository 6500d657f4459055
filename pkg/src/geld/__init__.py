"""GELD: a global-view-encoder / local-view-decoder neural TSP solver with
linear-complexity region-proxy attention, plus classical baselines,
two-stage training, and benchmark tooling."""

from .decoder import DecoderStep, build_decoder_input, decoder_layer, next_node_distribution
from .encoder import NodeEmbeddings, embed_nodes, encode, rala_attention
from .generate import generate_instances
from .heuristics import brute_force_optimal, nearest_neighbor, random_insertion, two_opt
from .inference import RcPlan, augment8, beam_search, greedy_rollout, prc, rc_step
from .model import ModelConfig, ModelParams, desk_model_config
from .checkpoint import load_checkpoint, save_checkpoint
from .report import RunReport
from .training import TrainConfig, curriculum_scale, desk_train_config, sample_partial_solution
from .tsp import (
    RegionAssignment,
    Tour,
    TspInstance,
    assign_regions,
    distance_matrix,
    gap,
    k_nearest_available,
    normalize_coords,
    tour_length,
)
from .tsplib import format_tsplib, load_tsplib, parse_tsplib

__version__ = "0.1.0"

__all__ = [
    "DecoderStep",
    "ModelConfig",
    "ModelParams",
    "NodeEmbeddings",
    "RcPlan",
    "RegionAssignment",
    "RunReport",
    "Tour",
    "TrainConfig",
    "TspInstance",
    "assign_regions",
    "augment8",
    "beam_search",
    "brute_force_optimal",
    "build_decoder_input",
    "curriculum_scale",
    "decoder_layer",
    "desk_model_config",
    "desk_train_config",
    "distance_matrix",
    "embed_nodes",
    "encode",
    "format_tsplib",
    "gap",
    "generate_instances",
    "greedy_rollout",
    "k_nearest_available",
    "load_checkpoint",
    "load_tsplib",
    "nearest_neighbor",
    "next_node_distribution",
    "normalize_coords",
    "parse_tsplib",
    "prc",
    "random_insertion",
    "rala_attention",
    "rc_step",
    "sample_partial_solution",
    "save_checkpoint",
    "tour_length",
    "two_opt",
]
