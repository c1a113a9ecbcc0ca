"""Tree search plus a learned graph-embedding value function for the Euclidean TSP."""

from .embed_net import EmbeddingParams, init_params, load_checkpoint, save_checkpoint
from .instances import PathState, TspInstance, gen_clustered, gen_random, load_instance, parse_tsplib, tour_length
from .mcts import SearchConfig, best_of_starts, search, solve_instance
from .oracles import brute_force_opt, held_karp, nearest_neighbor, optimality_gap, two_opt
from .trainer import TrainConfig, train

__all__ = [
    "EmbeddingParams",
    "PathState",
    "SearchConfig",
    "TrainConfig",
    "TspInstance",
    "best_of_starts",
    "brute_force_opt",
    "gen_clustered",
    "gen_random",
    "held_karp",
    "init_params",
    "load_checkpoint",
    "load_instance",
    "nearest_neighbor",
    "optimality_gap",
    "parse_tsplib",
    "save_checkpoint",
    "search",
    "solve_instance",
    "tour_length",
    "train",
    "two_opt",
]

__version__ = "0.1.0"
