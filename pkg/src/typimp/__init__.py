"""Bayesian discovery of typological implications between language features.

Modules
-------
dataset     raw tables, feature merges and one-vs-rest binarization
trees       phylogenetic and areal language trees
flat        per-pair model with one global implication bit
hier        per-pair model with implication strengths on a tree
search      candidate enumeration, filtering, scoring and ranking
evaluation  hide-and-recover accuracy curves, Kendall tau, tree profiles
synthgen    synthetic datasets with known ground truth
cli         command-line driver
"""

from .dataset import BinaryFeature, FeatureMatrix, Language, PairCase, case_view, pair_view, parse_dataset
from .errors import ConfigError, NumericError, ParseError, TypimpError, ValidationError
from .flat import ChainSummary, FlatHyper, run_flat, solve_noise_prior
from .hier import HierHyper, run_hier
from .search import FilterSpec, enumerate_pairs, enumerate_triples, rank, score_candidates
from .trees import ClusterSpec, LanguageTree, build_areal_tree, build_phylo_tree

__version__ = "0.1.0"

__all__ = [
    "BinaryFeature", "ChainSummary", "ClusterSpec", "ConfigError", "FeatureMatrix", "FilterSpec",
    "FlatHyper", "HierHyper", "Language", "LanguageTree", "NumericError", "PairCase", "ParseError",
    "TypimpError", "ValidationError", "build_areal_tree", "build_phylo_tree", "case_view",
    "enumerate_pairs", "enumerate_triples", "pair_view", "parse_dataset", "rank", "run_flat", "run_hier",
    "score_candidates", "solve_noise_prior",
]
