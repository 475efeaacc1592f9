"""Subgraph-pair classification with a transformer over positional encodings."""
from .config import RunConfig
from .encoding import EncodingBundle, PeMode, build_encodings
from .graph import (PairDataset, SparseGraph, SubgraphCatalog, ThresholdMode,
                    generate_synthetic, parse_edge_list, parse_pair_dataset,
                    parse_subgraph_catalog)
from .model import ModelConfig, TransformerModel
from .node2vec import SkipGramConfig, WalkConfig, node2vec
from .training import TrainConfig, cross_validate, predict, train

__version__ = "0.1.0"

__all__ = [
    "EncodingBundle", "ModelConfig", "PairDataset", "PeMode", "RunConfig", "SkipGramConfig",
    "SparseGraph", "SubgraphCatalog", "ThresholdMode", "TrainConfig", "TransformerModel",
    "WalkConfig", "build_encodings", "cross_validate", "generate_synthetic", "node2vec",
    "parse_edge_list", "parse_pair_dataset", "parse_subgraph_catalog", "predict", "train",
]
