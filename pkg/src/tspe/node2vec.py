"""Node2vec embeddings: second-order biased random walks + skip-gram SGNS.

Transition rule from node ``v`` having arrived from ``t``: candidate
neighbor ``x`` gets unnormalized weight ``1/p`` if ``x == t``, ``1`` if ``x``
is adjacent to ``t`` and ``1/q`` otherwise.  With ``p = q = 1`` this is the
uniform first-order walk.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import SparseGraph
from .numerics.rng import Xoshiro256


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 80
    walks_per_node: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        if self.walk_length < 2:
            raise ValueError("walk_length must be at least 2")
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be at least 1")


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 64
    window: int = 2
    negative_samples: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.negative_samples < 0 or self.epochs < 0:
            raise ValueError("negative_samples and epochs must be non-negative")


@dataclass
class Walks:
    """Walk corpus as one flat index array plus ``offsets`` (CSR-style)."""

    flat: np.ndarray
    offsets: np.ndarray

    def __len__(self):
        return self.offsets.size - 1

    def __getitem__(self, i):
        return self.flat[self.offsets[i]:self.offsets[i + 1]]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_sequences(cls, seqs) -> "Walks":
        seqs = [np.asarray(s, dtype=np.int64) for s in seqs]
        offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([s.size for s in seqs])
        flat = np.concatenate(seqs) if seqs else np.empty(0, dtype=np.int64)
        return cls(flat, offsets)


@dataclass
class NodeEmbeddings:
    matrix: np.ndarray
    losses: list[float] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def generate_walks(graph: SparseGraph, cfg: WalkConfig, backend: str | None = None) -> Walks:
    """``walks_per_node`` rounds, each over a freshly shuffled start order."""
    if graph.num_nodes == 0:
        raise ValueError("graph is empty")
    kern = _kernels.backend_module(backend) if backend else _kernels
    rng = Xoshiro256(cfg.seed)
    flat, offsets = kern.random_walks(
        np.ascontiguousarray(graph.indptr, dtype=np.int64),
        np.ascontiguousarray(graph.indices, dtype=np.int64),
        graph.num_nodes, cfg.walks_per_node, cfg.walk_length,
        float(cfg.p), float(cfg.q), rng.state)
    return Walks(flat, offsets)


def noise_distribution(walks: Walks, num_nodes: int, power: float = 0.75) -> np.ndarray:
    """Cumulative unigram^power distribution over node ids."""
    counts = np.bincount(walks.flat, minlength=num_nodes).astype(np.float64)
    weights = counts ** power
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    return cdf


def train_skipgram(walks: Walks | list, cfg: SkipGramConfig, num_nodes: int,
                   backend: str | None = None, keep_snapshots: bool = False) -> NodeEmbeddings:
    """Skip-gram with negative sampling; learning rate decays linearly.

    Input vectors start uniform in ``[-0.5/dim, 0.5/dim]``, output vectors at
    zero.  Returns the input vectors with the mean loss per epoch.
    """
    if not isinstance(walks, Walks):
        walks = Walks.from_sequences(walks)
    if len(walks) == 0 or walks.flat.size == 0:
        raise ValueError("walk corpus is empty")
    if walks.flat.min() < 0 or walks.flat.max() >= num_nodes:
        raise ValueError("walk contains a node index outside [0, num_nodes)")
    kern = _kernels.backend_module(backend) if backend else _kernels
    rng = Xoshiro256(cfg.seed)
    init = rng.numpy_generator()
    syn0 = (init.random((num_nodes, cfg.dim)) - 0.5) / cfg.dim
    syn1 = np.zeros((num_nodes, cfg.dim))
    cdf = noise_distribution(walks, num_nodes)
    total = max(1, cfg.epochs * walks.flat.size)
    processed = 0
    out = NodeEmbeddings(syn0)
    for _ in range(cfg.epochs):
        loss, pairs, processed = kern.skipgram_epoch(
            walks.flat, walks.offsets, syn0, syn1, cdf, cfg.window,
            cfg.negative_samples, float(cfg.learning_rate), processed, total, rng.state)
        out.losses.append(loss / max(pairs, 1))
        if keep_snapshots:
            out.snapshots.append(syn0.copy())
    return out


def node2vec(graph: SparseGraph, walk_cfg: WalkConfig, sg_cfg: SkipGramConfig,
             backend: str | None = None) -> NodeEmbeddings:
    walks = generate_walks(graph, walk_cfg, backend)
    return train_skipgram(walks, sg_cfg, graph.num_nodes, backend)
