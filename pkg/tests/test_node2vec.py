import os
import subprocess
import sys

import numpy as np
import pytest

from tspe import _kernels
from tspe.graph import SparseGraph
from tspe.node2vec import (SkipGramConfig, WalkConfig, Walks, generate_walks, node2vec,
                           train_skipgram)
from oracles import random_graph

compiled = pytest.mark.skipif(_kernels._ext is None, reason="compiled kernels not built")


def _path(n):
    return SparseGraph.from_edges([str(i) for i in range(n)], [(i, i + 1) for i in range(n - 1)])


def test_walks_follow_edges():
    g = random_graph(np.random.default_rng(0), 30, 0.15)
    walks = generate_walks(g, WalkConfig(walk_length=12, walks_per_node=3, p=0.5, q=2.0))
    assert len(walks) == 90
    starts = sorted(int(w[0]) for w in walks)
    assert starts == sorted(list(range(30)) * 3)
    for w in walks:
        assert 1 <= w.size <= 12
        for a, b in zip(w[:-1], w[1:]):
            assert b in g.neighbors(int(a))
        if w.size < 12:
            assert len(g.neighbors(int(w[-1]))) == 0


def test_isolated_start_gives_length_one_walk():
    g = SparseGraph.from_edges(["a", "b", "c"], [(0, 1)])
    walks = generate_walks(g, WalkConfig(walk_length=5, walks_per_node=1))
    assert sorted(w.size for w in walks) == [1, 5, 5]


def test_return_parameter_biases_backtracking():
    # on a path, tiny p means the walker almost always steps back
    g = _path(40)
    back = generate_walks(g, WalkConfig(p=0.01, q=1.0, walk_length=20, walks_per_node=2))
    away = generate_walks(g, WalkConfig(p=100.0, q=1.0, walk_length=20, walks_per_node=2))

    def backtrack_rate(walks):
        hits = total = 0
        for w in walks:
            for a, c in zip(w[:-2], w[2:]):
                hits += a == c
                total += 1
        return hits / total

    assert backtrack_rate(back) > 0.9 > 0.2 > backtrack_rate(away)


def test_walks_deterministic_per_seed():
    g = random_graph(np.random.default_rng(1), 25, 0.2)
    cfg = WalkConfig(walk_length=10, walks_per_node=2, seed=4)
    a, b = generate_walks(g, cfg), generate_walks(g, cfg)
    assert np.array_equal(a.flat, b.flat) and np.array_equal(a.offsets, b.offsets)
    c = generate_walks(g, WalkConfig(walk_length=10, walks_per_node=2, seed=5))
    assert not np.array_equal(a.flat, c.flat)


@compiled
@pytest.mark.parametrize("p,q", [(1.0, 1.0), (0.25, 4.0)])
def test_backends_produce_identical_walks(p, q):
    g = random_graph(np.random.default_rng(2), 40, 0.1)
    cfg = WalkConfig(p=p, q=q, walk_length=15, walks_per_node=2, seed=11)
    a = generate_walks(g, cfg, backend="compiled")
    b = generate_walks(g, cfg, backend="python")
    assert np.array_equal(a.flat, b.flat) and np.array_equal(a.offsets, b.offsets)


@compiled
def test_backends_agree_on_embeddings():
    g = random_graph(np.random.default_rng(3), 30, 0.15, allow_isolated=False)
    walks = generate_walks(g, WalkConfig(walk_length=10, walks_per_node=2))
    cfg = SkipGramConfig(dim=8, epochs=2, seed=1)
    a = train_skipgram(walks, cfg, g.num_nodes, backend="compiled")
    b = train_skipgram(walks, cfg, g.num_nodes, backend="python")
    assert np.allclose(a.matrix, b.matrix, atol=1e-9)
    assert np.allclose(a.losses, b.losses, atol=1e-9)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _kernels.backend_module("gpu")


def test_env_var_forces_python_backend():
    code = "from tspe import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, TSPE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "python"


def test_skipgram_loss_decreases_and_neighbors_cluster():
    # two cliques joined by one bridge
    edges = [(i, j) for i in range(8) for j in range(i + 1, 8)]
    edges += [(i, j) for i in range(8, 16) for j in range(i + 1, 16)] + [(7, 8)]
    g = SparseGraph.from_edges([str(i) for i in range(16)], edges)
    emb = node2vec(g, WalkConfig(walk_length=20, walks_per_node=10, seed=2),
                   SkipGramConfig(dim=16, epochs=5, seed=2))
    assert emb.dim == 16 and len(emb.losses) == 5
    assert emb.losses[-1] < emb.losses[0]
    m = emb.matrix / np.linalg.norm(emb.matrix, axis=1, keepdims=True)
    sim = m @ m.T
    within = (sim[:7, :7].sum() - 7) / 42
    across = sim[:7, 9:].mean()
    assert within > across


def test_skipgram_validates_input():
    with pytest.raises(ValueError):
        train_skipgram(Walks.from_sequences([]), SkipGramConfig(dim=4), 3)
    with pytest.raises(ValueError):
        train_skipgram([[0, 5]], SkipGramConfig(dim=4), 3)
    with pytest.raises(ValueError):
        WalkConfig(p=0)
    with pytest.raises(ValueError):
        generate_walks(SparseGraph.from_edges([], []), WalkConfig())
