import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tspe.encoding import (EncodingBundle, GeeVariant, PeMode, build_encodings,
                           build_weight_matrix, gee_embed, gpe, lpe, spe_compose)
from tspe.graph import SparseGraph, SubgraphCatalog
from tspe.numerics.linalg import DegenerateInputError
from oracles import (dense_adjacency, dense_weight_matrix, exact_column_sum, random_catalog,
                     random_graph, triple_loop_matmul)


def _cycle(n):
    return SparseGraph.from_edges([str(i) for i in range(n)],
                                  [(i, (i + 1) % n) for i in range(n)])


def test_cycle_spectrum():
    got = lpe(_cycle(4), 2)
    assert np.allclose(got.eigenvalues, [1.0, 1.0])


def test_lpe_rejects_k_beyond_nonzero_spectrum():
    with pytest.raises(ValueError):
        lpe(_cycle(4), 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 25), st.integers(1, 6))
def test_weight_matrix_and_gee_match_oracles(seed, n, k):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.3)
    cat = random_catalog(rng, n, k)
    w = build_weight_matrix(cat, n)
    assert np.array_equal(w, dense_weight_matrix(cat))
    for j in range(k):
        assert abs(exact_column_sum(w[:, j]) - 1) <= 2.0 ** -53 * len(cat.members[j])
    z = gee_embed(g, w)
    assert np.allclose(z, triple_loop_matmul(dense_adjacency(g), w), atol=1e-12)


def test_gee_variants():
    g = _cycle(5)
    cat = SubgraphCatalog.from_sets([("a", [0, 1]), ("b", [2])], 5)
    w = build_weight_matrix(cat, 5)
    a = dense_adjacency(g)
    assert np.allclose(gee_embed(g, w, GeeVariant.AUGMENTED), (a + np.eye(5)) @ w)
    assert np.allclose(gee_embed(g, w, "laplacian"), a / 2 @ w)
    with pytest.raises(ValueError):
        gee_embed(g, w[:3])
    with pytest.raises(ValueError):
        build_weight_matrix(cat, 6)


def test_gpe_is_orthonormal_and_degenerate_input_rejected():
    z = np.random.default_rng(0).normal(size=(12, 4))
    out = gpe(z, 3)
    assert out.d == 3
    assert np.allclose(out.vectors.T @ out.vectors, np.eye(3))
    assert np.all(np.diff(out.singular_values) <= 0)
    scaled = gpe(z, 3, scale_by_sigma=True)
    assert np.allclose(scaled.vectors, out.vectors * out.singular_values)
    with pytest.raises(DegenerateInputError):
        gpe(np.zeros((4, 2)), 1)


def test_spe_compose_layout():
    m = np.ones((3, 2))
    lp = np.full((3, 2), 0.5)
    gp = np.arange(3.0)[:, None]
    e = spe_compose(m, lp, gp)
    assert e.shape == (3, 3)
    assert np.array_equal(e[:, :2], m + lp) and np.array_equal(e[:, 2], gp[:, 0])
    assert np.array_equal(spe_compose(m, None, None), m)
    with pytest.raises(ValueError):
        spe_compose(m, np.ones((3, 3)), None)


def test_bundle_modes_and_widths():
    g = _cycle(8)
    cat = SubgraphCatalog.from_sets([("a", [0, 1, 2]), ("b", [3, 4]), ("c", [5])], 8)
    m = np.random.default_rng(1).normal(size=(8, 3))
    spe = build_encodings(g, cat, m, k=3, d=2)
    assert spe.width == 5
    assert spe.with_mode("lpe").width == 3
    assert np.array_equal(spe.with_mode(PeMode.NOPE).compose(), m)
    flipped = spe.with_mode("lpe").compose(lpe_signs=-np.ones(3))
    assert np.allclose(flipped, m - spe.lpe.vectors)
    nope = build_encodings(g, cat, m, k=3, d=2, mode="nope")
    assert nope.lpe is None and nope.gpe is None
    with pytest.raises(ValueError):
        EncodingBundle(m, None, None, PeMode.SPE).compose()
