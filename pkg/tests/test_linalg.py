import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tspe.encoding import lpe, nontrivial_component_count, normalized_laplacian
from tspe.numerics.linalg import (SymmetricOperator, canonicalize_signs, eigs_lanczos,
                                  sym_eigs_smallest, thin_svd)
from oracles import dense_laplacian, random_graph


def test_canonical_signs_make_peak_positive():
    v = np.array([[0.1, -3.0], [-2.0, 1.0], [0.5, 0.2]])
    out = canonicalize_signs(v)
    assert out[1, 0] == 2.0 and out[0, 1] == 3.0


def test_canonical_sign_tie_goes_to_lowest_index():
    v = np.array([[-0.5], [0.5], [0.1]])
    assert canonicalize_signs(v)[0, 0] == 0.5
    assert np.array_equal(canonicalize_signs(np.zeros((3, 2))), np.zeros((3, 2)))


def test_canonical_signs_are_idempotent():
    v = np.random.default_rng(0).normal(size=(10, 4))
    once = canonicalize_signs(v)
    assert np.array_equal(canonicalize_signs(once), once)
    assert np.array_equal(canonicalize_signs(-v), once)


def test_eigs_validate_arguments():
    op = SymmetricOperator.from_dense(np.eye(3))
    for kwargs in ({"k": 0}, {"k": 4}, {"k": 1, "tol": 0}, {"k": 1, "method": "qr"}):
        with pytest.raises(ValueError):
            sym_eigs_smallest(op, **kwargs)
    with pytest.raises(ValueError):
        SymmetricOperator.from_dense(np.ones((2, 3)))


def test_dense_rejects_too_few_nonzero_eigenvalues():
    op = SymmetricOperator.from_dense(np.diag([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError, match="zero threshold"):
        sym_eigs_smallest(op, 2, method="dense")


def test_lanczos_recovers_repeated_eigenvalues():
    vals = np.array([0.0, 0.5, 0.5, 0.5, 1.0, 1.2, 1.5, 1.9] + [1.95] * 40)
    q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(48, 48)))
    op = SymmetricOperator.from_dense(q @ np.diag(vals) @ q.T)
    got, vecs = eigs_lanczos(op, 4, tol=1e-9)
    assert np.allclose(got, [0.5, 0.5, 0.5, 1.0], atol=1e-9)
    assert np.allclose(vecs.T @ vecs, np.eye(4), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(12, 40), st.floats(0.08, 0.4))
def test_lanczos_matches_dense(seed, n, p):
    g = random_graph(np.random.default_rng(seed), n, p)
    k = 3
    ref = np.linalg.eigvalsh(dense_laplacian(g))
    zeros = nontrivial_component_count(g)
    if n - zeros < k:
        return
    op = normalized_laplacian(g)
    dv, dvec = sym_eigs_smallest(op, k, method="dense")
    lv, lvec = sym_eigs_smallest(op, k, method="lanczos", seed=seed)
    assert np.allclose(dv, ref[zeros:zeros + k], atol=1e-8)
    assert np.allclose(lv, dv, atol=1e-7)
    for vals, vecs in ((dv, dvec), (lv, lvec)):
        assert np.linalg.norm(op @ vecs - vecs * vals, axis=0).max() <= 1e-6
        assert np.allclose(vecs.T @ vecs, np.eye(k), atol=1e-7)
        peak = np.argmax(np.abs(vecs) >= np.abs(vecs).max(axis=0) * (1 - 1e-8), axis=0)
        assert np.all(vecs[peak, range(k)] > 0)


def test_lpe_isolated_nodes_are_unit_modes():
    g = random_graph(np.random.default_rng(2), 10, 0.0)
    got = lpe(g, 3)
    assert np.allclose(got.eigenvalues, 1.0)


def test_thin_svd_reconstructs_rank_d():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(20, 3)) @ rng.normal(size=(3, 7))
    u, s, v = thin_svd(z, 3)
    assert np.allclose(u * s @ v.T, z, atol=1e-10)
    assert np.allclose(u.T @ u, np.eye(3), atol=1e-12)
    assert np.array_equal(canonicalize_signs(u), u)
    with pytest.raises(ValueError):
        thin_svd(z, 8)
