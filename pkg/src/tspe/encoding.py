"""Node positional encodings and the composed transformer input.

* LPE: eigenvectors of the normalized Laplacian for its k smallest nonzero
  eigenvalues.
* GEE: ``Z = A @ W`` where ``W[i, j] = 1/n_j`` for members of subgraph j.
* GPE: the d leading left singular vectors of Z.
* SPE input: ``E = [M + LPE, GPE]``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import SparseGraph, SubgraphCatalog, connected_components
from .numerics.linalg import DegenerateInputError, SymmetricOperator, sym_eigs_smallest, thin_svd


def _inv_sqrt_degree(graph: SparseGraph) -> np.ndarray:
    deg = graph.degrees().astype(np.float64)
    out = np.zeros_like(deg)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def normalized_laplacian(graph: SparseGraph) -> SymmetricOperator:
    """``x -> x - D^-1/2 A D^-1/2 x``, taking ``D^-1/2 = 0`` on isolated nodes."""
    adj = graph.adjacency()
    dinv = _inv_sqrt_degree(graph)

    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        scale = dinv if x.ndim == 1 else dinv[:, None]
        return x - scale * (adj @ (scale * x))

    def dense():
        a = adj.toarray()
        return np.eye(graph.num_nodes) - dinv[:, None] * a * dinv[None, :]

    return SymmetricOperator(graph.num_nodes, apply, dense)


def nontrivial_component_count(graph: SparseGraph) -> int:
    """Components with at least one edge; each contributes one zero eigenvalue.

    Isolated nodes are eigenvalue-1 modes under the zero-degree convention.
    """
    labels = connected_components(graph)
    sizes = np.bincount(labels)
    return int(np.sum(sizes > 1))


@dataclass(frozen=True)
class LpeMatrix:
    vectors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.vectors.shape[1]


def lpe(graph: SparseGraph, k: int, tol: float = 1e-8, seed: int = 0,
        zero_threshold: float = 1e-8, method: str = "auto") -> LpeMatrix:
    limit = graph.num_nodes - nontrivial_component_count(graph)
    if k > limit:
        raise ValueError(f"k={k} exceeds the {limit} nonzero Laplacian eigenvalues available")
    vals, vecs = sym_eigs_smallest(normalized_laplacian(graph), k, tol=tol,
                                   zero_threshold=zero_threshold, seed=seed, method=method)
    return LpeMatrix(vecs, vals)


class GeeVariant(enum.Enum):
    ADJACENCY = "adjacency"
    AUGMENTED = "augmented"       # A + I
    LAPLACIAN = "laplacian"       # D^-1/2 A D^-1/2


def build_weight_matrix(catalog: SubgraphCatalog, num_nodes: int) -> np.ndarray:
    if catalog.num_nodes != num_nodes:
        raise ValueError(f"catalog is bound to {catalog.num_nodes} nodes, not {num_nodes}")
    w = np.zeros((num_nodes, catalog.K))
    for j, mem in enumerate(catalog.members):
        w[list(mem), j] = 1.0 / len(mem)
    return w


def gee_embed(graph: SparseGraph, w_gee: np.ndarray,
              variant: GeeVariant | str = GeeVariant.ADJACENCY) -> np.ndarray:
    """Label-aware node embedding ``Z = A @ W`` (or one of the GEE variants)."""
    w_gee = np.asarray(w_gee, dtype=np.float64)
    if w_gee.ndim != 2 or w_gee.shape[0] != graph.num_nodes:
        raise ValueError(f"weight matrix has {w_gee.shape[0] if w_gee.ndim else 0} rows, "
                         f"graph has {graph.num_nodes} nodes")
    variant = GeeVariant(variant)
    adj = graph.adjacency()
    if variant is GeeVariant.AUGMENTED:
        adj = adj + sp.identity(graph.num_nodes, format="csr")
    elif variant is GeeVariant.LAPLACIAN:
        dinv = sp.diags(_inv_sqrt_degree(graph))
        adj = dinv @ adj @ dinv
    return np.asarray(adj @ w_gee)


@dataclass(frozen=True)
class GpeMatrix:
    vectors: np.ndarray
    singular_values: np.ndarray

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def gpe(z: np.ndarray, d: int, scale_by_sigma: bool = False) -> GpeMatrix:
    z = np.asarray(z, dtype=np.float64)
    if not np.any(z):
        raise DegenerateInputError("GEE matrix is all zeros; no singular vectors to select")
    u, sigma, _ = thin_svd(z, d)
    if scale_by_sigma:
        u = u * sigma
    return GpeMatrix(u, sigma)


class PeMode(enum.Enum):
    NOPE = "nope"
    LPE = "lpe"
    SPE = "spe"


def spe_compose(m: np.ndarray, lpe_vectors: np.ndarray | None,
                gpe_vectors: np.ndarray | None) -> np.ndarray:
    """``E = [M + LPE, GPE]``; either encoding may be omitted (``None``)."""
    m = np.asarray(m, dtype=np.float64)
    head = m
    if lpe_vectors is not None:
        lpe_vectors = np.asarray(lpe_vectors)
        if lpe_vectors.shape != m.shape:
            raise ValueError(f"LPE shape {lpe_vectors.shape} must equal embedding shape "
                             f"{m.shape}: the two are summed elementwise")
        head = m + lpe_vectors
    if gpe_vectors is None:
        return head
    gpe_vectors = np.asarray(gpe_vectors)
    if gpe_vectors.shape[0] != m.shape[0]:
        raise ValueError("GPE and embedding matrices differ in row count")
    return np.hstack([head, gpe_vectors])


@dataclass
class EncodingBundle:
    """Per-node matrices feeding the transformer, kept separately so the
    input can be recomposed (ablations, LPE sign flips)."""

    m: np.ndarray
    lpe: LpeMatrix | None
    gpe: GpeMatrix | None
    mode: PeMode = PeMode.SPE

    def compose(self, lpe_signs: np.ndarray | None = None) -> np.ndarray:
        use_lpe = self.mode in (PeMode.LPE, PeMode.SPE) and self.lpe is not None
        use_gpe = self.mode is PeMode.SPE and self.gpe is not None
        if self.mode is not PeMode.NOPE and not use_lpe:
            raise ValueError(f"mode {self.mode.value} needs an LPE matrix")
        if self.mode is PeMode.SPE and not use_gpe:
            raise ValueError("mode spe needs a GPE matrix")
        lpe_vec = None
        if use_lpe:
            lpe_vec = self.lpe.vectors if lpe_signs is None else self.lpe.vectors * lpe_signs
        return spe_compose(self.m, lpe_vec, self.gpe.vectors if use_gpe else None)

    @property
    def width(self) -> int:
        return self.compose().shape[1]

    def with_mode(self, mode) -> "EncodingBundle":
        return EncodingBundle(self.m, self.lpe, self.gpe, PeMode(mode))


def build_encodings(graph: SparseGraph, catalog: SubgraphCatalog, m: np.ndarray,
                    k: int, d: int, mode=PeMode.SPE, tol: float = 1e-8, seed: int = 0,
                    gee_variant=GeeVariant.ADJACENCY, scale_by_sigma: bool = False,
                    eig_method: str = "auto", zero_threshold: float = 1e-8) -> EncodingBundle:
    mode = PeMode(mode)
    lpe_m = None
    if mode is not PeMode.NOPE:
        lpe_m = lpe(graph, k, tol=tol, seed=seed, zero_threshold=zero_threshold,
                    method=eig_method)
    gpe_m = None
    if mode is PeMode.SPE:
        z = gee_embed(graph, build_weight_matrix(catalog, graph.num_nodes), gee_variant)
        gpe_m = gpe(z, d, scale_by_sigma)
    return EncodingBundle(np.asarray(m, dtype=np.float64), lpe_m, gpe_m, mode)
