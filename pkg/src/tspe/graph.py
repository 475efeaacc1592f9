"""Graphs, subgraph catalogs and labeled subgraph pairs.

Text formats (UTF-8, tab-separated, ``#`` comments, ``\\n`` or ``\\r\\n``):

* edge list: ``node_a<TAB>node_b``
* catalog:   ``subgraph_id<TAB>node_id``
* pairs:     ``id_a<TAB>id_b<TAB>score``

External ids are kept as strings and mapped to dense indices in order of
first appearance.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .numerics.rng import Xoshiro256

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based (0 when not line-specific)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def _fields(line: str, lineno: int, expected: int) -> list[str]:
    parts = line.split("\t") if "\t" in line else line.split()
    parts = [p.strip() for p in parts]
    if len(parts) != expected or any(not p for p in parts):
        raise ParseError(f"expected {expected} fields, got {len(parts)}", lineno)
    return parts


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Immutable simple undirected graph in CSR form with sorted neighbor lists."""

    node_ids: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray
    self_loops_dropped: int = 0
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        object.__setattr__(self, "_index", {nid: i for i, nid in enumerate(self.node_ids)})

    @classmethod
    def from_edges(cls, node_ids, edges, self_loops_dropped: int = 0) -> "SparseGraph":
        """Build from dense-index pairs; duplicates and orientation are normalized."""
        n = len(node_ids)
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            edges = edges[edges[:, 0] != edges[:, 1]]
        both = np.concatenate([edges, edges[:, ::-1]]) if edges.size else edges
        if both.size:
            both = np.unique(both, axis=0)
        rows = both[:, 0] if both.size else np.empty(0, dtype=np.int64)
        cols = both[:, 1] if both.size else np.empty(0, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(tuple(node_ids), indptr, np.ascontiguousarray(cols, dtype=np.int64),
                   self_loops_dropped)

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    def index_of(self, node_id: str) -> int:
        return self._index[node_id]

    def get_index(self, node_id: str):
        return self._index.get(node_id)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < nb.size and nb[k] == v)

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once, as ``(u, v)`` rows with ``u < v``."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        mask = rows < self.indices
        return np.stack([rows[mask], self.indices[mask]], axis=1)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.num_nodes, self.num_nodes))

    def subgraph(self, keep) -> tuple["SparseGraph", dict[int, int]]:
        """Induced subgraph on ``keep`` (sorted), with the old->new remap."""
        keep = sorted(int(k) for k in keep)
        remap = {old: new for new, old in enumerate(keep)}
        edges = [(remap[u], remap[v]) for u, v in self.edge_array()
                 if u in remap and v in remap]
        ids = [self.node_ids[k] for k in keep]
        return SparseGraph.from_edges(ids, edges), remap

    def __eq__(self, other):
        if not isinstance(other, SparseGraph):
            return NotImplemented
        return (self.node_ids == other.node_ids
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    __hash__ = None


def parse_edge_list(text: str) -> SparseGraph:
    ids: dict[str, int] = {}
    edges = []
    loops = 0
    for lineno, line in _data_lines(text):
        a, b = _fields(line, lineno, 2)
        if a == b:
            # a dropped line introduces no node, so ids stay reproducible
            loops += 1
            continue
        edges.append((ids.setdefault(a, len(ids)), ids.setdefault(b, len(ids))))
    if not ids:
        raise ParseError("edge list is empty")
    if loops:
        log.warning("dropped %d self-loop line(s)", loops)
    return SparseGraph.from_edges(list(ids), edges, self_loops_dropped=loops)


def format_edge_list(graph: SparseGraph) -> str:
    """Serialize so that re-parsing reproduces the dense node order.

    Nodes are introduced in index order, each by an edge to an already seen
    neighbor (or to its successor); remaining edges follow in sorted order.
    Graphs with isolated nodes cannot be represented and raise ValueError.
    """
    if np.any(graph.degrees() == 0):
        raise ValueError("edge lists cannot represent isolated nodes")
    ids = graph.node_ids
    seen = np.zeros(graph.num_nodes, dtype=bool)
    emitted = set()
    lines = []
    for k in range(graph.num_nodes):
        if seen[k]:
            continue
        nb = graph.neighbors(k)
        known = nb[seen[nb]]
        if known.size:
            partner = int(known[0])
            lines.append(f"{ids[partner]}\t{ids[k]}")
        else:
            partner = int(nb[0])
            lines.append(f"{ids[k]}\t{ids[partner]}")
        seen[k] = seen[partner] = True
        emitted.add((min(k, partner), max(k, partner)))
    for u, v in graph.edge_array():
        if (int(u), int(v)) not in emitted:
            lines.append(f"{ids[u]}\t{ids[v]}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SubgraphCatalog:
    """Ordered subgraph id -> member node indices (sorted tuples)."""

    ids: tuple[str, ...]
    members: tuple[tuple[int, ...], ...]
    num_nodes: int
    skipped: int = 0

    def __post_init__(self):
        if len(self.ids) != len(self.members):
            raise ValueError("ids and members differ in length")
        for sid, mem in zip(self.ids, self.members):
            if not mem:
                raise ValueError(f"subgraph {sid!r} has no members")
            if mem[-1] >= self.num_nodes or mem[0] < 0:
                raise ValueError(f"subgraph {sid!r} has a member outside the graph")

    @classmethod
    def from_sets(cls, named_sets, num_nodes: int, skipped: int = 0) -> "SubgraphCatalog":
        ids, members = [], []
        for sid, mem in named_sets:
            ids.append(str(sid))
            members.append(tuple(sorted(set(int(m) for m in mem))))
        return cls(tuple(ids), tuple(members), num_nodes, skipped)

    @property
    def K(self) -> int:
        return len(self.ids)

    def sizes(self) -> list[int]:
        return [len(m) for m in self.members]

    def position(self, subgraph_id: str) -> int:
        try:
            return self.ids.index(subgraph_id)
        except ValueError:
            raise KeyError(subgraph_id) from None

    def members_of(self, subgraph_id: str) -> tuple[int, ...]:
        return self.members[self.position(subgraph_id)]

    def remapped(self, remap: dict[int, int], num_nodes: int) -> "SubgraphCatalog":
        """Catalog restricted to remapped nodes; emptied subgraphs are dropped."""
        sets = []
        for sid, mem in zip(self.ids, self.members):
            kept = [remap[m] for m in mem if m in remap]
            if kept:
                sets.append((sid, kept))
        return SubgraphCatalog.from_sets(sets, num_nodes, self.skipped)


def parse_subgraph_catalog(text: str, graph: SparseGraph) -> SubgraphCatalog:
    order: list[str] = []
    sets: dict[str, set[int]] = {}
    skipped = 0
    for lineno, line in _data_lines(text):
        sid, nid = _fields(line, lineno, 2)
        if sid not in sets:
            order.append(sid)
            sets[sid] = set()
        idx = graph.get_index(nid)
        if idx is None:
            skipped += 1
            continue
        sets[sid].add(idx)
    empty = [sid for sid in order if not sets[sid]]
    if empty:
        raise ParseError(f"subgraph {empty[0]!r} has no members present in the graph")
    if skipped:
        log.info("skipped %d catalog line(s) with unknown node ids", skipped)
    return SubgraphCatalog.from_sets([(sid, sets[sid]) for sid in order],
                                     graph.num_nodes, skipped)


def format_catalog(catalog: SubgraphCatalog, graph: SparseGraph) -> str:
    return "".join(f"{sid}\t{graph.node_ids[m]}\n"
                   for sid, mem in zip(catalog.ids, catalog.members) for m in mem)


class ThresholdMode(enum.Enum):
    """Pair labeling rule: positive iff raw score exceeds the threshold."""

    RR0 = 0.0
    RR1 = 1.0

    @classmethod
    def parse(cls, name) -> "ThresholdMode":
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown threshold mode {name!r} (use rr0 or rr1)") from None

    def label(self, score: float) -> int:
        return int(score > self.value)


@dataclass(frozen=True)
class PairRecord:
    subgraph_a: str
    subgraph_b: str
    raw_score: float
    label: int


@dataclass(frozen=True)
class PairDataset:
    pairs: tuple[PairRecord, ...]
    mode: ThresholdMode

    def __len__(self):
        return len(self.pairs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.label for p in self.pairs], dtype=np.int64)

    @property
    def positive_fraction(self) -> float:
        return float(self.labels.mean()) if self.pairs else 0.0

    def relabel(self, mode: ThresholdMode) -> "PairDataset":
        mode = ThresholdMode.parse(mode)
        return PairDataset(tuple(PairRecord(p.subgraph_a, p.subgraph_b, p.raw_score,
                                            mode.label(p.raw_score)) for p in self.pairs),
                           mode)

    def subset(self, indices) -> "PairDataset":
        return PairDataset(tuple(self.pairs[int(i)] for i in indices), self.mode)


def make_pairs(rows, catalog: SubgraphCatalog, mode) -> PairDataset:
    """Label ``(id_a, id_b, score)`` rows under ``mode`` after validating ids."""
    mode = ThresholdMode.parse(mode)
    known = set(catalog.ids)
    out = []
    for a, b, score in rows:
        for sid in (a, b):
            if sid not in known:
                raise KeyError(f"unknown subgraph id {sid!r}")
        if a == b:
            raise ValueError(f"self-pair {a!r} is not allowed")
        out.append(PairRecord(a, b, float(score), mode.label(float(score))))
    return PairDataset(tuple(out), mode)


def parse_pair_dataset(text: str, catalog: SubgraphCatalog, mode) -> PairDataset:
    rows = []
    for lineno, line in _data_lines(text):
        a, b, raw = _fields(line, lineno, 3)
        try:
            score = float(raw)
        except ValueError:
            raise ParseError(f"unparseable score {raw!r}", lineno) from None
        if not math.isfinite(score):
            raise ParseError(f"non-finite score {raw!r}", lineno)
        try:
            make_pairs([(a, b, score)], catalog, mode)
        except (KeyError, ValueError) as exc:
            raise ParseError(str(exc).strip("\"'"), lineno) from None
        rows.append((a, b, score))
    data = make_pairs(rows, catalog, mode)
    log.info("%d pairs, positive fraction %.4f under %s",
             len(data), data.positive_fraction, data.mode.name)
    return data


def format_pairs(dataset: PairDataset) -> str:
    return "".join(f"{p.subgraph_a}\t{p.subgraph_b}\t{p.raw_score!r}\n" for p in dataset.pairs)


def connected_components(graph: SparseGraph) -> np.ndarray:
    """Component label per node; labels ordered by smallest member index."""
    _, labels = sp.csgraph.connected_components(graph.adjacency(), directed=False)
    # relabel by first occurrence so label 0 holds node 0
    _, first = np.unique(labels, return_index=True)
    rank = np.empty_like(first)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[labels]


def largest_connected_component(graph: SparseGraph) -> tuple[SparseGraph, dict[int, int]]:
    """Induced subgraph on the largest component (ties -> smallest node index)."""
    if graph.num_nodes == 0:
        return graph, {}
    labels = connected_components(graph)
    sizes = np.bincount(labels)
    best = int(np.argmax(sizes))  # labels follow first occurrence, so argmax breaks ties low
    keep = np.flatnonzero(labels == best)
    if keep.size == graph.num_nodes:
        return graph, {i: i for i in range(graph.num_nodes)}
    return graph.subgraph(keep)


@dataclass(frozen=True)
class SyntheticParams:
    num_nodes: int = 500
    num_subgraphs: int = 30
    module_size: int = 15
    overlap_fraction: float = 0.6
    p_in: float = 0.3
    p_bg: float = 0.01
    num_pairs: int = 120
    positive_fraction: float = 0.5
    seed: int = 0


POSITIVE_SCORE = 2.0
NEGATIVE_SCORE = 0.0


def generate_synthetic(params: SyntheticParams | None = None, **overrides):
    """Planted-overlap benchmark: returns ``(graph, catalog, pairs)``.

    Subgraphs are grouped into families.  Each family has a root module of
    ``module_size`` fresh nodes; every other member copies the same
    ``round(f * module_size)`` root nodes and fills up with fresh ones.
    Positive pairs are drawn within families, negatives across families.
    Edges: ``p_in`` inside each module, ``p_bg`` between any two nodes; a node
    left isolated is joined to one random node so the graph survives an edge
    list round trip.  Raw scores are 2.0 (positive) and 0.0 (negative), so
    both threshold modes reproduce the construction labels.
    """
    if params is None:
        params = SyntheticParams()
    if overrides:
        params = SyntheticParams(**{**params.__dict__, **overrides})
    P = params
    if not 0.0 <= P.overlap_fraction <= 1.0:
        raise ValueError("overlap_fraction must lie in [0, 1]")
    if not 0.0 <= P.p_bg <= P.p_in <= 1.0:
        raise ValueError("need 0 <= p_bg <= p_in <= 1")
    if P.module_size < 2:
        raise ValueError("module_size must be at least 2")
    if P.module_size > P.num_nodes:
        raise ValueError("module_size exceeds num_nodes")
    n_pos = int(round(P.num_pairs * P.positive_fraction))
    n_neg = P.num_pairs - n_pos

    core = int(round(P.overlap_fraction * P.module_size))
    family = _family_size(P.num_subgraphs, n_pos)
    n_fam = P.num_subgraphs // family
    fams = [list(range(f * family, (f + 1) * family)) for f in range(n_fam)]
    leftover = list(range(n_fam * family, P.num_subgraphs))
    fams.extend([s] for s in leftover)

    fresh_needed = sum(P.module_size + (len(fm) - 1) * (P.module_size - core) for fm in fams)
    if fresh_needed > P.num_nodes:
        raise ValueError(f"infeasible sizes: modules need {fresh_needed} nodes, "
                         f"graph has {P.num_nodes}")

    rng = Xoshiro256(P.seed)
    pool = rng.permutation(P.num_nodes).tolist()
    modules: list[list[int]] = [None] * P.num_subgraphs
    for fm in fams:
        root = [pool.pop() for _ in range(P.module_size)]
        modules[fm[0]] = root
        shared = root[:core]
        for s in fm[1:]:
            modules[s] = shared + [pool.pop() for _ in range(P.module_size - core)]

    gen = rng.numpy_generator()
    adj = gen.random((P.num_nodes, P.num_nodes)) < P.p_bg
    for mod in modules:
        idx = np.asarray(mod)
        block = gen.random((idx.size, idx.size)) < P.p_in
        adj[np.ix_(idx, idx)] |= block
    adj = np.triu(adj, 1)
    adj = adj | adj.T
    for i in np.flatnonzero(~adj.any(axis=1)):
        j = int(gen.integers(P.num_nodes - 1))
        j += j >= i
        adj[i, j] = adj[j, i] = True
    u, v = np.nonzero(np.triu(adj, 1))
    raw = SparseGraph.from_edges([str(i) for i in range(P.num_nodes)],
                                 zip(u.tolist(), v.tolist()))
    graph = parse_edge_list(format_edge_list(raw))
    remap = [graph.index_of(str(i)) for i in range(P.num_nodes)]

    names = [f"S{j:03d}" for j in range(P.num_subgraphs)]
    catalog = SubgraphCatalog.from_sets(
        [(names[j], [remap[m] for m in modules[j]]) for j in range(P.num_subgraphs)],
        graph.num_nodes)

    family_of = {s: f for f, fm in enumerate(fams) for s in fm}
    pos_pool = [pr for fm in fams for pr in combinations(fm, 2)]
    neg_pool = [(a, b) for a, b in combinations(range(P.num_subgraphs), 2)
                if family_of[a] != family_of[b]]
    if n_pos > len(pos_pool) or n_neg > len(neg_pool):
        raise ValueError("not enough distinct subgraph pairs for the requested counts")
    rng.shuffle(pos_pool)
    rng.shuffle(neg_pool)
    rows = [(names[a], names[b], POSITIVE_SCORE) for a, b in pos_pool[:n_pos]]
    rows += [(names[a], names[b], NEGATIVE_SCORE) for a, b in neg_pool[:n_neg]]
    rng.shuffle(rows)
    pairs = make_pairs(rows, catalog, ThresholdMode.RR0)
    return graph, catalog, pairs


def _family_size(num_subgraphs: int, n_pos: int) -> int:
    """Smallest family size whose within-family pairs cover ``n_pos``."""
    if n_pos == 0:
        return 1
    for g in range(2, num_subgraphs + 1):
        if (num_subgraphs // g) * g * (g - 1) // 2 >= n_pos:
            return g
    raise ValueError("too many positive pairs for the number of subgraphs")
