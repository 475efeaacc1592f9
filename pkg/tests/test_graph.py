import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tspe.graph import (NEGATIVE_SCORE, POSITIVE_SCORE, ParseError, SparseGraph,
                        SubgraphCatalog, SyntheticParams, ThresholdMode, connected_components,
                        format_catalog, format_edge_list, format_pairs, generate_synthetic,
                        largest_connected_component, make_pairs, parse_edge_list,
                        parse_pair_dataset, parse_subgraph_catalog)


def test_parse_simple_path():
    g = parse_edge_list("1\t2\n2\t3\n")
    assert (g.num_nodes, g.num_edges) == (3, 2)
    assert g.node_ids == ("1", "2", "3")


def test_parse_dedups_reverse_edges():
    g = parse_edge_list("1\t2\n2\t1\n")
    assert (g.num_nodes, g.num_edges) == (2, 1)


def test_parse_drops_self_loops():
    g = parse_edge_list("1\t1\n1\t2\n")
    assert (g.num_nodes, g.num_edges, g.self_loops_dropped) == (2, 1, 1)


def test_parse_accepts_crlf_and_comments():
    g = parse_edge_list("# header\r\na\tb\r\n\r\nb\tc\r\n")
    assert g.num_edges == 2


@pytest.mark.parametrize("text,line", [("1\t2\n3\n", 2), ("1\t2\t3\n", 1)])
def test_parse_reports_malformed_line(text, line):
    with pytest.raises(ParseError) as err:
        parse_edge_list(text)
    assert err.value.line == line


def test_parse_rejects_empty_input():
    with pytest.raises(ParseError):
        parse_edge_list("# nothing here\n")


edge_lists = st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)), min_size=1,
                      max_size=60).filter(lambda es: any(u != v for u, v in es))


@given(edge_lists)
def test_round_trip_and_symmetry(edges):
    text = "".join(f"v{u}\tv{v}\n" for u, v in edges)
    g = parse_edge_list(text)
    a = g.adjacency().toarray()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert np.all(g.degrees() >= 0)
    for i, nid in enumerate(g.node_ids):
        assert g.index_of(nid) == i
    assert parse_edge_list(format_edge_list(g)) == g


def test_catalog_example():
    g = parse_edge_list("1\t2\n2\t3\n")
    cat = parse_subgraph_catalog("d1\t1\nd1\t2\nd2\t3\n", g)
    assert cat.K == 2 and cat.sizes() == [2, 1]


def test_catalog_skips_unknown_ids_and_dedups():
    g = parse_edge_list("1\t2\n2\t3\n")
    cat = parse_subgraph_catalog("d1\t1\nd1\t1\nd3\t999\nd3\t3\n", g)
    assert cat.skipped == 1
    assert cat.members_of("d1") == (0,)
    assert cat.ids == ("d1", "d3")


def test_catalog_rejects_subgraph_without_known_members():
    g = parse_edge_list("1\t2\n")
    with pytest.raises(ParseError):
        parse_subgraph_catalog("d1\t1\nd2\t999\n", g)


def test_catalog_round_trip():
    g = parse_edge_list("1\t2\n2\t3\n3\t4\n")
    cat = parse_subgraph_catalog("x\t4\nx\t1\ny\t2\n", g)
    assert parse_subgraph_catalog(format_catalog(cat, g), g) == cat


def _two_subgraphs():
    g = parse_edge_list("1\t2\n2\t3\n")
    return parse_subgraph_catalog("d1\t1\nd2\t3\nd3\t2\n", g)


def test_pair_threshold_modes():
    cat = _two_subgraphs()
    rr0 = parse_pair_dataset("d1\td2\t1.0\nd1\td3\t0.0\n", cat, ThresholdMode.RR0)
    rr1 = parse_pair_dataset("d1\td2\t1.0\nd1\td3\t0.0\n", cat, "rr1")
    assert rr0.labels.tolist() == [1, 0]
    assert rr1.labels.tolist() == [0, 0]


def test_pair_errors_carry_line_numbers():
    cat = _two_subgraphs()
    with pytest.raises(ParseError) as err:
        parse_pair_dataset("d1\td2\t1\nd1\tzz\t2\n", cat, "rr0")
    assert err.value.line == 2 and "zz" in str(err.value)
    with pytest.raises(ParseError) as err:
        parse_pair_dataset("d1\td2\tabc\n", cat, "rr0")
    assert err.value.line == 1
    with pytest.raises(ParseError):
        parse_pair_dataset("d1\td1\t3\n", cat, "rr0")


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=20),
       st.sampled_from(list(ThresholdMode)))
def test_relabel_is_idempotent(scores, mode):
    cat = _two_subgraphs()
    data = make_pairs([("d1", "d2", s) for s in scores], cat, ThresholdMode.RR0)
    once = data.relabel(mode)
    assert once.relabel(mode) == once
    assert once.labels.tolist() == [int(s > mode.value) for s in scores]


def test_pairs_round_trip():
    cat = _two_subgraphs()
    data = parse_pair_dataset("d1\td2\t0.1\nd3\td2\t-2.5\n", cat, "rr0")
    assert parse_pair_dataset(format_pairs(data), cat, "rr0") == data


def _graph(n, edges):
    return SparseGraph.from_edges([str(i) for i in range(n)], edges)


def test_lcc_picks_the_four_cycle():
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (6, 7), (7, 8), (8, 9), (9, 6)]
    lcc, remap = largest_connected_component(_graph(10, edges))
    assert lcc.num_nodes == 4 and sorted(remap) == [6, 7, 8, 9]
    assert sorted(remap.values()) == [0, 1, 2, 3]


def test_lcc_identity_and_tie_break():
    g = _graph(3, [(0, 1), (1, 2)])
    lcc, remap = largest_connected_component(g)
    assert lcc == g and remap == {0: 0, 1: 1, 2: 2}
    tied = _graph(4, [(2, 3), (0, 1)])
    _, remap = largest_connected_component(tied)
    assert sorted(remap) == [0, 1]


def test_lcc_of_empty_graph():
    empty = SparseGraph.from_edges([], [])
    assert largest_connected_component(empty) == (empty, {})


@settings(max_examples=50)
@given(st.integers(1, 25), st.lists(st.tuples(st.integers(0, 24), st.integers(0, 24)),
                                    max_size=40))
def test_lcc_idempotent(n, raw):
    edges = [(u % n, v % n) for u, v in raw if u % n != v % n]
    once, _ = largest_connected_component(_graph(n, edges))
    twice, remap = largest_connected_component(once)
    assert twice == once and remap == {i: i for i in range(once.num_nodes)}
    assert len(set(connected_components(once).tolist())) <= 1


def test_synthetic_determinism_and_balance():
    a = generate_synthetic(seed=3)
    b = generate_synthetic(SyntheticParams(seed=3))
    assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]
    graph, catalog, pairs = a
    assert graph.num_nodes == 500 and catalog.K == 30 and len(pairs) == 120
    assert pairs.labels.sum() == 60
    assert {p.raw_score for p in pairs.pairs} == {POSITIVE_SCORE, NEGATIVE_SCORE}
    assert generate_synthetic(seed=4)[0] != graph


def test_synthetic_positives_share_copied_nodes():
    graph, catalog, pairs = generate_synthetic()
    shared = {1: [], 0: []}
    for p in pairs.pairs:
        a, b = set(catalog.members_of(p.subgraph_a)), set(catalog.members_of(p.subgraph_b))
        shared[p.label].append(len(a & b))
    assert min(shared[1]) >= round(0.6 * 15)
    assert max(shared[0]) < round(0.6 * 15)


def test_synthetic_extreme_is_separable():
    graph, catalog, pairs = generate_synthetic(overlap_fraction=1.0, p_in=1.0, p_bg=0.0,
                                               num_pairs=20)
    for p in pairs.pairs:
        same = catalog.members_of(p.subgraph_a) == catalog.members_of(p.subgraph_b)
        assert same == bool(p.label)
    a = graph.adjacency().toarray()
    for members in catalog.members:
        block = a[np.ix_(members, members)]
        assert block.sum() == len(members) * (len(members) - 1)


def test_synthetic_rejects_infeasible_sizes():
    with pytest.raises(ValueError):
        generate_synthetic(num_nodes=10, module_size=15)
    with pytest.raises(ValueError):
        generate_synthetic(p_in=0.1, p_bg=0.2)


def test_catalog_invariants():
    with pytest.raises(ValueError):
        SubgraphCatalog(("a",), ((),), 3)
    with pytest.raises(ValueError):
        SubgraphCatalog(("a",), ((5,),), 3)
