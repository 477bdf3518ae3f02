from fractions import Fraction

import networkx as nx
import pytest

from distdiff import counterexample as ce
from distdiff.errors import CounterexampleBrokenError, InvalidRequestError, SeparationViolatedError


@pytest.fixture(scope="module")
def default_pair():
    return ce.build_example_graphs(20)


def test_default_passes(default_pair):
    rep = ce.assert_counterexample(*default_pair)
    assert rep.verdict == "PASS"
    assert rep.datasets_equal and rep.non_isomorphic and rep.profiles_differ
    assert rep.difference_count == 0


def test_sizes_equal_attachment_differs(default_pair):
    g1, g2 = default_pair
    assert g1.graph.number_of_nodes() == g2.graph.number_of_nodes()
    assert g1.graph.number_of_edges() == g2.graph.number_of_edges()
    assert g1.attachment != g2.attachment
    assert sorted(g1.attachment.values()) == sorted(g2.attachment.values())


def test_reflection_is_isometric_involution(default_pair):
    for gm in default_pair:
        gm.validate()
        assert all(gm.reflection[gm.reflection[v]] == v for v in gm.reflection)


def test_mirrored_vertices_share_vectors(default_pair):
    gm = default_pair[0]
    dist = ce.distances_to_f(gm)
    for v, w in gm.reflection.items():
        assert all(dist[z][v] == dist[z][w] for z in gm.f_vertices)
        assert ce.vector_of(gm, v, dist) == ce.vector_of(gm, w, dist)


def test_f_vertex_vector_is_definition(default_pair):
    gm = default_pair[0]
    dist = ce.distances_to_f(gm)
    z0, z1 = gm.f_vertices[:2]
    vec = ce.vector_of(gm, z1, dist)
    assert vec[0] == 0
    assert vec[1] == -dist[z0][z1]
    assert all(isinstance(c, Fraction) for c in vec)


def test_multisets_equal(default_pair):
    g1, g2 = default_pair
    assert ce.restricted_dataset(g1) == ce.restricted_dataset(g2)
    assert ce.restricted_dataset(g1, include_f=True) == ce.restricted_dataset(g2, include_f=True)


def test_paths_stay_in_arm(default_pair):
    for gm in default_pair:
        assert all(ce.paths_stay_in_arm(gm).values())


def test_identical_gadgets_fail_b():
    g1, g2 = ce.build_example_graphs(20, ranks=(2, 2, 2, 2))
    rep = ce.compare(g1, g2)
    assert rep.verdict == "FAIL(b)"
    with pytest.raises(CounterexampleBrokenError):
        ce.assert_counterexample(g1, g2)


def test_short_arms_fail_a():
    g1, g2 = ce.build_example_graphs(Fraction(1, 4), enforce_separation=False)
    assert ce.compare(g1, g2).verdict == "FAIL(a)"


def test_separation_enforced():
    limit = ce.separation_threshold(ce.DEFAULT_RANKS)
    with pytest.raises(SeparationViolatedError):
        ce.build_example_graphs(limit)
    ce.build_example_graphs(limit + Fraction(1, 100))


def test_bad_specs():
    with pytest.raises(InvalidRequestError):
        ce.build_example_graphs(0, enforce_separation=False)
    with pytest.raises(InvalidRequestError):
        ce.build_example_graphs(20, ranks=(0, 1, 2))
    with pytest.raises(InvalidRequestError):
        ce.build_example_graphs(20, ranks=(0, 1, 2, -1))


def test_gadget_cycle_rank():
    for rank in range(4):
        g = nx.Graph()
        ce._attach_gadget(g, "X", rank)
        # the star over the tips is a tree, each 4-cycle adds one
        assert g.number_of_edges() - g.number_of_nodes() + 1 == rank


def test_validate_catches_broken_reflection():
    gm = ce.build_example_graphs(20)[0]
    gm.graph.edges["u0", "c0"]["weight"] = Fraction(3)
    with pytest.raises(InvalidRequestError):
        gm.validate()


def test_report_json_and_csv(tmp_path, default_pair):
    import json

    rep = ce.compare(*default_pair)
    body = json.loads(rep.to_json())
    assert body["verdict"] == "PASS" and body["passed"] is True
    default_pair[0].to_edge_csv(tmp_path / "g1.csv")
    lines = (tmp_path / "g1.csv").read_text().splitlines()
    assert lines[0] == "source,target,length"
    assert len(lines) == default_pair[0].graph.number_of_edges() + 1
