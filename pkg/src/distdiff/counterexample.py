"""Metric-graph analog of non-uniqueness from data on a codimension-one set.

Two weighted graphs share a reflection-symmetric core whose fixed cycle
``F~`` is the observation set.  Four arms leave the core at ports TR, BR,
TL, BL (the reflection swaps TR<->BR and TL<->BL) and each arm ends in a
gadget of a given cycle rank.  The second graph swaps the gadgets on the
two left arms.  Distances from any vertex to ``F~`` only see its own arm
when the arms are long, so both graphs produce the same multiset of
distance-difference vectors although they are not isomorphic.

All edge weights are ``Fraction`` values, so distance sums are exact.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
import csv
import json

import networkx as nx

from .errors import CounterexampleBrokenError, InvalidRequestError, SeparationViolatedError

PORTS = ("TR", "BR", "TL", "BL")
MIRROR = {"TR": "BR", "BR": "TR", "TL": "BL", "BL": "TL"}
DEFAULT_RANKS = (0, 1, 2, 3)
CORE_SIZE = 8
RING_EDGE = Fraction(2)  # long core ring, so detours through short arms can pay off
RUNG = Fraction(1)
PORT_EDGE = Fraction(1, 2)
TUBE_EDGE = Fraction(2)  # ring edges of each arm; caps cut across these rings
SEPARATION_MARGIN = 10


def spoke_length(rank: int) -> Fraction:
    """Hub-to-tip length of a gadget; caps of higher rank are slightly wider."""
    return Fraction(1, 2) + Fraction(rank, 8)


@dataclass(eq=False)
class GraphManifold:
    graph: nx.Graph
    f_vertices: tuple[str, ...]
    reflection: dict[str, str]
    attachment: dict[str, int]
    arm_length: Fraction
    meta: dict = field(default_factory=dict)

    @property
    def core(self) -> set[str]:
        return set(self.reflection)

    def gadget_vertices(self, port: str) -> list[str]:
        return [v for v in self.graph if v.startswith(f"{port}.g")]

    def validate(self) -> None:
        g = self.graph
        if not nx.is_connected(g):
            raise InvalidRequestError("graph is disconnected")
        if any(w <= 0 for *_, w in g.edges(data="weight")):
            raise InvalidRequestError("edge weights must be positive")
        rho = self.reflection
        for v, w in rho.items():
            if rho.get(w) != v:
                raise InvalidRequestError(f"reflection is not an involution at {v}")
        for z in self.f_vertices:
            if rho.get(z) != z:
                raise InvalidRequestError(f"reflection moves F~ vertex {z}")
        for a, b, w in g.edges(data="weight"):
            if a in rho and b in rho:
                ra, rb = rho[a], rho[b]
                if not g.has_edge(ra, rb) or g.edges[ra, rb]["weight"] != w:
                    raise InvalidRequestError(f"reflection breaks edge {a}-{b}")

    def to_edge_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "target", "length"])
            for a, b, wt in sorted(self.graph.edges(data="weight")):
                w.writerow([a, b, str(wt)])


def _ring(g: nx.Graph, names: list[str], weight: Fraction) -> None:
    for a, b in zip(names, names[1:] + names[:1]):
        g.add_edge(a, b, weight=weight)


def _core(arm_length: Fraction) -> tuple[nx.Graph, dict[str, str], list[str]]:
    g = nx.Graph()
    mid = [f"c{i}" for i in range(CORE_SIZE)]
    up = [f"u{i}" for i in range(CORE_SIZE)]
    low = [f"l{i}" for i in range(CORE_SIZE)]
    for ring in (mid, up, low):
        _ring(g, ring, RING_EDGE)
    for c, u, l in zip(mid, up, low):
        g.add_edge(c, u, weight=RUNG)
        g.add_edge(c, l, weight=RUNG)
    rho = {c: c for c in mid}
    rho.update({u: l for u, l in zip(up, low)})
    rho.update({l: u for u, l in zip(up, low)})
    half = CORE_SIZE // 2
    base = {"TR": up[:half], "TL": up[half:], "BR": low[:half], "BL": low[half:]}
    for port, anchors in base.items():
        ring = [f"{port}.r{k}" for k in range(half)]
        tip = [f"{port}.t{k}" for k in range(half)]
        _ring(g, ring, TUBE_EDGE)
        _ring(g, tip, TUBE_EDGE)
        for a, r, t in zip(anchors, ring, tip):
            g.add_edge(a, r, weight=PORT_EDGE)
            g.add_edge(r, t, weight=arm_length)
        # tips are glued to the gadget, whose spokes differ by rank, so only the
        # base ring is mirrored
        for k in range(half):
            rho[f"{port}.r{k}"] = f"{MIRROR[port]}.r{k}"
    return g, rho, mid


def _attach_gadget(g: nx.Graph, port: str, rank: int) -> None:
    """Star cap over the tip ring plus a chain of ``rank`` 4-cycles."""
    hub = f"{port}.g.hub"
    for k in range(CORE_SIZE // 2):
        g.add_edge(hub, f"{port}.t{k}", weight=spoke_length(rank))
    prev = hub
    for k in range(rank):
        p, q, s = (f"{port}.g{k}{x}" for x in "pqs")
        g.add_edge(prev, p, weight=Fraction(1))
        g.add_edge(p, q, weight=Fraction(1))
        g.add_edge(q, s, weight=Fraction(1))
        g.add_edge(s, prev, weight=Fraction(1))
        prev = q


def gadget_diameter(rank: int) -> Fraction:
    g = nx.Graph()
    tip = [f"X.t{k}" for k in range(CORE_SIZE // 2)]
    _ring(g, tip, TUBE_EDGE)
    _attach_gadget(g, "X", rank)
    lengths = dict(nx.all_pairs_dijkstra_path_length(g))
    return max(max(row.values()) for row in lengths.values())


def separation_threshold(ranks) -> Fraction:
    return max(gadget_diameter(r) for r in ranks) + SEPARATION_MARGIN


def _build(arm_length: Fraction, layout: dict[str, int]) -> GraphManifold:
    g, rho, mid = _core(arm_length)
    for port, rank in layout.items():
        _attach_gadget(g, port, rank)
    gm = GraphManifold(g, tuple(mid), rho, dict(layout), arm_length)
    gm.validate()
    return gm


def build_example_graphs(arm_length=20, ranks=DEFAULT_RANKS,
                         enforce_separation: bool = True) -> tuple[GraphManifold, GraphManifold]:
    """The pair of graphs; ``ranks`` lists the gadgets at TR, BR, TL, BL of the first.

    The second graph carries the TL and BL gadgets swapped.  Arms no longer
    than the largest gadget diameter plus ten are rejected unless
    ``enforce_separation`` is off (used to show what goes wrong).
    """
    length = Fraction(str(arm_length)) if not isinstance(arm_length, Fraction) else arm_length
    if length <= 0:
        raise InvalidRequestError("arm length must be positive")
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 4 or min(ranks) < 0:
        raise InvalidRequestError("need four non-negative gadget ranks")
    threshold = separation_threshold(ranks)
    if enforce_separation and length <= threshold:
        raise SeparationViolatedError(
            f"arm length {length} must exceed gadget diameter + {SEPARATION_MARGIN} = {threshold}")
    first = dict(zip(PORTS, ranks))
    second = dict(first, TL=first["BL"], BL=first["TL"])
    return _build(length, first), _build(length, second)


def distances_to_f(gm: GraphManifold) -> dict[str, dict[str, Fraction]]:
    return {z: nx.single_source_dijkstra_path_length(gm.graph, z) for z in gm.f_vertices}


def restricted_dataset(gm: GraphManifold, include_f: bool = False) -> Counter:
    """Multiset of vectors ``(d(x, z_a) - d(x, z_0))_a`` over vertices ``x``."""
    dist = distances_to_f(gm)
    zs = gm.f_vertices
    out: Counter = Counter()
    fset = set(zs)
    for x in gm.graph:
        if x in fset and not include_f:
            continue
        out[tuple(dist[z][x] - dist[zs[0]][x] for z in zs)] += 1
    return out


def vector_of(gm: GraphManifold, x: str, dist=None) -> tuple[Fraction, ...]:
    dist = distances_to_f(gm) if dist is None else dist
    zs = gm.f_vertices
    return tuple(dist[z][x] - dist[zs[0]][x] for z in zs)


def paths_stay_in_arm(gm: GraphManifold) -> dict[str, bool]:
    """Shortest paths from each gadget's deepest vertex to every F~ vertex avoid other arms."""
    out = {}
    for port in gm.attachment:
        verts = gm.gadget_vertices(port)
        hub = f"{port}.g.hub"
        depth = nx.single_source_dijkstra_path_length(gm.graph, hub)
        deepest = max(verts, key=lambda v: (depth[v], v))
        ok = True
        for z in gm.f_vertices:
            path = nx.dijkstra_path(gm.graph, deepest, z)
            ok &= all(not v.startswith(other + ".") for v in path for other in PORTS if other != port)
        out[port] = bool(ok)
    return out


def _weight_match(a, b) -> bool:
    return a["weight"] == b["weight"]


def isomorphic(g1: GraphManifold, g2: GraphManifold) -> bool:
    """Exhaustive VF2 search with edge lengths matched exactly."""
    return nx.is_isomorphic(g1.graph, g2.graph, edge_match=_weight_match)


def wl_certificate(gm: GraphManifold) -> str:
    g = gm.graph.copy()
    for a, b, w in g.edges(data="weight"):
        g.edges[a, b]["label"] = str(w)
    return nx.weisfeiler_lehman_graph_hash(g, edge_attr="label", iterations=6)


def inter_gadget_profile(gm: GraphManifold) -> list[tuple[int, int, Fraction]]:
    """Sorted (rank, rank, hub distance) triples; differs between the two graphs."""
    out = []
    ports = list(gm.attachment)
    for i, p in enumerate(ports):
        d = nx.single_source_dijkstra_path_length(gm.graph, f"{p}.g.hub")
        for q in ports[i + 1:]:
            ra, rb = sorted((gm.attachment[p], gm.attachment[q]))
            out.append((ra, rb, d[f"{q}.g.hub"]))
    return sorted(out)


@dataclass
class CounterexampleReport:
    datasets_equal: bool
    non_isomorphic: bool
    n_vectors: int
    n_vertices: tuple[int, int]
    n_edges: tuple[int, int]
    arm_length: str
    wl_hashes: tuple[str, str]
    profiles_differ: bool
    difference_count: int

    @property
    def passed(self) -> bool:
        return self.datasets_equal and self.non_isomorphic

    @property
    def verdict(self) -> str:
        if self.passed:
            return "PASS"
        return "FAIL(a)" if not self.datasets_equal else "FAIL(b)"

    def to_json(self) -> str:
        body = dict(self.__dict__, passed=self.passed, verdict=self.verdict)
        return json.dumps(body, indent=2, sort_keys=True)


def compare(g1: GraphManifold, g2: GraphManifold) -> CounterexampleReport:
    d1 = restricted_dataset(g1)
    d2 = restricted_dataset(g2)
    diff = sum(((d1 - d2) + (d2 - d1)).values())
    return CounterexampleReport(
        datasets_equal=d1 == d2,
        non_isomorphic=not isomorphic(g1, g2),
        n_vectors=sum(d1.values()),
        n_vertices=(g1.graph.number_of_nodes(), g2.graph.number_of_nodes()),
        n_edges=(g1.graph.number_of_edges(), g2.graph.number_of_edges()),
        arm_length=str(g1.arm_length),
        wl_hashes=(wl_certificate(g1), wl_certificate(g2)),
        profiles_differ=inter_gadget_profile(g1) != inter_gadget_profile(g2),
        difference_count=int(diff),
    )


def assert_counterexample(g1: GraphManifold, g2: GraphManifold) -> CounterexampleReport:
    """Equal restricted data and non-isomorphic graphs, or ``CounterexampleBrokenError``."""
    report = compare(g1, g2)
    if not report.passed:
        raise CounterexampleBrokenError(report.verdict, report)
    return report
