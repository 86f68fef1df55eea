import io
import math
import random
import re
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhpp.topo import (
    DisconnectedGraph,
    MissingCoordinates,
    Node,
    ParseError,
    Topology,
    all_pairs_latency,
    link_latency,
    load_topology,
    parse_topology,
)

from conftest import path_topology, random_connected


def cosine_law_km(lat1, lon1, lat2, lon2):
    # independent of the haversine form used by the package
    p1, p2 = math.radians(lat1), math.radians(lat2)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(math.radians(lon2 - lon1))
    return 6371.0 * math.acos(max(-1.0, min(1.0, c)))


GML_TWO = b"""graph [
  node [ id 10 label "a" Latitude 48.1 Longitude 11.5 ]
  node [ id 20 label "b" Latitude 48.1 Longitude 11.5 ]
  edge [ source 10 target 20 ]
]"""


class TestLinkLatency:
    def test_identical_coordinates(self):
        a = Node(0, "a", 12.5, -3.0)
        assert link_latency(a, a) == 0.0

    def test_antipodal_on_equator(self):
        # half circumference pi * 6371 km = 20015.0868 km at 200000 km/s
        ms = link_latency(Node(0, "a", 0.0, 0.0), Node(1, "b", 0.0, 180.0))
        assert ms == pytest.approx(100.075, abs=1e-3)
        assert ms == pytest.approx(math.pi * 6371.0 / 200.0, abs=1e-9)

    def test_new_york_los_angeles(self):
        ny, la = Node(0, "NY", 40.7128, -74.0060), Node(1, "LA", 34.0522, -118.2437)
        expected = cosine_law_km(40.7128, -74.0060, 34.0522, -118.2437) / 200.0
        assert expected == pytest.approx(19.68, abs=0.05)
        assert link_latency(ny, la) == pytest.approx(expected, abs=1e-6)
        assert link_latency(ny, la) == pytest.approx(19.68, abs=0.05)

    @given(
        st.floats(-90, 90), st.floats(-180, 180), st.floats(-90, 90), st.floats(-180, 180)
    )
    def test_symmetric_and_bounded(self, la1, lo1, la2, lo2):
        a, b = Node(0, "a", la1, lo1), Node(1, "b", la2, lo2)
        assert link_latency(a, b) == link_latency(b, a)
        assert 0.0 <= link_latency(a, b) <= math.pi * 6371.0 / 200.0 + 1e-9


class TestParse:
    def test_two_colocated_nodes(self):
        t = parse_topology(GML_TWO)
        assert t.n == 2 and len(t.links) == 1
        assert t.dist.tolist() == [[0.0, 0.0], [0.0, 0.0]]
        assert [n.id for n in t.nodes] == [0, 1]
        assert t.labels() == ["a", "b"]

    def test_stream_input(self):
        assert parse_topology(io.BytesIO(GML_TWO)).n == 2

    def test_unknown_edge_target(self):
        bad = b"""graph [
  node [ id 0 label "a" Latitude 1 Longitude 1 ]
  edge [ source 0 target 5 ]
]"""
        with pytest.raises(ParseError):
            parse_topology(bad)

    def test_malformed(self):
        with pytest.raises(ParseError):
            parse_topology(b"graph [ node [ id 0 ")
        with pytest.raises(ParseError):
            parse_topology(b"<graphml><graph")

    def test_missing_coordinates(self):
        doc = b"""graph [
  node [ id 0 label "a" Latitude 1 Longitude 1 ]
  node [ id 1 label "b" ]
  edge [ source 0 target 1 ]
]"""
        with pytest.raises(MissingCoordinates):
            parse_topology(doc)

    def test_explicit_latency_replaces_coordinates(self):
        doc = b"""graph [
  node [ id 0 label "a" ]
  node [ id 1 label "b" ]
  edge [ source 0 target 1 Latency 2.5 ]
]"""
        assert parse_topology(doc).dist[0, 1] == 2.5

    def test_disconnected(self):
        doc = b"""graph [
  node [ id 0 label "a" Latitude 1 Longitude 1 ]
  node [ id 1 label "b" Latitude 2 Longitude 2 ]
  node [ id 2 label "c" Latitude 3 Longitude 3 ]
  edge [ source 0 target 1 ]
]"""
        with pytest.raises(DisconnectedGraph):
            parse_topology(doc)

    def test_out_of_range_latitude(self):
        doc = b"""graph [
  node [ id 0 label "a" Latitude 91 Longitude 1 ]
  node [ id 1 label "b" Latitude 2 Longitude 2 ]
  edge [ source 0 target 1 ]
]"""
        with pytest.raises(ParseError):
            parse_topology(doc)

    def test_parallel_links_collapse_to_minimum(self):
        doc = b"""graph [
  node [ id 0 label "a" ]
  node [ id 1 label "b" ]
  edge [ source 0 target 1 latency 4.0 ]
  edge [ source 1 target 0 latency 1.5 ]
]"""
        t = parse_topology(doc)
        assert len(t.links) == 1 and t.links[0].latency == 1.5

    def test_graphml_case_insensitive_keys(self):
        doc = b"""<?xml version="1.0" encoding="utf-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key attr.name="latitude" attr.type="double" for="node" id="d0"/>
  <key attr.name="LONGITUDE" attr.type="double" for="node" id="d1"/>
  <key attr.name="label" attr.type="string" for="node" id="d2"/>
  <graph edgedefault="undirected">
    <node id="n0"><data key="d0">0.0</data><data key="d1">0.0</data><data key="d2">x</data></node>
    <node id="n1"><data key="d0">0.0</data><data key="d1">90.0</data><data key="d2">y</data></node>
    <node id="n2"><data key="d0">0.0</data><data key="d1">180.0</data><data key="d2">z</data></node>
    <edge source="n0" target="n1"/>
    <edge source="n1" target="n2"/>
  </graph>
</graphml>"""
        t = parse_topology(doc)
        assert t.labels() == ["x", "y", "z"]
        assert t.dist[0, 2] == pytest.approx(100.075, abs=1e-3)


class TestAttMpls:
    def source_counts(self):
        text = resources.files("dhpp.data").joinpath("AttMpls.gml").read_text()
        nodes = len(re.findall(r"^\s*node \[", text, re.M))
        pairs = set()
        for src, dst in re.findall(r"source (\d+)\s+target (\d+)", text):
            pairs.add(frozenset((int(src), int(dst))))
        return nodes, len(pairs)

    def test_golden_counts(self):
        nodes, links = self.source_counts()
        assert (nodes, links) == (25, 56)
        t = load_topology("AttMpls")
        assert (t.n, len(t.links)) == (25, 56)
        assert np.isfinite(t.dist).all()

    def test_reparse_is_identical(self):
        a, b = load_topology("AttMpls"), load_topology("AttMpls")
        assert np.array_equal(a.dist, b.dist)
        assert a.digest() == b.digest()


def brute_force_distances(t):
    """Minimum over all simple paths, by explicit enumeration."""
    adj = {i: {} for i in range(t.n)}
    for link in t.links:
        adj[link.u][link.v] = link.latency
        adj[link.v][link.u] = link.latency
    best = [[math.inf] * t.n for _ in range(t.n)]

    def walk(start, node, seen, length):
        best[start][node] = min(best[start][node], length)
        for nxt, w in adj[node].items():
            if nxt not in seen:
                walk(start, nxt, seen | {nxt}, length + w)

    for s in range(t.n):
        walk(s, s, {s}, 0.0)
    return best


class TestAllPairs:
    def test_path_graph(self):
        t = path_topology(4)
        assert t.dist[0, 3] == 3.0 and t.dist[1, 3] == 2.0

    def test_triangle_shortcut(self):
        t = Topology.from_links(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)])
        assert t.dist[0, 2] == 2.0

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_path_enumeration(self, seed):
        t = random_connected(random.Random(seed), 8, weights=(0.25, 1.0, 1.5, 2.0, 4.0, 7.5))
        assert all_pairs_latency(t).tolist() == brute_force_distances(t)

    def test_disconnected(self):
        with pytest.raises(DisconnectedGraph):
            Topology.from_links(3, [(0, 1, 1.0)])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([2, 3, 10]))
    def test_metric_properties_and_scaling(self, seed, c):
        t = random_connected(random.Random(seed), 7)
        d = t.dist
        assert (d == d.T).all() and (np.diag(d) == 0).all()
        assert (d[:, None, :] <= d[:, :, None] + d[None, :, :]).all()
        assert np.array_equal(t.scaled(c).dist, c * d)
