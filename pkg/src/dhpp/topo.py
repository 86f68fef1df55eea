"""Physical topologies: parsing, geodesic link latencies, shortest paths.

All latencies are kept in milliseconds on a dyadic grid of 2**-20 ms
(about one nanosecond).  Sums of grid values are exact in double precision,
so objective totals do not depend on summation order and budget
comparisons are reproducible bit for bit.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

EARTH_RADIUS_KM = 6371.0
PROPAGATION_KM_PER_S = 200_000.0
GRID_BITS = 20
_GRID = float(2**GRID_BITS)

# edge attribute names (lower-cased) treated as an explicit latency in ms
_LATENCY_KEYS = ("latency", "latency_ms", "delay", "delay_ms")


class TopologyError(Exception):
    pass


class ParseError(TopologyError):
    pass


class MissingCoordinates(TopologyError):
    pass


class DisconnectedGraph(TopologyError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    label: str
    latitude: Optional[float] = None
    longitude: Optional[float] = None

    @property
    def has_coordinates(self) -> bool:
        return self.latitude is not None and self.longitude is not None


@dataclass(frozen=True)
class Link:
    u: int
    v: int
    latency: float

    @property
    def endpoints(self) -> frozenset:
        return frozenset((self.u, self.v))


def quantize(ms: float) -> float:
    """Snap a latency onto the 2**-20 ms grid."""
    return round(ms * _GRID) / _GRID


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def link_latency(a: Node, b: Node) -> float:
    """Propagation delay in ms along the great circle between two nodes."""
    km = haversine_km(a.latitude, a.longitude, b.latitude, b.longitude)
    return km / PROPAGATION_KM_PER_S * 1000.0


def shortest_path_matrix(n: int, links: Iterable[Link]) -> np.ndarray:
    """Floyd-Warshall over an undirected weighted graph.

    Raises DisconnectedGraph if some pair of nodes is unreachable.
    """
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for link in links:
        w = min(dist[link.u, link.v], link.latency)
        dist[link.u, link.v] = dist[link.v, link.u] = w
    for m in range(n):
        np.minimum(dist, dist[:, m, None] + dist[None, m, :], out=dist)
    if n and not np.isfinite(dist).all():
        i, j = np.argwhere(~np.isfinite(dist))[0]
        raise DisconnectedGraph(f"no path between nodes {i} and {j}")
    return dist


@dataclass(frozen=True, eq=False)
class Topology:
    """Immutable substrate graph with its all-pairs latency matrix."""

    nodes: tuple
    links: tuple
    name: str = "topology"
    dist: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.dist is None:
            dist = shortest_path_matrix(len(self.nodes), self.links)
            dist.setflags(write=False)
            object.__setattr__(self, "dist", dist)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def labels(self) -> list[str]:
        return [node.label for node in self.nodes]

    def digest(self) -> str:
        """Short content hash over node count and link latencies."""
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        for link in self.links:
            h.update(f"{link.u},{link.v},{link.latency.hex()};".encode())
        return h.hexdigest()[:12]

    @classmethod
    def from_links(
        cls,
        n: int,
        edges: Iterable[tuple[int, int, float]],
        labels: Optional[Sequence[str]] = None,
        name: str = "topology",
    ) -> "Topology":
        """Build from explicit (u, v, latency_ms) triples."""
        labels = list(labels) if labels is not None else [str(i) for i in range(n)]
        nodes = tuple(Node(i, labels[i]) for i in range(n))
        return cls(nodes, _normalize_links(n, edges), name=name)

    @classmethod
    def from_nodes(
        cls, nodes: Sequence[Node], edges: Iterable[tuple[int, int]], name: str = "topology"
    ) -> "Topology":
        """Build from geo-located nodes; link latencies are geodesic."""
        nodes = tuple(nodes)
        triples = [(u, v, link_latency(nodes[u], nodes[v])) for u, v in edges]
        return cls(nodes, _normalize_links(len(nodes), triples), name=name)

    def scaled(self, c: float) -> "Topology":
        """Copy with every link latency multiplied by ``c``."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        links = tuple(Link(l.u, l.v, quantize(l.latency * c)) for l in self.links)
        return Topology(self.nodes, links, name=self.name)


def _normalize_links(n: int, edges: Iterable[tuple[int, int, float]]) -> tuple:
    best: dict[tuple[int, int], float] = {}
    for u, v, w in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(f"link ({u}, {v}) references an unknown node")
        if u == v:
            continue
        if not math.isfinite(w) or w < 0:
            raise ParseError(f"link ({u}, {v}) has invalid latency {w!r}")
        key = (min(u, v), max(u, v))
        w = quantize(w)
        if key not in best or w < best[key]:
            best[key] = w
    return tuple(Link(u, v, w) for (u, v), w in sorted(best.items()))


def all_pairs_latency(t: Topology) -> np.ndarray:
    return shortest_path_matrix(t.n, t.links)


def _attr(attrs: dict, wanted: str):
    for key, value in attrs.items():
        if key.lower() == wanted:
            return value
    return None


def _coordinate(attrs: dict, key: str, lo: float, hi: float, node) -> Optional[float]:
    raw = _attr(attrs, key)
    if raw is None:
        return None
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"node {node!r}: {key} {raw!r} is not a number") from None
    if not lo <= value <= hi:
        raise ParseError(f"node {node!r}: {key} {value} outside [{lo}, {hi}]")
    return value


def _edge_latency(attrs: dict) -> Optional[float]:
    for key in _LATENCY_KEYS:
        raw = _attr(attrs, key)
        if raw is not None:
            try:
                return float(raw)
            except (TypeError, ValueError):
                raise ParseError(f"link latency {raw!r} is not a number") from None
    return None


def _read_graph(text: str) -> nx.Graph:
    if text.lstrip().startswith("<"):
        try:
            return nx.parse_graphml(text, force_multigraph=True)
        except Exception as exc:
            raise ParseError(f"invalid GraphML: {exc}") from exc
    try:
        return nx.parse_gml(text, label="id")
    except nx.NetworkXError as exc:
        if "is duplicated" not in str(exc):
            raise ParseError(f"invalid GML: {exc}") from exc
    except Exception as exc:
        raise ParseError(f"invalid GML: {exc}") from exc
    # parallel edges in a file that does not declare itself a multigraph
    patched = re.sub(r"graph\s*\[", "graph [\n  multigraph 1", text, count=1)
    try:
        return nx.parse_gml(patched, label="id")
    except Exception as exc:
        raise ParseError(f"invalid GML: {exc}") from exc


def parse_topology(source, name: Optional[str] = None) -> Topology:
    """Parse Topology Zoo GML or GraphML from bytes, text, or a binary stream."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from exc
    g = _read_graph(source)
    if g.is_directed():
        g = g.to_undirected()
    if g.number_of_nodes() == 0:
        raise ParseError("graph has no nodes")

    ids = {}
    nodes = []
    for idx, key in enumerate(sorted(g.nodes, key=_node_sort_key)):
        attrs = g.nodes[key]
        ids[key] = idx
        label = attrs.get("label", str(key))
        nodes.append(
            Node(
                idx,
                str(label),
                _coordinate(attrs, "latitude", -90.0, 90.0, key),
                _coordinate(attrs, "longitude", -180.0, 180.0, key),
            )
        )

    triples = []
    for u, v, attrs in g.edges(data=True):
        w = _edge_latency(attrs)
        a, b = nodes[ids[u]], nodes[ids[v]]
        if w is None:
            missing = [x.label for x in (a, b) if not x.has_coordinates]
            if missing:
                raise MissingCoordinates(
                    f"node(s) {', '.join(missing)} lack Latitude/Longitude "
                    "and the link has no latency attribute"
                )
            w = link_latency(a, b)
        triples.append((a.id, b.id, w))

    if name is None:
        name = str(g.graph.get("label") or g.graph.get("Network") or "topology")
    return Topology(tuple(nodes), _normalize_links(len(nodes), triples), name=name)


def _node_sort_key(key):
    # GML ids are ints, GraphML ids are strings like "n12"
    if isinstance(key, int):
        return (0, key, "")
    m = re.fullmatch(r"\D*(\d+)", str(key))
    return (1, int(m.group(1)) if m else -1, str(key))


BUILTIN = {"attmpls": "AttMpls.gml"}


def load_topology(path: str | Path) -> Topology:
    """Load a topology file; bundled names such as ``AttMpls`` also resolve."""
    p = Path(path)
    if not p.exists() and str(path).lower() in BUILTIN:
        data = resources.files("dhpp.data").joinpath(BUILTIN[str(path).lower()]).read_bytes()
        return parse_topology(data)
    with open(p, "rb") as fh:
        return parse_topology(fh, name=None)


def topology_summary(t: Topology) -> dict:
    lat = [link.latency for link in t.links]
    return {
        "name": t.name,
        "nodes": t.n,
        "links": len(t.links),
        "min_link_ms": min(lat) if lat else 0.0,
        "max_link_ms": max(lat) if lat else 0.0,
        "mean_link_ms": sum(lat) / len(lat) if lat else 0.0,
        "diameter_ms": float(t.dist.max()) if t.n else 0.0,
    }
