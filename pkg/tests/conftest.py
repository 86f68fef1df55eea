import random

import networkx as nx
import pytest

from dhpp.placement import Placement
from dhpp.scenario import Scenario, Vsdn
from dhpp.topo import Topology

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail, flag=False):
    status = "FLAG" if flag else ("PASS" if passed else "FAIL")
    ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def path_topology(n=4, w=1.0):
    """A-B-C-D style path with uniform link latency; node i is the i-th letter."""
    return Topology.from_links(n, [(i, i + 1, w) for i in range(n - 1)], labels="ABCDEFGH"[:n])


def random_connected(rng, n, weights=(0.5, 1.0, 1.25, 2.0, 3.0)):
    if n == 1:
        return Topology.from_links(1, [])
    while True:
        g = nx.gnp_random_graph(n, rng.uniform(0.3, 1.0), seed=rng.randrange(2**31))
        if nx.is_connected(g):
            break
    return Topology.from_links(n, [(u, v, rng.choice(weights)) for u, v in g.edges])


def random_small_instance(rng, max_nodes=6, max_k=2, max_vcps=4):
    """Connected graph, a scenario whose last vSDN is 'new', and a random prior."""
    n = rng.randint(1, max_nodes)
    t = random_connected(rng, n)
    k = rng.randint(1, min(max_k, n))
    vsdns, used = [], 0
    for i in range(rng.randint(1, 3)):
        m = rng.randint(1, min(n, 2))
        if used + m > max_vcps:
            break
        vsdns.append(Vsdn(i, rng.randrange(n), tuple(rng.sample(range(n), m))))
        used += m
    s = Scenario("rand", k, tuple(vsdns), 0, (1, 2))
    carried = [p for v in vsdns[:-1] for p in v.vcps()] if len(vsdns) > 1 else s.vcps()
    prior = Placement(tuple(rng.sample(range(n), k)), {p: rng.randrange(k) for p in carried})
    return t, s, prior


@pytest.fixture
def rng():
    return random.Random(20240601)
