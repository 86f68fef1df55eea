"""Exhaustive reference solver for small instances.

Enumerates every injective entity-to-node map and every VCP-to-entity
assignment, then picks the minimum under the same total order the staged
solver uses.  Deliberately shares no search code with ``dhpp.solver``.
"""

from __future__ import annotations

import itertools
import math
import time
from typing import Optional

from .placement import ObjectiveValues, Placement, EmptyScenario
from .scenario import Scenario
from .solver import InfeasibleK, SolveOutcome, StageBounds
from .topo import Topology

MAX_CANDIDATES = 10**7


class InstanceTooLarge(Exception):
    pass


def search_space(n_nodes: int, k: int, n_vcps: int) -> int:
    return math.comb(n_nodes, k) * math.factorial(k) * k**n_vcps


def brute_force_oracle(
    t: Topology,
    s: Scenario,
    prior: Optional[Placement],
    rho: float = 0.0,
    stage: int = 3,
) -> SolveOutcome:
    """Lexicographic optimum by enumeration.

    ``prior=None`` gives the Stage-1 answer.  ``stage=2`` stops after the
    LOC objective (entities then carry the sorted-location labels).
    """
    started = time.perf_counter()
    vcps = s.vcps()
    if not vcps:
        raise EmptyScenario("scenario has no VCPs")
    if s.k > t.n:
        raise InfeasibleK(f"k={s.k} exceeds the {t.n} available nodes")
    size = search_space(t.n, s.k, len(vcps))
    if size > MAX_CANDIDATES:
        raise InstanceTooLarge(f"search space {size} exceeds the guard of {MAX_CANDIDATES}")

    d = t.dist.tolist()
    k = s.k
    old = [(i, prior.locations[prior.assignment[p]], prior.assignment[p])
           for i, p in enumerate(vcps) if prior is not None and p in prior.assignment]

    rows = []
    for sigma in itertools.permutations(range(t.n), k):
        for assign in itertools.product(range(k), repeat=len(vcps)):
            serving = tuple(sigma[e] for e in assign)
            total = 0.0
            for p, h in zip(vcps, serving):
                total += d[p.controller_node][h] + d[h][p.switch_node]
            r_loc = sum(1 for i, node, _ in old if serving[i] != node)
            r_hv = sum(1 for i, _, e in old if assign[i] != e)
            rows.append((total, r_loc, r_hv, tuple(sorted(sigma)), serving, sigma, assign))

    n = len(vcps)
    l_star = min(r[0] for r in rows) / n
    budget = StageBounds(l_star, rho).latency_budget
    feasible = [r for r in rows if r[0] / n <= budget]

    if prior is None or stage == 1:
        key = lambda r: (r[0], r[3], r[4], r[5])
        bounds = StageBounds(l_star, rho)
    elif stage == 2:
        key = lambda r: (r[1], r[0], r[3], r[4], r[5])
        r_loc_star = min(r[1] for r in feasible)
        bounds = StageBounds(l_star, rho, r_loc_star)
    else:
        key = lambda r: (r[1], r[2], r[0], r[3], r[4], r[5])
        r_loc_star = min(r[1] for r in feasible)
        bounds = StageBounds(l_star, rho, r_loc_star)

    best = min(feasible, key=key)
    total, r_loc, r_hv, _, _, sigma, assign = best
    placement = Placement(tuple(sigma), dict(zip(vcps, assign)))
    if prior is None:
        objectives = ObjectiveValues(total / n)
    else:
        objectives = ObjectiveValues(total / n, r_loc, r_hv)
    elapsed = (time.perf_counter() - started) * 1000.0
    return SolveOutcome(placement, objectives, bounds, elapsed, len(rows), stage if prior else 1)
