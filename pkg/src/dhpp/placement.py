"""Hypervisor placements, the latency objective, and reconfiguration counts.

A placement fixes a substrate node for each of the k hypervisor entities and
an entity for each VCP.  Between two placements a VCP can change its serving
node (a LOC change), its serving entity (an HV change), both, or neither.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .scenario import Scenario, Vcp
from .topo import Topology


class PlacementError(ValueError):
    pass


class EmptyScenario(PlacementError):
    pass


class EntityUniverseMismatch(PlacementError):
    pass


class UncoveredVcp(PlacementError):
    pass


@dataclass(frozen=True)
class Placement:
    locations: tuple  # locations[e] is the node hosting entity e
    assignment: Mapping  # Vcp -> entity id

    @property
    def k(self) -> int:
        return len(self.locations)

    def serving_node(self, p: Vcp) -> int:
        return self.locations[self.assignment[p]]

    @classmethod
    def from_serving(cls, locations: Iterable[int], vcps: Iterable[Vcp], nodes: Iterable[int]):
        """Build from per-VCP serving nodes; each node must be some entity's location."""
        locations = tuple(locations)
        entity_at = {node: e for e, node in enumerate(locations)}
        return cls(locations, {p: entity_at[h] for p, h in zip(vcps, nodes)})

    def relabeled(self, perm: Mapping[int, int]) -> "Placement":
        """Rename entity e to perm[e], keeping every VCP on the same node."""
        locations = [None] * self.k
        for e, node in enumerate(self.locations):
            locations[perm[e]] = node
        return Placement(tuple(locations), {p: perm[e] for p, e in self.assignment.items()})

    def to_dict(self) -> dict:
        return {
            "locations": {str(e): node for e, node in enumerate(self.locations)},
            "assignment": [
                {"vsdn": p.vsdn_id, "controller": p.controller_node, "switch": p.switch_node, "entity": e}
                for p, e in self.assignment.items()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        try:
            locs = {int(e): int(node) for e, node in d["locations"].items()}
            if sorted(locs) != list(range(len(locs))):
                raise PlacementError(f"entity ids must be 0..k-1, got {sorted(locs)}")
            assignment = {
                Vcp(int(a["vsdn"]), int(a["controller"]), int(a["switch"])): int(a["entity"])
                for a in d["assignment"]
            }
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise PlacementError(f"malformed placement document: {exc}") from exc
        return cls(tuple(locs[e] for e in range(len(locs))), assignment)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Placement":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ObjectiveValues:
    l_avg: float
    r_loc: Optional[int] = None
    r_hv: Optional[int] = None

    def as_tuple(self) -> tuple:
        return (self.l_avg, self.r_loc, self.r_hv)


@dataclass(frozen=True)
class ReconfigReport:
    flags: Mapping  # Vcp -> (loc_changed, hv_changed)
    r_loc: int
    r_hv: int


def vcp_latency(t: Topology, p: Vcp, hv_node: int) -> float:
    return float(t.dist[p.controller_node, hv_node] + t.dist[hv_node, p.switch_node])


def total_latency(t: Topology, vcps: Iterable[Vcp], pl: Placement) -> float:
    # exact: every term lies on the topology's latency grid
    return sum(vcp_latency(t, p, pl.serving_node(p)) for p in vcps)


def eval_avg_latency(t: Topology, s: Scenario, pl: Placement) -> float:
    vcps = s.vcps()
    if not vcps:
        raise EmptyScenario("scenario has no VCPs")
    missing = [p for p in vcps if p not in pl.assignment]
    if missing:
        raise UncoveredVcp(f"{len(missing)} VCP(s) have no entity, e.g. {missing[0]}")
    return total_latency(t, vcps, pl) / len(vcps)


def within_budget(l_avg: float, budget: float) -> bool:
    """The single comparison used for every latency-budget decision."""
    return l_avg <= budget


def count_reconfigurations(old: Placement, new: Placement, vcps: Iterable[Vcp]) -> ReconfigReport:
    if old.k != new.k:
        raise EntityUniverseMismatch(f"old placement has {old.k} entities, new has {new.k}")
    flags = {}
    for p in vcps:
        if p not in old.assignment or p not in new.assignment:
            raise UncoveredVcp(f"{p} is not assigned in both placements")
        flags[p] = (
            new.serving_node(p) != old.serving_node(p),
            new.assignment[p] != old.assignment[p],
        )
    return ReconfigReport(
        flags,
        sum(loc for loc, _ in flags.values()),
        sum(hv for _, hv in flags.values()),
    )


def evaluate(t: Topology, s: Scenario, pl: Placement, prior: Optional[Placement] = None) -> ObjectiveValues:
    """Objective triple of ``pl``; counts only VCPs that already existed in ``prior``."""
    l_avg = eval_avg_latency(t, s, pl)
    if prior is None:
        return ObjectiveValues(l_avg)
    carried = [p for p in s.vcps() if p in prior.assignment]
    report = count_reconfigurations(prior, pl, carried)
    return ObjectiveValues(l_avg, report.r_loc, report.r_hv)


def validate_placement(t: Topology, s: Scenario, pl: Placement) -> list[str]:
    """All invariant violations of ``pl`` for scenario ``s``; empty means valid."""
    problems = []
    if pl.k != s.k:
        problems.append(f"entity count {pl.k} differs from k={s.k}")
    for e, node in enumerate(pl.locations):
        if not isinstance(node, int) or not 0 <= node < t.n:
            problems.append(f"entity {e} located at invalid node {node!r}")
    if len(set(pl.locations)) != len(pl.locations):
        problems.append("duplicate location")
    for p in s.vcps():
        if p not in pl.assignment:
            problems.append(f"uncovered VCP {p}")
        elif not 0 <= pl.assignment[p] < pl.k:
            problems.append(f"VCP {p} assigned to unknown entity {pl.assignment[p]}")
    return problems
