"""Exact three-stage solver for dynamic hypervisor placement.

Stage 1 minimizes the average control-path latency.  Stage 2 minimizes the
number of VCPs whose serving node moves, subject to a latency budget of
(1 + rho) times the Stage-1 optimum.  Stage 3 minimizes the number of VCPs
whose serving entity changes, subject to the same budget and the Stage-2
optimum.

Every stage enumerates k-subsets of nodes.  For a fixed location set the
VCPs decouple except through the latency budget and the reconfiguration
limits, which a small table DP over (switches used, entity changes) handles
exactly.  Ties are broken by one total order shared with the brute-force
oracle: reconfiguration counts, then total latency, then the sorted location
set, then the per-VCP serving nodes, then the entity-to-node tuple.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .placement import (
    EntityUniverseMismatch,
    ObjectiveValues,
    Placement,
    PlacementError,
    EmptyScenario,
    evaluate,
    within_budget,
)
from .scenario import Scenario
from .topo import Topology

_CHUNK_CELLS = 4_000_000


class SolverError(Exception):
    pass


class InfeasibleK(SolverError):
    pass


class InfeasibleBudget(SolverError):
    pass


@dataclass(frozen=True)
class StageBounds:
    l_star: float
    rho: float = 0.0
    r_loc_star: Optional[int] = None

    def __post_init__(self):
        if self.rho < 0 or not math.isfinite(self.rho):
            raise ValueError(f"rho must be a finite non-negative factor, got {self.rho}")

    @property
    def latency_budget(self) -> float:
        return (1.0 + self.rho) * self.l_star

    def to_dict(self) -> dict:
        return {
            "l_star": self.l_star,
            "rho": self.rho,
            "latency_budget": self.latency_budget,
            "r_loc_star": self.r_loc_star,
        }


@dataclass(frozen=True)
class SolveOutcome:
    placement: Placement
    objectives: ObjectiveValues
    bounds: StageBounds
    solve_time: float  # ms wall clock
    nodes_explored: int
    stage: int = 3

    def to_dict(self) -> dict:
        obj = {"l_avg": self.objectives.l_avg}
        if self.objectives.r_loc is not None:
            obj.update(r_loc=self.objectives.r_loc, r_hv=self.objectives.r_hv)
        return {
            "stage": self.stage,
            "objectives": obj,
            "bounds": self.bounds.to_dict(),
            "placement": self.placement.to_dict(),
            "solve_time_ms": self.solve_time,
            "nodes_explored": self.nodes_explored,
        }


@lru_cache(maxsize=16)
def location_sets(n: int, k: int) -> np.ndarray:
    """All k-subsets of range(n), rows sorted, in lexicographic order."""
    count = math.comb(n, k)
    out = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)),
        dtype=np.int64,
        count=count * k,
    ).reshape(count, k)
    out.setflags(write=False)
    return out


def _chunks(total: int, width: int):
    step = max(1, _CHUNK_CELLS // max(1, width))
    for lo in range(0, total, step):
        yield lo, min(total, lo + step)


class _Instance:
    """Cost matrix and prior bookkeeping shared by all stages of one solve."""

    def __init__(self, t: Topology, s: Scenario, prior: Optional[Placement] = None):
        if s.k < 1 or s.k > t.n:
            raise InfeasibleK(f"k={s.k} exceeds the {t.n} available nodes")
        self.t, self.s, self.prior = t, s, prior
        self.vcps = s.vcps()
        self.n = len(self.vcps)
        if self.n == 0:
            raise EmptyScenario("scenario has no VCPs")
        ctrl = np.array([p.controller_node for p in self.vcps])
        sw = np.array([p.switch_node for p in self.vcps])
        # cost[i, h]: controller -> h -> switch latency of VCP i
        self.cost = t.dist[ctrl, :] + t.dist[:, sw].T
        self.cost_t = np.ascontiguousarray(self.cost.T)  # row gathers per node are cheap
        self.sets = location_sets(t.n, s.k)

        self.old = np.zeros(self.n, dtype=bool)
        self.prior_node = np.full(self.n, -1)
        self.prior_entity = np.full(self.n, -1)
        if prior is not None:
            if prior.k != s.k:
                raise EntityUniverseMismatch(f"prior has {prior.k} entities, scenario needs {s.k}")
            for i, p in enumerate(self.vcps):
                e = prior.assignment.get(p)
                if e is None:
                    continue
                if not 0 <= e < prior.k:
                    raise PlacementError(f"prior assigns {p} to unknown entity {e}")
                self.old[i] = True
                self.prior_entity[i] = e
                self.prior_node[i] = prior.locations[e]
        self.old_idx = np.flatnonzero(self.old)
        self.kept_cost = self.cost[self.old_idx, self.prior_node[self.old_idx]]

    def feasible(self, total, budget: float):
        # same expression as within_budget(total / n, budget), vectorized
        return (np.asarray(total, dtype=float) / self.n) <= budget

    def min_costs(self, lo: int, hi: int) -> np.ndarray:
        """Row j: cheapest option of every VCP on location set ``lo + j``."""
        cols = self.sets[lo:hi]
        mins = self.cost_t[cols[:, 0]]
        for j in range(1, cols.shape[1]):
            np.minimum(mins, self.cost_t[cols[:, j]], out=mins)
        return mins

    def placement(self, sigma, serving) -> Placement:
        entity_at = {int(node): e for e, node in enumerate(sigma)}
        return Placement(
            tuple(int(x) for x in sigma),
            {p: entity_at[int(h)] for p, h in zip(self.vcps, serving)},
        )


@dataclass
class _Stage2Scan:
    budget: float
    set_index: np.ndarray  # indices of location sets meeting the budget
    r_loc: np.ndarray  # minimal LOC changes per such set
    forced: np.ndarray  # VCPs whose prior node is outside the set
    total: np.ndarray  # minimal total latency at that LOC count
    scanned: int


def _scan_stage2(inst: _Instance, budget: float, cap: Optional[int] = None) -> _Stage2Scan:
    """Per location set: fewest LOC changes within budget, and the latency then.

    Sets whose forced changes already exceed ``cap`` are dropped.  Without a
    cap the best count seen so far serves as one, which keeps every set that
    can still reach the minimum.
    """
    idx_parts, r_parts, f_parts, tot_parts = [], [], [], []
    n_sets = len(inst.sets)
    old_idx, q, kept = inst.old_idx, inst.prior_node[inst.old_idx], inst.kept_cost
    best = np.iinfo(np.int64).max
    for lo, hi in _chunks(n_sets, inst.n * inst.s.k):
        mins = inst.min_costs(lo, hi)
        tot_min = mins.sum(axis=1)
        ok = np.flatnonzero(inst.feasible(tot_min, budget))
        if ok.size == 0:
            continue
        if old_idx.size == 0:
            idx_parts.append(lo + ok)
            r_parts.append(np.zeros(ok.size, dtype=np.int64))
            f_parts.append(np.zeros(ok.size, dtype=np.int64))
            tot_parts.append(tot_min[ok])
            continue
        cols = inst.sets[lo + ok]
        member = np.zeros((ok.size, inst.t.n), dtype=bool)
        member[np.arange(ok.size)[:, None], cols] = True
        keep = member[:, q]  # (n_ok, n_old)
        forced = old_idx.size - keep.sum(axis=1)
        sel = forced <= (best if cap is None else cap)
        if not sel.any():
            continue
        ok, keep, forced = ok[sel], keep[sel], forced[sel]
        savings = np.where(keep, kept[None, :] - mins[ok][:, old_idx], 0.0)
        base = tot_min[ok] + savings.sum(axis=1)
        m = np.zeros(ok.size, dtype=np.int64)
        total = base.copy()
        tight = np.flatnonzero(~inst.feasible(base, budget))
        if tight.size:
            ordered = -np.sort(-savings[tight], axis=1)
            steps = np.hstack([np.zeros((tight.size, 1)), np.cumsum(ordered, axis=1)])
            totals = base[tight, None] - steps
            m[tight] = np.argmax(inst.feasible(totals, budget), axis=1)
            total[tight] = totals[np.arange(tight.size), m[tight]]
        r = forced + m
        best = min(best, int(r.min()))
        idx_parts.append(lo + ok)
        r_parts.append(r)
        f_parts.append(forced)
        tot_parts.append(total)
    if not idx_parts:
        raise InfeasibleBudget(f"no placement meets the latency budget {budget!r} ms")
    return _Stage2Scan(
        budget,
        np.concatenate(idx_parts),
        np.concatenate(r_parts),
        np.concatenate(f_parts),
        np.concatenate(tot_parts),
        n_sets,
    )


class _SetModel:
    """Options of every VCP when the hypervisors sit on location set ``S``."""

    def __init__(self, inst: _Instance, S: np.ndarray, budget: float):
        self.inst, self.S = inst, S
        self.cost = inst.cost[:, S]  # (n, k)
        mins = self.cost.min(axis=1)
        tot_min = mins.sum()
        # an option is usable only if the rest of the VCPs at their best can absorb it
        self.viable = inst.feasible(tot_min - mins[:, None] + self.cost, budget)
        moved = inst.old[:, None] & (S[None, :] != inst.prior_node[:, None])
        self.forced = moved.all(axis=1) & inst.old
        self.loc = (moved & ~self.forced[:, None]).astype(np.int64)

    def hv_flags(self, sigma) -> np.ndarray:
        pos_entity = np.empty(len(self.S), dtype=np.int64)
        for e, node in enumerate(sigma):
            pos_entity[np.searchsorted(self.S, node)] = e
        inst = self.inst
        return (inst.old[:, None] & (pos_entity[None, :] != inst.prior_entity[:, None])).astype(np.int64)

    def hv_lower_bounds(self, sigmas: np.ndarray, loc_limit: int) -> np.ndarray:
        """Budget-aware lower bound on entity changes for each labeling."""
        inst = self.inst
        pos_entity = np.empty_like(sigmas)
        order = np.searchsorted(self.S, sigmas)
        rows = np.arange(len(sigmas))[:, None]
        pos_entity[rows, order] = np.arange(sigmas.shape[1])[None, :]
        hv = inst.old[None, :, None] & (pos_entity[:, None, :] != inst.prior_entity[None, :, None])
        keep_hv = self.viable[None] & ~hv
        no_free = ~keep_hv.any(axis=2)
        stay = self.viable & (self.loc == 0)
        # VCPs that cannot stay spend a switch whatever the labeling
        spare = loc_limit - int((~stay.any(axis=1)).sum())
        needs_move = ~no_free & ~(keep_hv & stay[None]).any(axis=2) & stay.any(axis=1)[None]
        return no_free.sum(axis=1) + np.maximum(0, needs_move.sum(axis=1) - spare)


def _class_costs(cost, viable, loc, hv):
    """Cheapest viable option per (loc, hv) flag class, shape (n, 2, 2)."""
    out = np.full((cost.shape[0], 2, 2), np.inf)
    for a in (0, 1):
        for b in (0, 1):
            mask = viable & (loc == a) & (hv == b)
            out[:, a, b] = np.where(mask, cost, np.inf).min(axis=1)
    return out


def _dp_step(T: np.ndarray, classes: np.ndarray) -> np.ndarray:
    out = np.full_like(T, np.inf)
    for a in (0, 1):
        for b in (0, 1):
            c = classes[a, b]
            if not np.isfinite(c):
                continue
            rows, cols = T.shape[0] - a, T.shape[1] - b
            if rows <= 0 or cols <= 0:
                continue
            np.minimum(out[a:, b:], T[:rows, :cols] + c, out=out[a:, b:])
    return out


def _min_total_table(classes: np.ndarray, loc_limit: int, hv_limit: int) -> np.ndarray:
    """Min total latency with at most x switches and y entity changes."""
    T = np.zeros((loc_limit + 1, hv_limit + 1))
    for i in range(classes.shape[0]):
        T = _dp_step(T, classes[i])
    return T


def _lexmin_serving(cost, viable, loc, hv, loc_limit, hv_limit, target):
    """Smallest serving-node tuple (by position in S) with total exactly ``target``."""
    classes = _class_costs(cost, viable, loc, hv)
    n = cost.shape[0]
    suffix = [None] * (n + 1)
    suffix[n] = np.zeros((loc_limit + 1, hv_limit + 1))
    for i in range(n - 1, -1, -1):
        suffix[i] = _dp_step(suffix[i + 1], classes[i])
    x, y, prefix = loc_limit, hv_limit, 0.0
    chosen = []
    for i in range(n):
        for j in range(cost.shape[1]):
            if not viable[i, j]:
                continue
            a, b = loc[i, j], hv[i, j]
            if a > x or b > y:
                continue
            if prefix + cost[i, j] + suffix[i + 1][x - a, y - b] == target:
                chosen.append(j)
                prefix += cost[i, j]
                x, y = x - a, y - b
                break
        else:
            raise AssertionError("reconstruction lost the optimal total")
    return chosen


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        elapsed = (time.perf_counter() - t0) * 1000.0
        return SolveOutcome(
            out.placement, out.objectives, out.bounds, elapsed, out.nodes_explored, out.stage
        )

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _outcome(inst, placement, bounds, explored, stage) -> SolveOutcome:
    objectives = evaluate(inst.t, inst.s, placement, inst.prior)
    if not within_budget(objectives.l_avg, bounds.latency_budget):
        raise AssertionError("solver produced a placement over the latency budget")
    return SolveOutcome(placement, objectives, bounds, 0.0, explored, stage)


def _stage1(inst: _Instance) -> SolveOutcome:
    best_total, best_idx = np.inf, -1
    for lo, hi in _chunks(len(inst.sets), inst.n * inst.s.k):
        totals = inst.min_costs(lo, hi).sum(axis=1)
        i = int(np.argmin(totals))
        if totals[i] < best_total:
            best_total, best_idx = float(totals[i]), lo + i
    S = inst.sets[best_idx]
    serving = S[np.argmin(inst.cost[:, S], axis=1)]  # first minimum = smallest node
    placement = inst.placement(S, serving)
    l_star = best_total / inst.n
    return _outcome(inst, placement, StageBounds(l_star), len(inst.sets), 1)


def _stage2(inst: _Instance, bounds: StageBounds, scan: Optional[_Stage2Scan] = None) -> SolveOutcome:
    scan = scan or _scan_stage2(inst, bounds.latency_budget)
    r_star = int(scan.r_loc.min())
    hit = np.flatnonzero(scan.r_loc == r_star)
    best = hit[np.argmin(scan.total[hit])]  # first minimum = smallest set
    S = inst.sets[scan.set_index[best]]
    model = _SetModel(inst, S, bounds.latency_budget)
    zeros = np.zeros_like(model.loc)
    chosen = _lexmin_serving(
        model.cost, model.viable, model.loc, zeros,
        r_star - int(scan.forced[best]), 0, float(scan.total[best]),
    )
    placement = inst.placement(S, S[chosen])
    out_bounds = StageBounds(bounds.l_star, bounds.rho, r_star)
    return _outcome(inst, placement, out_bounds, scan.scanned, 2)


def _stage3(inst: _Instance, bounds: StageBounds, scan: Optional[_Stage2Scan] = None) -> SolveOutcome:
    budget = bounds.latency_budget
    scan = scan or _scan_stage2(inst, budget, bounds.r_loc_star)
    r_cap = bounds.r_loc_star if bounds.r_loc_star is not None else int(scan.r_loc.min())
    cand = np.flatnonzero(scan.r_loc <= r_cap)
    if cand.size == 0:
        raise InfeasibleBudget(f"no placement has at most {r_cap} LOC changes within budget")
    cand = cand[np.argsort(scan.set_index[cand], kind="stable")]

    explored = scan.scanned
    best_key = None  # (r_hv, total)
    best_set = None
    best_sigmas: list = []
    for c in cand:
        S = inst.sets[scan.set_index[c]]
        loc_limit = r_cap - int(scan.forced[c])
        model = _SetModel(inst, S, budget)
        sigmas = np.array(list(itertools.permutations(S)), dtype=np.int64)
        lbs = model.hv_lower_bounds(sigmas, loc_limit)
        for si in np.lexsort((np.arange(len(sigmas)), lbs)):
            if best_key is not None and lbs[si] > best_key[0]:
                break
            sigma = sigmas[si]
            hv = model.hv_flags(sigma)
            classes = _class_costs(model.cost, model.viable, model.loc, hv)
            # VCPs with a single usable class only shift the table
            finite = np.isfinite(classes).reshape(len(classes), 4)
            single = finite.sum(axis=1) == 1
            flat = np.where(finite[single], classes[single].reshape(-1, 4), 0.0)
            const_cost = flat.sum()
            which = finite[single].argmax(axis=1)
            const_loc = int((which // 2).sum())
            const_hv = int((which % 2).sum())
            if const_loc > loc_limit:
                continue
            hv_room = int(inst.old.sum()) if best_key is None else best_key[0]
            hv_room -= const_hv
            if hv_room < 0:
                continue
            explored += 1
            T = _min_total_table(classes[~single], loc_limit - const_loc, hv_room)
            last = T[-1] + const_cost
            ok = np.flatnonzero(inst.feasible(last, budget))
            if ok.size == 0:
                continue
            key = (int(ok[0]) + const_hv, float(last[ok[0]]))
            if best_key is None or key < best_key:
                best_key, best_set, best_sigmas = key, c, [tuple(sigma)]
            elif key == best_key and c == best_set:
                best_sigmas.append(tuple(sigma))
    if best_key is None:
        raise InfeasibleBudget("Stage 3 found no feasible labeling")

    S = inst.sets[scan.set_index[best_set]]
    loc_limit = r_cap - int(scan.forced[best_set])
    model = _SetModel(inst, S, budget)
    winner = None
    for sigma in sorted(best_sigmas):
        hv = model.hv_flags(np.array(sigma))
        chosen = _lexmin_serving(
            model.cost, model.viable, model.loc, hv, loc_limit, best_key[0], best_key[1]
        )
        serving = tuple(int(S[j]) for j in chosen)
        if winner is None or serving < winner[0]:
            winner = (serving, sigma)
    placement = inst.placement(winner[1], winner[0])
    out_bounds = StageBounds(bounds.l_star, bounds.rho, r_cap)
    return _outcome(inst, placement, out_bounds, explored, 3)


@_timed
def solve_stage1(t: Topology, s: Scenario) -> SolveOutcome:
    """Latency-optimal placement; entities labeled in increasing node order."""
    return _stage1(_Instance(t, s))


@_timed
def solve_stage2(t: Topology, s: Scenario, prior: Placement, bounds: StageBounds) -> SolveOutcome:
    """Fewest serving-node changes w.r.t. ``prior`` within the latency budget."""
    return _stage2(_Instance(t, s, prior), bounds)


@_timed
def solve_stage3(t: Topology, s: Scenario, prior: Placement, bounds: StageBounds) -> SolveOutcome:
    """Fewest serving-entity changes within the budget and the Stage-2 optimum."""
    return _stage3(_Instance(t, s, prior), bounds)


@_timed
def solve_multistage(
    t: Topology,
    s: Scenario,
    prior: Placement,
    rho: float,
    stage1: Optional[SolveOutcome] = None,
) -> SolveOutcome:
    """Run the three stages in order and return the Stage-3 outcome.

    ``stage1`` may carry a Stage-1 outcome already computed for ``(t, s)``.
    """
    inst = _Instance(t, s, prior)
    if stage1 is None:
        stage1 = _stage1(inst)
    bounds = StageBounds(stage1.objectives.l_avg, rho)
    scan = _scan_stage2(inst, bounds.latency_budget)
    out2 = _stage2(inst, bounds, scan)
    out3 = _stage3(inst, out2.bounds, scan)
    return SolveOutcome(
        out3.placement,
        out3.objectives,
        out3.bounds,
        0.0,
        stage1.nodes_explored + out2.nodes_explored + out3.nodes_explored,
        3,
    )
