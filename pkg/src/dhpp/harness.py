"""Rho sweeps over seeded scenario families and their aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import groupby
from pathlib import Path
from statistics import fmean
from typing import Iterable, Optional, Sequence

from .scenario import PRNG_NAME, ADD_SEED_XOR, add_vsdn, derived_add_seed, generate_scenario
from .solver import solve_multistage, solve_stage1
from .topo import Topology, load_topology

log = logging.getLogger(__name__)

MODES = ("single_add", "sequential_add")
CSV_HEADER = (
    "topology_ref", "k", "n_vsdns_initial", "seed", "rho", "l_star_ms", "l_avg_ms",
    "r_loc", "r_hv", "vcp_count", "solve_time_ms", "mode",
)
DEFAULT_RHO_GRID = tuple(i / 100 for i in range(11))


class EmptyGroup(ValueError):
    pass


@dataclass
class SweepConfig:
    topology: str = "AttMpls"
    k_values: list = field(default_factory=lambda: [3, 5, 7])
    n_vsdns_values: list = field(default_factory=lambda: [5, 10, 15, 20, 25, 30, 35, 40])
    seeds: list = field(default_factory=lambda: list(range(30)))
    rho_grid: list = field(default_factory=lambda: list(DEFAULT_RHO_GRID))
    mode: str = "single_add"
    size_range: Optional[list] = None
    n_adds: int = 5  # sequential_add only

    def __post_init__(self):
        if list(self.rho_grid) != sorted(self.rho_grid) or any(r < 0 for r in self.rho_grid):
            raise ValueError("rho_grid must be sorted ascending with non-negative values")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be pairwise distinct")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_adds < 1:
            raise ValueError("n_adds must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def cells(self) -> list[tuple[int, int, int]]:
        return [(k, n, seed) for k in self.k_values for n in self.n_vsdns_values for seed in self.seeds]


@dataclass(frozen=True)
class SweepResultRow:
    topology_ref: str
    k: int
    n_vsdns_initial: int
    seed: int
    rho: float
    l_star: float
    l_avg: float
    r_loc: int
    r_hv: int
    vcp_count: int
    solve_time_ms: float
    mode: str = "single_add"

    def sort_key(self):
        return (self.k, self.n_vsdns_initial, self.seed, self.rho)


def run_experiment_cell(
    t: Topology,
    k: int,
    n_vsdns: int,
    seed: int,
    rho_grid: Sequence[float],
    mode: str = "single_add",
    size_range=None,
    n_adds: int = 5,
) -> list[SweepResultRow]:
    """Solve one (k, n_vsdns, seed) cell for every rho in the grid.

    The prior is the latency-only optimum of the initial embedding.  In
    ``sequential_add`` mode each rho follows its own trajectory of
    ``n_adds`` additions and the row describes the last one.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    initial = generate_scenario(t, n_vsdns, k, seed, size_range)
    base_prior = solve_stage1(t, initial).placement if initial.vcps() else None
    steps = 1 if mode == "single_add" else n_adds

    scenarios = [initial]
    add_seed = seed
    for _ in range(steps):
        add_seed = derived_add_seed(add_seed)
        scenarios.append(add_vsdn(scenarios[-1], add_seed, t)[0])
    stage1 = {i: solve_stage1(t, sc) for i, sc in enumerate(scenarios) if i > 0}

    rows = []
    for rho in rho_grid:
        prior, elapsed = base_prior, 0.0
        for step in range(1, steps + 1):
            scenario = scenarios[step]
            if prior is None:
                out = stage1[step]
                r_loc = r_hv = 0
            else:
                out = solve_multistage(t, scenario, prior, rho, stage1=stage1[step])
                r_loc, r_hv = out.objectives.r_loc, out.objectives.r_hv
            elapsed += out.solve_time
            prior = out.placement
        rows.append(
            SweepResultRow(
                topology_ref=t.name,
                k=k,
                n_vsdns_initial=n_vsdns,
                seed=seed,
                rho=rho,
                l_star=stage1[steps].objectives.l_avg,
                l_avg=out.objectives.l_avg,
                r_loc=r_loc,
                r_hv=r_hv,
                vcp_count=len(scenarios[steps].vcps()),
                solve_time_ms=elapsed,
                mode=mode,
            )
        )
    return rows


def _cell_job(args):
    topology, cell, cfg = args
    t = load_topology(topology)
    k, n, seed = cell
    try:
        return cell, run_experiment_cell(
            t, k, n, seed, cfg.rho_grid, cfg.mode, cfg.size_range, cfg.n_adds
        ), None
    except Exception as exc:  # a failed cell must not abort the sweep
        return cell, [], f"{type(exc).__name__}: {exc}"


def run_sweep(cfg: SweepConfig, jobs: int = 1, progress=None):
    """Run every cell; returns (rows, failures) with rows in canonical order."""
    tasks = [(cfg.topology, cell, cfg) for cell in cfg.cells()]
    rows, failures = [], []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(_cell_job, tasks)
            collected = list(_report(results, len(tasks), progress))
    else:
        collected = list(_report(map(_cell_job, tasks), len(tasks), progress))
    for cell, cell_rows, error in collected:
        if error:
            log.warning("cell k=%s n=%s seed=%s failed: %s", *cell, error)
            failures.append({"k": cell[0], "n_vsdns": cell[1], "seed": cell[2], "error": error})
        rows.extend(cell_rows)
    rows.sort(key=SweepResultRow.sort_key)
    return rows, failures


def _report(results, total, progress):
    for done, item in enumerate(results, 1):
        if progress:
            progress(done, total, item[0])
        yield item


def aggregate(rows: Iterable[SweepResultRow], by: Sequence[str] = ("k", "n_vsdns_initial", "rho")) -> list[dict]:
    """Mean objectives per group, groups in ascending key order."""
    rows = list(rows)
    if not rows:
        raise EmptyGroup("no rows to aggregate")
    keyf = lambda r: tuple(getattr(r, name) for name in by)
    table = []
    for key, grp in groupby(sorted(rows, key=keyf), key=keyf):
        grp = list(grp)
        entry = dict(zip(by, key))
        entry.update(
            count=len(grp),
            l_star=fmean(r.l_star for r in grp),
            l_avg=fmean(r.l_avg for r in grp),
            r_loc=fmean(r.r_loc for r in grp),
            r_hv=fmean(r.r_hv for r in grp),
        )
        table.append(entry)
    return table


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def export_csv(rows: Iterable[SweepResultRow], sink=None) -> bytes:
    """RFC 4180 CSV of sweep rows; also written to ``sink`` when given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(rows, key=SweepResultRow.sort_key):
        writer.writerow([
            r.topology_ref, r.k, r.n_vsdns_initial, r.seed, _fmt(r.rho), _fmt(r.l_star),
            _fmt(r.l_avg), r.r_loc, r.r_hv, r.vcp_count, _fmt(r.solve_time_ms), r.mode,
        ])
    data = buf.getvalue().encode("utf-8")
    if sink is not None:
        if isinstance(sink, (str, Path)):
            Path(sink).write_bytes(data)
        else:
            sink.write(data)
    return data


def parse_csv(data) -> list[SweepResultRow]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.reader(io.StringIO(data, newline=""))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    out = []
    for rec in reader:
        out.append(SweepResultRow(
            rec[0], int(rec[1]), int(rec[2]), int(rec[3]), float(rec[4]), float(rec[5]),
            float(rec[6]), int(rec[7]), int(rec[8]), int(rec[9]), float(rec[10]), rec[11],
        ))
    return out


def summary(cfg: SweepConfig, rows: list[SweepResultRow], failures: list) -> dict:
    doc = {
        "config": asdict(cfg),
        "prng": PRNG_NAME,
        "add_seed_xor": hex(ADD_SEED_XOR),
        "failed_cells": failures,
        "rows": len(rows),
    }
    if rows:
        doc["by_k_n_rho"] = aggregate(rows)
        doc["by_k_rho"] = aggregate(rows, by=("k", "rho"))
    return doc
