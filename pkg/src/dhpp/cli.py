"""Command-line entry point: ``dhpp {topo,scenario,solve,sweep,oracle}``.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Machine-readable
output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .oracle import InstanceTooLarge, brute_force_oracle
from .placement import Placement, PlacementError
from .scenario import Scenario, ScenarioError, generate_scenario
from .solver import SolverError, solve_multistage, solve_stage1
from .topo import TopologyError, load_topology, topology_summary

log = logging.getLogger("dhpp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(doc: dict, out: str | None):
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_topology(path):
    try:
        return load_topology(path)
    except OSError as exc:
        raise RuntimeError(f"cannot read topology {path}: {exc}") from exc


def _load_scenario(path) -> Scenario:
    try:
        return Scenario.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from exc


def _load_prior(path):
    if path is None or path == "none":
        return None
    try:
        return Placement.loads(Path(path).read_text())
    except (OSError, ValueError, PlacementError) as exc:
        raise UsageError(f"cannot read prior placement {path}: {exc}") from exc


def cmd_topo_info(args):
    t = _load_topology(args.input)
    info = topology_summary(t)
    if args.json:
        _emit(info, None)
    else:
        print(f"{info['name']}: nodes: {info['nodes']}, links: {info['links']}")
        print(
            f"link latency ms: min {info['min_link_ms']:.4f}, max {info['max_link_ms']:.4f}, "
            f"mean {info['mean_link_ms']:.4f}; diameter {info['diameter_ms']:.4f} ms"
        )
    return 0


def cmd_scenario_gen(args):
    t = _load_topology(args.topology)
    size_range = None
    if args.size_min is not None or args.size_max is not None:
        lo = args.size_min if args.size_min is not None else min(2, t.n)
        hi = args.size_max if args.size_max is not None else min(10, t.n)
        size_range = (lo, hi)
    try:
        s = generate_scenario(t, args.n_vsdns, args.k, args.seed, size_range)
    except ScenarioError as exc:
        raise UsageError(str(exc)) from exc
    Path(args.output).write_text(s.dumps())
    print(f"vcps: {len(s.vcps())}")
    return 0


def _check_scenario(t, s):
    try:
        s.validate(t)
    except ScenarioError as exc:
        raise UsageError(str(exc)) from exc


def cmd_solve(args):
    t = _load_topology(args.topology)
    s = _load_scenario(args.scenario)
    _check_scenario(t, s)
    prior = _load_prior(args.prior)
    if prior is None:
        out = solve_stage1(t, s)
    else:
        out = solve_multistage(t, s, prior, args.rho)
    _emit(out.to_dict(), args.output)
    return 0


def cmd_oracle(args):
    t = _load_topology(args.topology)
    s = _load_scenario(args.scenario)
    _check_scenario(t, s)
    prior = _load_prior(args.prior)
    try:
        out = brute_force_oracle(t, s, prior, args.rho)
    except InstanceTooLarge as exc:
        raise UsageError(str(exc)) from exc
    _emit(out.to_dict(), args.output)
    return 0


def cmd_sweep(args):
    try:
        cfg = harness.SweepConfig.load(args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad sweep config {args.config}: {exc}") from exc
    topo = Path(cfg.topology)
    if not topo.is_absolute() and not topo.exists():
        beside = Path(args.config).parent / topo
        if beside.exists():
            cfg.topology = str(beside)
    _load_topology(cfg.topology)

    def progress(done, total, cell):
        print(f"[{done}/{total}] k={cell[0]} n_vsdns={cell[1]} seed={cell[2]}", file=sys.stderr)

    rows, failures = harness.run_sweep(cfg, jobs=args.jobs, progress=progress)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    harness.export_csv(rows, outdir / "rows.csv")
    (outdir / "summary.json").write_text(json.dumps(harness.summary(cfg, rows, failures), indent=2) + "\n")
    print(f"{len(rows)} rows, {len(failures)} failed cells -> {outdir}", file=sys.stderr)
    if failures and not rows:
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dhpp", description="Dynamic hypervisor placement solver and experiment harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    topo = sub.add_parser("topo", help="topology utilities")
    topo_sub = topo.add_subparsers(dest="topo_command", required=True, parser_class=_Parser)
    info = topo_sub.add_parser("info", help="print node/link counts and latency extremes")
    info.add_argument("--input", required=True, help="GML/GraphML file or bundled name (AttMpls)")
    info.add_argument("--json", action="store_true")
    info.set_defaults(func=cmd_topo_info)

    scen = sub.add_parser("scenario", help="scenario utilities")
    scen_sub = scen.add_subparsers(dest="scenario_command", required=True, parser_class=_Parser)
    gen = scen_sub.add_parser("gen", help="generate a seeded vSDN scenario")
    gen.add_argument("--topology", required=True)
    gen.add_argument("--n-vsdns", type=int, required=True)
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--size-min", type=int)
    gen.add_argument("--size-max", type=int)
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=cmd_scenario_gen)

    for name, func, helptext in (
        ("solve", cmd_solve, "run the staged solver"),
        ("oracle", cmd_oracle, "run the exhaustive oracle (small instances only)"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--topology", required=True)
        sp.add_argument("--scenario", required=True)
        sp.add_argument("--prior", default="none", help="prior placement JSON, or 'none' for Stage 1 only")
        sp.add_argument("--rho", type=float, default=0.0)
        sp.add_argument("-o", "--output", help="write JSON here instead of stdout")
        sp.set_defaults(func=func)

    sw = sub.add_parser("sweep", help="run a rho sweep from a JSON config")
    sw.add_argument("--config", required=True)
    sw.add_argument("-o", "--output", required=True, help="output directory")
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "rho", 0.0) < 0:
            parser.error("--rho must be non-negative")
        if getattr(args, "jobs", 1) < 1:
            parser.error("--jobs must be at least 1")
    except SystemExit as exc:  # argparse exits on usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dhpp: error: {exc}", file=sys.stderr)
        return 1
    except (TopologyError, SolverError, PlacementError, RuntimeError, OSError) as exc:
        print(f"dhpp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
