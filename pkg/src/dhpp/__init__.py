"""Exact dynamic hypervisor placement for virtualized SDN networks."""

from .placement import (
    ObjectiveValues,
    Placement,
    ReconfigReport,
    count_reconfigurations,
    eval_avg_latency,
    evaluate,
    validate_placement,
    vcp_latency,
)
from .scenario import Scenario, Vcp, Vsdn, add_vsdn, generate_scenario
from .solver import (
    SolveOutcome,
    StageBounds,
    solve_multistage,
    solve_stage1,
    solve_stage2,
    solve_stage3,
)
from .oracle import brute_force_oracle
from .topo import Topology, all_pairs_latency, link_latency, load_topology, parse_topology

__version__ = "0.1.0"
