"""Self-stabilizing (k, k-1)-ruling sets: simulator, checkers and applications."""

from .graph import Graph, GraphError, ball, bfs_distances, generate, parse_edge_list, \
    write_edge_list
from .protocol import (F_DEFAULT, Arrow, Configuration, EngineFault, NodeState, ProtocolParams,
                       RuleId, apply_step, eligible_rules, random_configuration)
from .scheduler import (CentralRandom, RoundRobinFair, RunResult, Scripted, SubsetRandom,
                        Synchronous, TerminationReason, make_daemon, replay_trace, run)
from .verifier import (check_clock_paths, inject_faults, is_legitimate, is_ruling_set, leaders,
                       locally_legitimate_leaders)
from .modelcheck import state_count, verify_closure, verify_reachability
from .layered import LayeredConfiguration, extract_coloring, run_coloring, verify_coloring
from .localsim import (BallMap, direct_ball_map, is_maximal_independent_set, is_proper_coloring,
                       run_ball_maps, solve_pipeline)

__version__ = "0.1.0"

__all__ = [
    "Graph", "GraphError", "ball", "bfs_distances", "generate", "parse_edge_list",
    "write_edge_list",
    "F_DEFAULT", "Arrow", "Configuration", "EngineFault", "NodeState", "ProtocolParams",
    "RuleId", "apply_step", "eligible_rules", "random_configuration",
    "CentralRandom", "RoundRobinFair", "RunResult", "Scripted", "SubsetRandom", "Synchronous",
    "TerminationReason", "make_daemon", "replay_trace", "run",
    "check_clock_paths", "inject_faults", "is_legitimate", "is_ruling_set", "leaders",
    "locally_legitimate_leaders",
    "state_count", "verify_closure", "verify_reachability",
    "LayeredConfiguration", "extract_coloring", "run_coloring", "verify_coloring",
    "BallMap", "direct_ball_map", "is_maximal_independent_set", "is_proper_coloring",
    "run_ball_maps", "solve_pipeline",
]
