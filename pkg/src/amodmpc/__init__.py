"""Station-based mobility-on-demand fleet control.

Exact discrete-time fleet model, receding-horizon MILP dispatch with optional
battery constraints, a built-in branch-and-bound solver, classical dispatch
baselines, and a reproducible demand simulator.
"""

from amodmpc.model import (ArrivalBatch, ChargeParams, Control, EnRoute, HOLD,
                           Hold, Network, Pickup, Rebalance, SystemState,
                           Waiting, cost_jx, min_stabilizing_horizon, step,
                           validate_control, validate_state)
from amodmpc.mpc import (ArrivalForecast, MpcConfig, MpcDiagnostics,
                         build_mpc_problem, extract_first_control, mpc_step)
from amodmpc.controllers import MpcForecastController, MpcOracleController
from amodmpc.baselines import (CollaborativeDispatchController, Controller,
                               MarkovRedistributionController,
                               NearestNeighborController,
                               RealTimeRebalancingController)
from amodmpc.sim import (Metrics, RateSchedule, Scenario, Trace,
                         compute_metrics, generate_arrivals,
                         ingest_trip_records, run_simulation)
from amodmpc.branch_bound import SolverParams, brute_force_milp, solve_milp
from amodmpc.milp import LinearExpr, Problem, Sense, Solution, Status, VarKind
from amodmpc.lp_io import read_solution, write_lp

__version__ = "0.1.0"

__all__ = [
    "ArrivalBatch", "ArrivalForecast", "ChargeParams",
    "CollaborativeDispatchController", "Control", "Controller", "EnRoute",
    "HOLD", "Hold", "LinearExpr", "MarkovRedistributionController",
    "Metrics", "MpcConfig", "MpcDiagnostics", "MpcForecastController",
    "MpcOracleController", "NearestNeighborController", "Network", "Pickup",
    "Problem", "RateSchedule", "RealTimeRebalancingController", "Rebalance",
    "Scenario", "Sense", "Solution", "SolverParams", "Status", "SystemState",
    "Trace", "VarKind", "Waiting", "brute_force_milp", "build_mpc_problem",
    "compute_metrics", "cost_jx", "extract_first_control",
    "generate_arrivals", "ingest_trip_records", "min_stabilizing_horizon",
    "mpc_step", "read_solution", "run_simulation", "solve_milp", "step",
    "validate_control", "validate_state", "write_lp",
]
