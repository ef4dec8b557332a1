"""YAML configuration for scenarios, controllers, and runs.

Two document kinds:

* a scenario file describing network, fleet, initial demand/charges, arrival
  rates, and duration;
* a run config naming the scenario file, the controllers to run, seeds,
  solver selection, and the output directory.

Unknown keys are rejected with their full key path; numeric fields accept
ints, floats, and exact-fraction strings like ``"1/5"``.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .baselines import (CollaborativeDispatchController, Controller,
                        MarkovRedistributionController,
                        NearestNeighborController,
                        RealTimeRebalancingController)
from .controllers import MpcForecastController, MpcOracleController
from .milp import Problem, Solution, to_frac
from .model import (ChargeParams, EnRoute, Network, SystemState, Waiting)
from .mpc import MpcConfig
from .lp_io import read_solution, write_lp
from .sim import RateSchedule, Scenario
from .simplex import SolverParams


class ConfigError(ValueError):
    """Invalid configuration; message carries the offending key path."""


def _require_keys(d: dict, allowed: set[str], required: set[str],
                  path: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {sorted(missing)}")


def _load_yaml(path: Path) -> Any:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None


def _frac(value, path: str) -> Fraction:
    try:
        return to_frac(value)
    except (ValueError, TypeError, ZeroDivisionError):
        raise ConfigError(f"{path}: expected a number or fraction string, "
                          f"got {value!r}") from None


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

_SCENARIO_KEYS = {"network", "vehicles", "demand", "rates", "duration",
                  "charging", "seed"}


def parse_scenario(doc: Any, source: str = "scenario") -> Scenario:
    _require_keys(doc, _SCENARIO_KEYS,
                  {"network", "vehicles", "duration"}, source)

    netdoc = doc["network"]
    _require_keys(netdoc, {"travel_time"}, {"travel_time"},
                  f"{source}.network")
    tt = netdoc["travel_time"]
    if not isinstance(tt, list) or not all(isinstance(r, list) for r in tt):
        raise ConfigError(f"{source}.network.travel_time: expected a matrix")
    net = Network(len(tt), tuple(tuple(int(x) for x in row) for row in tt))
    n = net.n_stations

    vehicles = []
    vdoc = doc["vehicles"]
    if not isinstance(vdoc, list) or not vdoc:
        raise ConfigError(f"{source}.vehicles: expected a nonempty list")
    for idx, v in enumerate(vdoc):
        vp = f"{source}.vehicles[{idx}]"
        if isinstance(v, int):
            vehicles.append(Waiting(v))
        elif isinstance(v, dict):
            _require_keys(v, {"station", "dest", "remaining"}, set(), vp)
            if "station" in v:
                vehicles.append(Waiting(int(v["station"])))
            elif "dest" in v and "remaining" in v:
                vehicles.append(EnRoute(int(v["dest"]), int(v["remaining"])))
            else:
                raise ConfigError(f"{vp}: give `station` or `dest`+`remaining`")
        else:
            raise ConfigError(f"{vp}: expected station id or mapping")

    zero = tuple((0,) * n for _ in range(n))
    demand = zero
    if "demand" in doc:
        ddoc = doc["demand"]
        if not isinstance(ddoc, list):
            raise ConfigError(f"{source}.demand: expected a matrix")
        demand = tuple(tuple(int(x) for x in row) for row in ddoc)

    cp = None
    charges = None
    if "charging" in doc:
        cdoc = doc["charging"]
        _require_keys(cdoc, {"alpha_c", "alpha_d", "charges"},
                      {"alpha_c", "alpha_d", "charges"}, f"{source}.charging")
        cp = ChargeParams(_frac(cdoc["alpha_c"], f"{source}.charging.alpha_c"),
                          _frac(cdoc["alpha_d"], f"{source}.charging.alpha_d"))
        raw = cdoc["charges"]
        if isinstance(raw, list):
            charges = tuple(_frac(x, f"{source}.charging.charges[{i}]")
                            for i, x in enumerate(raw))
        else:
            q = _frac(raw, f"{source}.charging.charges")
            charges = (q,) * len(vehicles)
        if len(charges) != len(vehicles):
            raise ConfigError(f"{source}.charging.charges: expected "
                              f"{len(vehicles)} values")

    if "rates" in doc:
        rdoc = doc["rates"]
        if isinstance(rdoc, list) and rdoc and isinstance(rdoc[0], dict):
            pieces = []
            for idx, piece in enumerate(rdoc):
                pp = f"{source}.rates[{idx}]"
                _require_keys(piece, {"start", "matrix"}, {"start", "matrix"},
                              pp)
                pieces.append((int(piece["start"]),
                               tuple(tuple(float(x) for x in row)
                                     for row in piece["matrix"])))
            schedule = RateSchedule(tuple(pieces))
        elif isinstance(rdoc, list):
            schedule = RateSchedule.constant(rdoc)
        else:
            raise ConfigError(f"{source}.rates: expected matrix or piece list")
    else:
        schedule = RateSchedule.constant(zero)

    try:
        return Scenario(
            net=net,
            initial_state=SystemState(time=0, demand=demand,
                                      vehicles=tuple(vehicles),
                                      charges=charges),
            schedule=schedule,
            duration=int(doc["duration"]),
            seed=int(doc.get("seed", 0)),
            cp=cp,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_scenario(path: Path) -> Scenario:
    return parse_scenario(_load_yaml(path), str(path))


# ---------------------------------------------------------------------------
# controller specs
# ---------------------------------------------------------------------------

_CONTROLLER_KEYS = {
    "nn": {"type"},
    "cd": {"type", "threshold"},
    "mr": {"type"},
    "rr": {"type", "epoch"},
    "mpcs": {"type", "horizon", "rho1", "rho2", "rho_c", "rho_u",
             "sampling_epoch"},
    "mpcf": {"type", "horizon", "rho1", "rho2", "rho_c", "rho_u"},
}


def _mpc_config(spec: dict, path: str, charging: bool) -> MpcConfig:
    kwargs = {}
    for key in ("rho1", "rho2", "rho_c", "rho_u"):
        if key in spec:
            kwargs[key] = _frac(spec[key], f"{path}.{key}")
    return MpcConfig(t_hor=int(spec["horizon"]), charging_enabled=charging,
                     **kwargs)


def build_controller(spec: Any, scenario: Scenario, seed: int,
                     solver=None, params: Optional[SolverParams] = None
                     ) -> Controller:
    """Instantiate one controller from its config mapping, seeded per run."""
    path = "controller"
    if isinstance(spec, str):
        spec = {"type": spec}
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"{path}: expected a mapping with a `type` key")
    kind = str(spec["type"]).lower()
    if kind not in _CONTROLLER_KEYS:
        raise ConfigError(f"{path}.type: unknown controller {kind!r}; "
                          f"one of {sorted(_CONTROLLER_KEYS)}")
    _require_keys(spec, _CONTROLLER_KEYS[kind], {"type"}, path)
    charging = scenario.cp is not None

    if kind == "nn":
        return NearestNeighborController(np.random.default_rng([seed, 1]))
    if kind == "cd":
        return CollaborativeDispatchController(
            threshold=int(spec.get("threshold", 4)), params=params)
    if kind == "mr":
        return MarkovRedistributionController(
            np.random.default_rng([seed, 1]),
            demand_estimate=scenario.schedule.rate_at, params=params)
    if kind == "rr":
        return RealTimeRebalancingController(
            epoch=int(spec.get("epoch", 20)), params=params)
    if "horizon" not in spec:
        raise ConfigError(f"{path}: MPC controllers need `horizon`")
    cfg = _mpc_config(spec, path, charging)
    if kind == "mpcs":
        ctl = MpcForecastController(
            cfg, rates=scenario.schedule.rate_at,
            rng=np.random.default_rng([seed, 2]),
            sampling_epoch=int(spec.get("sampling_epoch", 20)),
            cp=scenario.cp, params=params)
    else:
        ctl = MpcOracleController(cfg, cp=scenario.cp, params=params)
    if solver is not None:
        ctl_control = ctl  # MPC controllers accept a custom solver below
        _install_solver(ctl_control, solver)
    return ctl


def _install_solver(controller, solver) -> None:
    import types
    from .mpc import mpc_step

    def control(self, ctx):
        ctrl, diag = mpc_step(ctx.state, self.forecast(ctx), ctx.net,
                              self.cfg, self.cp, solver=solver,
                              params=self.params)
        self.diagnostics.append(diag)
        return ctrl

    controller.control = types.MethodType(control, controller)


# ---------------------------------------------------------------------------
# run configs
# ---------------------------------------------------------------------------

_RUN_KEYS = {"scenario", "controllers", "controller", "seeds", "solver",
             "external_command", "out_dir", "step_budget"}


@dataclass
class RunConfig:
    scenario_path: Path
    scenario: Scenario
    controller_specs: list[Any]
    seeds: list[int]
    solver: str = "builtin"
    external_command: Optional[str] = None
    out_dir: Optional[Path] = None
    step_budget: Optional[int] = None


def load_run_config(path: Path) -> RunConfig:
    doc = _load_yaml(path)
    _require_keys(doc, _RUN_KEYS, {"scenario"}, str(path))
    if "controllers" in doc and "controller" in doc:
        raise ConfigError(f"{path}: give `controller` or `controllers`, not both")
    scenario_path = (path.parent / str(doc["scenario"])).resolve()
    if not scenario_path.exists():
        raise ConfigError(f"{path}.scenario: no such file {scenario_path}")
    scenario = load_scenario(scenario_path)
    specs = doc.get("controllers")
    if specs is None:
        specs = [doc["controller"]] if "controller" in doc else []
    if not isinstance(specs, list):
        raise ConfigError(f"{path}.controllers: expected a list")
    seeds = doc.get("seeds", [scenario.seed])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError(f"{path}.seeds: expected an integer list")
    solver = str(doc.get("solver", "builtin"))
    if solver not in ("builtin", "external"):
        raise ConfigError(f"{path}.solver: expected builtin or external")
    ext = doc.get("external_command")
    if solver == "external" and not ext:
        raise ConfigError(f"{path}: solver external requires external_command "
                          "(e.g. \"mysolver {lp} {sol}\")")
    out_dir = Path(doc["out_dir"]) if "out_dir" in doc else None
    budget = int(doc["step_budget"]) if "step_budget" in doc else None
    return RunConfig(scenario_path=scenario_path, scenario=scenario,
                     controller_specs=specs, seeds=seeds, solver=solver,
                     external_command=ext, out_dir=out_dir, step_budget=budget)


def make_external_solver(command: str, params: Optional[SolverParams] = None):
    """Bridge to an external MILP solver via LP files.

    `command` must contain `{lp}` and `{sol}` placeholders; it is expected to
    read the LP file and write a plain `name value` solution file.
    """
    if "{lp}" not in command or "{sol}" not in command:
        raise ConfigError("external_command must contain {lp} and {sol}")

    def solver(prob: Problem) -> Solution:
        with tempfile.TemporaryDirectory(prefix="amodmpc") as tmp:
            lp_path = Path(tmp) / "problem.lp"
            sol_path = Path(tmp) / "solution.sol"
            with lp_path.open("w") as fh:
                write_lp(prob, fh)
            argv = [a.format(lp=str(lp_path), sol=str(sol_path))
                    for a in shlex.split(command)]
            result = subprocess.run(argv, capture_output=True, text=True)
            if result.returncode != 0:
                raise RuntimeError(
                    f"external solver failed ({result.returncode}): "
                    f"{result.stderr.strip()[:500]}")
            with sol_path.open() as fh:
                return read_solution(fh, prob)

    return solver
