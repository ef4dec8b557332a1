"""Discrete-event fleet simulator with seeded stochastic arrivals.

One run: fold the step's arrivals into the waiting-demand matrix, let the
controller act, validate its control against the physics, match pickups to
the oldest pending request on each origin-destination pair, then advance the
state. Traces record enough to replay and to score controllers; identical
seeds give identical arrival streams across controllers (common random
numbers).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO, Union

import numpy as np

from .baselines import Controller, Request, StepContext
from .model import (ArrivalBatch, ChargeParams, Control, Network, Pickup,
                    SystemState, step as step_model, validate_control,
                    validate_state)


class SimulationError(RuntimeError):
    pass


class ControlRejected(SimulationError):
    """The controller emitted a control that violates the model physics."""


# ---------------------------------------------------------------------------
# arrival processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateSchedule:
    """Piecewise-constant Poisson rate matrices (customers per step).

    `pieces` maps a start step to the rate matrix in force from that step
    until the next piece begins. A piece at step 0 is required.
    """

    pieces: tuple[tuple[int, tuple[tuple[float, ...], ...]], ...]

    def __post_init__(self):
        norm = []
        for start, mat in self.pieces:
            norm.append((int(start), tuple(tuple(float(x) for x in row)
                                           for row in mat)))
        norm.sort(key=lambda p: p[0])
        object.__setattr__(self, "pieces", tuple(norm))
        if not self.pieces or self.pieces[0][0] != 0:
            raise ValueError("rate schedule must start at step 0")
        n = len(self.pieces[0][1])
        for start, mat in self.pieces:
            if len(mat) != n or any(len(r) != n for r in mat):
                raise ValueError("rate matrices must be square and same size")
            if any(x < 0 for row in mat for x in row):
                raise ValueError("rates must be nonnegative")
            if any(mat[i][i] != 0 for i in range(n)):
                raise ValueError("same-station rates must be zero")
        starts = [s for s, _ in self.pieces]
        if len(set(starts)) != len(starts):
            raise ValueError("duplicate piece start steps")

    @classmethod
    def constant(cls, mat) -> "RateSchedule":
        return cls(((0, tuple(tuple(row) for row in mat)),))

    @property
    def n_stations(self) -> int:
        return len(self.pieces[0][1])

    def rate_at(self, step: int):
        current = self.pieces[0][1]
        for start, mat in self.pieces:
            if start <= step:
                current = mat
            else:
                break
        return current


def generate_arrivals(schedule: RateSchedule, n_steps: int,
                      rng: np.random.Generator,
                      start: int = 0) -> list[ArrivalBatch]:
    """Seeded Poisson arrival counts for steps start..start+n_steps-1."""
    n = schedule.n_stations
    out = []
    for t in range(start, start + n_steps):
        lam = schedule.rate_at(t)
        c = tuple(tuple(int(rng.poisson(lam[i][j])) if j != i else 0
                        for j in range(n)) for i in range(n))
        out.append(ArrivalBatch(time=t, c=c))
    return out


def ingest_trip_records(source: Union[str, TextIO, Iterable[str]],
                        n_stations: int,
                        bin_width: int) -> RateSchedule:
    """Estimate a piecewise-constant rate schedule from historical trips.

    Expects CSV rows `pickup_step,origin_station,dest_station` (a header row
    with those names is accepted). Rates are empirical counts per step within
    consecutive bins of `bin_width` steps.
    """
    if bin_width < 1:
        raise ValueError("bin width must be >= 1")
    if isinstance(source, str):
        source = io.StringIO(source)
    counts: dict[int, list[list[int]]] = {}
    max_bin = 0
    reader = csv.reader(source)
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if lineno == 1 and row[0].strip().lower() == "pickup_step":
            continue
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            t, i, j = (int(x.strip()) for x in row)
        except ValueError:
            raise ValueError(f"line {lineno}: fields must be integers") from None
        if t < 0:
            raise ValueError(f"line {lineno}: negative pickup step")
        if not (0 <= i < n_stations) or not (0 <= j < n_stations):
            raise ValueError(f"line {lineno}: station id out of range "
                             f"0..{n_stations - 1}")
        if i == j:
            raise ValueError(f"line {lineno}: origin equals destination")
        b = t // bin_width
        mat = counts.setdefault(
            b, [[0] * n_stations for _ in range(n_stations)])
        mat[i][j] += 1
        max_bin = max(max_bin, b)
    pieces = []
    zero = tuple((0.0,) * n_stations for _ in range(n_stations))
    for b in range(max_bin + 1):
        if b in counts:
            mat = tuple(tuple(v / bin_width for v in row) for row in counts[b])
        else:
            mat = zero
        pieces.append((b * bin_width, mat))
    if not pieces:
        pieces = [(0, zero)]
    return RateSchedule(tuple(pieces))


# ---------------------------------------------------------------------------
# scenario / trace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    net: Network
    initial_state: SystemState
    schedule: RateSchedule
    duration: int
    seed: int
    cp: Optional[ChargeParams] = None
    # extra arrival steps generated past the horizon so oracle controllers
    # can see the future; does not affect the shared arrival stream prefix
    future_window: int = 32

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        if self.schedule.n_stations != self.net.n_stations:
            raise ValueError("rate schedule size does not match network")
        bad = validate_state(self.initial_state, self.net)
        if bad:
            raise ValueError("invalid initial state: " + "; ".join(bad))
        if self.cp is not None and self.initial_state.charges is None:
            raise ValueError("charge params given but state has no charges")


@dataclass
class Trace:
    scenario: Scenario
    controller_name: str
    arrivals: list[ArrivalBatch]
    states: list[SystemState]          # duration + 1 entries
    controls: list[Control]
    requests: list[Request]
    wait_series: list[float]           # mean wait of pending requests, per step
    pending_series: list[int]
    mean_charge_series: list[float]

    @property
    def served(self) -> list[Request]:
        return [r for r in self.requests if r.pickup_step is not None]


@dataclass(frozen=True)
class Metrics:
    generated: int
    served: int
    pending_at_end: int
    mean_wait_served: Optional[float]
    peak_wait: float
    half_peak_fraction: float
    mean_pending: float
    final_mean_charge: Optional[float]

    def as_dict(self) -> dict:
        return {
            "generated": self.generated,
            "served": self.served,
            "pending_at_end": self.pending_at_end,
            "mean_wait_served": self.mean_wait_served,
            "peak_wait": self.peak_wait,
            "half_peak_fraction": self.half_peak_fraction,
            "mean_pending": self.mean_pending,
            "final_mean_charge": self.final_mean_charge,
        }


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

def _add_matrices(a, b):
    n = len(a)
    return tuple(tuple(a[i][j] + b[i][j] for j in range(n)) for i in range(n))


def run_simulation(scenario: Scenario, controller: Controller) -> Trace:
    net, cp = scenario.net, scenario.cp
    n = net.n_stations
    rng = np.random.default_rng([scenario.seed, 0])
    arrivals = generate_arrivals(
        scenario.schedule, scenario.duration + scenario.future_window, rng)

    controller.reset()
    state = scenario.initial_state
    queue: list[Request] = []
    requests: list[Request] = []
    states = [state]
    controls: list[Control] = []
    wait_series: list[float] = []
    pending_series: list[int] = []
    charge_series: list[float] = []
    zero = ArrivalBatch.zero(n)
    next_id = 0

    # customers already waiting at the start count as step-0 requests so
    # pickup matching stays in lockstep with the demand matrix
    for i in range(n):
        for j in range(n):
            for _ in range(int(state.demand[i][j])):
                req = Request(id=next_id, origin=i, dest=j, arrival_step=0)
                next_id += 1
                queue.append(req)
                requests.append(req)

    for t in range(scenario.duration):
        batch = arrivals[t]
        # arrivals join the waiting demand before the controller acts
        state = SystemState(time=state.time,
                            demand=_add_matrices(state.demand, batch.c),
                            vehicles=state.vehicles,
                            charges=state.charges)
        for i in range(n):
            for j in range(n):
                for _ in range(batch.c[i][j]):
                    req = Request(id=next_id, origin=i, dest=j, arrival_step=t)
                    next_id += 1
                    queue.append(req)
                    requests.append(req)

        waits = [t - r.arrival_step for r in queue]
        wait_series.append(float(np.mean(waits)) if waits else 0.0)
        pending_series.append(len(queue))

        ctx = StepContext(state=state, queue=list(queue), net=net, step=t,
                          future=arrivals[t + 1:])
        ctrl = controller.control(ctx)
        bad = validate_control(state, ArrivalBatch.zero(n, state.time), ctrl,
                               net, cp)
        if bad:
            raise ControlRejected(
                f"step {t}, controller {controller.name}: " + "; ".join(bad))

        for k, act in enumerate(ctrl.actions):
            if isinstance(act, Pickup):
                req = next(r for r in queue
                           if r.origin == act.origin and r.dest == act.dest)
                req.pickup_step = t
                req.assigned_vehicle = k
                queue.remove(req)

        state = step_model(state, ctrl, zero, net, cp)
        controls.append(ctrl)
        states.append(state)
        if state.charges is not None:
            charge_series.append(float(sum(state.charges)) / len(state.charges))

    return Trace(scenario=scenario, controller_name=controller.name,
                 arrivals=arrivals[:scenario.duration], states=states,
                 controls=controls, requests=requests,
                 wait_series=wait_series, pending_series=pending_series,
                 mean_charge_series=charge_series)


def compute_metrics(trace: Trace) -> Metrics:
    served = trace.served
    waits = [r.pickup_step - r.arrival_step for r in served]
    peak = max(trace.wait_series) if trace.wait_series else 0.0
    if peak > 0:
        half = sum(1 for w in trace.wait_series if w >= 0.5 * peak)
        half_frac = half / len(trace.wait_series)
    else:
        half_frac = 0.0
    return Metrics(
        generated=len(trace.requests),
        served=len(served),
        pending_at_end=len(trace.requests) - len(served),
        mean_wait_served=(sum(waits) / len(waits)) if waits else None,
        peak_wait=peak,
        half_peak_fraction=half_frac,
        mean_pending=(sum(trace.pending_series) / len(trace.pending_series)
                      if trace.pending_series else 0.0),
        final_mean_charge=(trace.mean_charge_series[-1]
                           if trace.mean_charge_series else None),
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def trace_to_csv(trace: Trace, out: TextIO) -> None:
    """Per-step summary rows, deterministic for identical runs."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["step", "arrived", "pending", "mean_wait_pending",
                     "served_this_step", "mean_charge"])
    served_at = [0] * trace.scenario.duration
    for r in trace.served:
        served_at[r.pickup_step] += 1
    for t in range(trace.scenario.duration):
        charge = (f"{trace.mean_charge_series[t]:.6f}"
                  if trace.mean_charge_series else "")
        writer.writerow([t, trace.arrivals[t].total, trace.pending_series[t],
                         f"{trace.wait_series[t]:.6f}", served_at[t], charge])


def requests_to_csv(trace: Trace, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "origin", "dest", "arrival_step", "pickup_step",
                     "vehicle", "wait"])
    for r in trace.requests:
        wait = "" if r.pickup_step is None else r.pickup_step - r.arrival_step
        writer.writerow([r.id, r.origin, r.dest, r.arrival_step,
                         "" if r.pickup_step is None else r.pickup_step,
                         "" if r.assigned_vehicle is None else r.assigned_vehicle,
                         wait])


def metrics_to_json(metrics: Metrics, out: TextIO) -> None:
    json.dump(metrics.as_dict(), out, indent=2, sort_keys=True)
    out.write("\n")
