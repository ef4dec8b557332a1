"""Receding-horizon controllers wrapping the MILP optimizer.

Two variants: MPCS runs on stochastic arrival forecasts resampled once per
sampling epoch from known rates; MPCF is the clairvoyant upper baseline fed
the true future arrivals.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .baselines import Controller, StepContext
from .mpc import MpcConfig, MpcDiagnostics, mpc_step
from .model import ArrivalBatch, ChargeParams, Control
from .simplex import SolverParams

RateFn = Callable[[int], Sequence[Sequence[float]]]


class MpcController(Controller):
    """Shared machinery: build forecast, run one optimizer step, log diagnostics."""

    def __init__(self, cfg: MpcConfig, cp: Optional[ChargeParams] = None,
                 params: Optional[SolverParams] = None):
        self.cfg = cfg
        self.cp = cp
        self.params = params
        self.diagnostics: list[MpcDiagnostics] = []

    def reset(self) -> None:
        self.diagnostics = []

    def forecast(self, ctx: StepContext) -> list[ArrivalBatch]:
        raise NotImplementedError

    def control(self, ctx: StepContext) -> Control:
        ctrl, diag = mpc_step(ctx.state, self.forecast(ctx), ctx.net,
                              self.cfg, self.cp, params=self.params)
        self.diagnostics.append(diag)
        return ctrl


class MpcForecastController(MpcController):
    """MPC on rate-sampled arrival forecasts (resampled every sampling epoch)."""

    name = "MPCS"

    def __init__(self, cfg: MpcConfig, rates: RateFn,
                 rng: np.random.Generator,
                 sampling_epoch: int = 20,
                 cp: Optional[ChargeParams] = None,
                 params: Optional[SolverParams] = None):
        super().__init__(cfg, cp, params)
        if sampling_epoch < 1:
            raise ValueError("sampling epoch must be >= 1")
        self.rates = rates
        self.rng = rng
        self.sampling_epoch = sampling_epoch
        self._cache: dict[int, ArrivalBatch] = {}   # absolute step -> sample

    def reset(self) -> None:
        super().reset()
        self._cache = {}

    def _sample(self, step: int, n: int) -> ArrivalBatch:
        if step not in self._cache:
            lam = self.rates(step)
            c = tuple(tuple(int(self.rng.poisson(lam[i][j])) if j != i else 0
                            for j in range(n)) for i in range(n))
            self._cache[step] = ArrivalBatch(time=step, c=c)
        return self._cache[step]

    def forecast(self, ctx: StepContext) -> list[ArrivalBatch]:
        n = ctx.net.n_stations
        if ctx.step % self.sampling_epoch == 0:
            self._cache = {}
        batches = [ArrivalBatch.zero(n, ctx.step)]
        for tau in range(1, self.cfg.t_hor):
            batches.append(self._sample(ctx.step + tau, n))
        return batches


class MpcOracleController(MpcController):
    """MPC fed the realized future arrivals (performance upper baseline)."""

    name = "MPCF"

    def forecast(self, ctx: StepContext) -> list[ArrivalBatch]:
        n = ctx.net.n_stations
        batches = [ArrivalBatch.zero(n, ctx.step)]
        for tau in range(1, self.cfg.t_hor):
            idx = tau - 1
            if idx < len(ctx.future):
                batches.append(ctx.future[idx])
            else:
                batches.append(ArrivalBatch.zero(n, ctx.step + tau))
        return batches
