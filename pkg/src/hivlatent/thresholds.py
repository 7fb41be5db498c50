"""Time-to-eradication metrics under protease-inhibitor therapy.

``P_n(r)`` is the first time the viral load of the three-component model
falls to ``10**-n`` virions/ml when the efficacy is chosen so that the treated
reproduction number equals ``r``; ``Q_n(r)`` is the same quantity for the
latent-infection model with ``R_L^eps = r``. Therapy is PI-only
(``eps_RT = 0``). Runs that never reach the threshold within ``t_max``
report ``math.inf``; a load already at or below the threshold gives 0.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .analysis import r0, r_l
from .errors import DomainError, HivModelError, ParameterError
from .integrator import Direction, EventSpec, SolverConfig, first_crossing, integrate
from .model import CoreParams, Efficacy, LatentParams, State3, State4, vector_field_3cm, vector_field_4cm
from .presets import INIT_DEFAULT, INIT_DEFAULT_3

__all__ = [
    "Metric",
    "ThresholdQuery",
    "ThresholdResult",
    "SweepRow",
    "DEFAULT_SOLVER",
    "efficacy_for_ratio",
    "p_n",
    "q_n",
    "evaluate",
    "sweep",
]

DEFAULT_SOLVER = SolverConfig(t_max=1e4)


class Metric(str, enum.Enum):
    """``P`` integrates the three-component model, ``Q`` the latent model."""

    P = "P"
    Q = "Q"


Params = Union[CoreParams, LatentParams]


@dataclass(frozen=True)
class ThresholdResult:
    time: float
    epsilon_used: float
    r_achieved: float
    worst_undershoot: float = 0.0

    @property
    def infinite(self) -> bool:
        return math.isinf(self.time)


@dataclass(frozen=True)
class ThresholdQuery:
    metric: Metric
    n: int
    r: float
    params: Params
    initials: Optional[Union[State3, State4]] = None
    solver: SolverConfig = field(default_factory=lambda: DEFAULT_SOLVER)


@dataclass(frozen=True)
class SweepRow:
    r: float
    epsilon: float
    time: float
    error: Optional[str] = None


def _untreated_ratio(metric: Metric, params: Params) -> float:
    if Metric(metric) is Metric.P:
        core = params.core if isinstance(params, LatentParams) else params
        return r0(core)
    if not isinstance(params, LatentParams):
        raise ParameterError("the Q metric needs latent-model parameters")
    return r_l(params)


def efficacy_for_ratio(metric: Metric, params: Params, r: float) -> float:
    """PI efficacy ``1 - r / R_untreated`` that pins the treated reproduction number at ``r``."""
    R = _untreated_ratio(metric, params)
    if not (r > 0 and r <= R):
        raise DomainError(f"target ratio r={r!r} must lie in (0, {R!r}]")
    return 1.0 - r / R


def _check_n(n: int) -> None:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"threshold exponent n must be a positive integer, got {n!r}")


def p_n(
    core: CoreParams,
    init: Optional[State3] = None,
    n: int = 5,
    r: float = 1.0,
    solver: SolverConfig = DEFAULT_SOLVER,
) -> ThresholdResult:
    """First time ``V <= 10**-n`` for the treated three-component model with ``R_0^eps = r``."""
    _check_n(n)
    init = INIT_DEFAULT_3 if init is None else State3(*init)
    eps = efficacy_for_ratio(Metric.P, core, r)
    eff = Efficacy(eps_RT=0.0, eps_PI=eps)
    event = EventSpec(component=2, threshold=10.0 ** -n, direction=Direction.DOWNWARD, terminal=True)
    traj = integrate(vector_field_3cm(core, eff), init, solver, [event])
    t = first_crossing(traj, event)
    return ThresholdResult(
        time=math.inf if t is None else t,
        epsilon_used=eps,
        r_achieved=r0(core, eff),
        worst_undershoot=traj.worst_undershoot,
    )


def q_n(
    lp: LatentParams,
    init: Optional[State4] = None,
    n: int = 5,
    r: float = 1.0,
    solver: SolverConfig = DEFAULT_SOLVER,
) -> ThresholdResult:
    """First time ``V <= 10**-n`` for the treated latent model with ``R_L^eps = r``."""
    _check_n(n)
    init = INIT_DEFAULT if init is None else State4(*init)
    eps = efficacy_for_ratio(Metric.Q, lp, r)
    eff = Efficacy(eps_RT=0.0, eps_PI=eps)
    event = EventSpec(component=3, threshold=10.0 ** -n, direction=Direction.DOWNWARD, terminal=True)
    traj = integrate(vector_field_4cm(lp, eff), init, solver, [event])
    t = first_crossing(traj, event)
    return ThresholdResult(
        time=math.inf if t is None else t,
        epsilon_used=eps,
        r_achieved=r_l(lp, eff),
        worst_undershoot=traj.worst_undershoot,
    )


def evaluate(query: ThresholdQuery) -> ThresholdResult:
    if Metric(query.metric) is Metric.P:
        core = query.params.core if isinstance(query.params, LatentParams) else query.params
        init = None
        if query.initials is not None:
            s = query.initials
            init = State3(s.T, s.I, s.V)
        return p_n(core, init, query.n, query.r, query.solver)
    if not isinstance(query.params, LatentParams):
        raise ParameterError("the Q metric needs latent-model parameters")
    init = None
    if query.initials is not None:
        if not isinstance(query.initials, State4):
            raise ParameterError("the Q metric needs a four-component initial state")
        init = query.initials
    return q_n(query.params, init, query.n, query.r, query.solver)


def _sweep_point(query: ThresholdQuery) -> SweepRow:
    try:
        eps = efficacy_for_ratio(query.metric, query.params, query.r)
    except HivModelError as exc:
        return SweepRow(query.r, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
    try:
        res = evaluate(query)
    except HivModelError as exc:
        return SweepRow(query.r, eps, math.nan, f"{type(exc).__name__}: {exc}")
    return SweepRow(query.r, res.epsilon_used, res.time)


def sweep(
    metric: Metric,
    n: int,
    r_grid: Sequence[float],
    params: Params,
    init: Optional[Union[State3, State4]] = None,
    solver: SolverConfig = DEFAULT_SOLVER,
    jobs: Optional[int] = 1,
) -> list[SweepRow]:
    """Evaluate one metric over a grid of reproduction numbers.

    Rows come back in grid order. A failing grid point records its error and
    the sweep carries on. ``jobs > 1`` evaluates points in worker processes;
    ``jobs=None`` uses every available CPU.
    """
    queries = [ThresholdQuery(Metric(metric), n, float(r), params, init, solver) for r in r_grid]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(queries) <= 1:
        return [_sweep_point(q) for q in queries]
    with ProcessPoolExecutor(max_workers=min(jobs, len(queries))) as pool:
        return list(pool.map(_sweep_point, queries))
