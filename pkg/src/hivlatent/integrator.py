"""Adaptive Dormand-Prince 5(4) integration with dense output and event location.

Step control follows the proportional-integral (PI) controller of Hairer's
DOPRI5: the new step is chosen from the current error estimate and the one
of the previous accepted step. The error test is a max-norm over components,
so every accepted step satisfies ``|err_i| <= atol_i + rtol * |y_i|``.

Every accepted step stores the five coefficient vectors of the order-4
continuous extension; :class:`Trajectory` evaluates it at arbitrary times and
crossing times of :class:`EventSpec` thresholds are refined by bisection on
that interpolant.

Populations of the HIV models stay positive for positive data. Small
negative undershoots (at most ``10 * atol_i``) produced by the discretisation
are stored as they are; anything beyond raises :class:`PositivityError`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidStateError, ParameterError, PositivityError, StiffnessError

__all__ = [
    "SolverConfig",
    "Direction",
    "EventSpec",
    "EventRecord",
    "Trajectory",
    "integrate",
    "first_crossing",
    "H_MIN",
    "EVENT_TIME_TOL",
]

H_MIN = 1e-12  # days; smaller proposed steps mean the problem is too stiff
EVENT_TIME_TOL = 1e-6  # days
UNDERSHOOT_LIMIT = 10.0  # multiples of atol

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights (7 stages, FSAL)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
    701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423,
])

# PI controller constants (Hairer, Norsett & Wanner)
_SAFE = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - _BETA * 0.75
_FAC_MIN = 0.2  # h_new >= 0.2 h
_FAC_MAX = 10.0  # h_new <= 10 h


def _default_atol(dim: int) -> np.ndarray:
    # cells 1e-12, virions (the last component) 1e-13
    atol = np.full(dim, 1e-12)
    atol[-1] = 1e-13
    return atol


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and step limits; ``atol=None`` selects the model defaults."""

    rtol: float = 1e-8
    atol: Optional[float | tuple[float, ...]] = None
    h_init: Optional[float] = None
    h_max: float = 1.0
    t_max: float = 1e4

    def __post_init__(self) -> None:
        if not 1e-12 <= self.rtol <= 1e-2:
            raise ParameterError(f"rtol must lie in [1e-12, 1e-2], got {self.rtol!r}")
        if self.atol is not None:
            values = (self.atol,) if np.isscalar(self.atol) else tuple(self.atol)
            if not all(math.isfinite(a) and a > 0 for a in values):
                raise ParameterError(f"every atol must be positive, got {self.atol!r}")
        if not (self.h_max > 0 and math.isfinite(self.h_max)):
            raise ParameterError("h_max must be positive")
        if self.h_init is not None and not self.h_init > 0:
            raise ParameterError("h_init must be positive")
        if not (self.t_max >= 0 and math.isfinite(self.t_max)):
            raise ParameterError("t_max must be finite and nonnegative")

    def atol_vector(self, dim: int) -> np.ndarray:
        if self.atol is None:
            return _default_atol(dim)
        if np.isscalar(self.atol):
            return np.full(dim, float(self.atol))
        atol = np.asarray(self.atol, dtype=float)
        if atol.shape != (dim,):
            raise ParameterError(f"atol has {atol.size} entries for a {dim}-component state")
        return atol


class Direction(enum.Enum):
    DOWNWARD = "down"
    UPWARD = "up"


@dataclass(frozen=True)
class EventSpec:
    """Crossing of ``y[component]`` through ``threshold`` in ``direction``."""

    component: int
    threshold: float
    direction: Direction = Direction.DOWNWARD
    terminal: bool = False

    def __post_init__(self) -> None:
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise ParameterError(f"event threshold must be positive, got {self.threshold!r}")

    def reached(self, value: float) -> bool:
        if self.direction is Direction.DOWNWARD:
            return value <= self.threshold
        return value >= self.threshold


@dataclass(frozen=True)
class EventRecord:
    t: float
    component: int
    threshold: float
    direction: Direction
    state: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one integration plus their dense-output coefficients.

    ``coeffs[j]`` holds the five vectors ``r1..r5`` of step ``j`` so that
    ``y(t_j + theta h_j) = r1 + theta (r2 + (1-theta)(r3 + theta (r4 + (1-theta) r5)))``.
    """

    t: np.ndarray
    y: np.ndarray
    coeffs: np.ndarray
    atol: np.ndarray
    t_max: float
    events: tuple[EventRecord, ...] = ()
    event_specs: tuple[EventSpec, ...] = ()
    terminated: bool = False
    nfev: int = 0
    n_rejected: int = 0

    @property
    def t_end(self) -> float:
        """Last time covered by the trajectory."""
        return float(self.t[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.y[-1].copy()

    @property
    def worst_undershoot(self) -> float:
        """``min_{i,t} y_i(t) / atol_i``; values below ``-10`` violate positivity."""
        return float(np.min(self.y / self.atol))

    def __call__(self, when):
        """Evaluate the dense output at a time or an array of times."""
        when_arr = np.atleast_1d(np.asarray(when, dtype=float))
        if when_arr.size and (when_arr.min() < self.t[0] or when_arr.max() > self.t[-1]):
            raise ValueError(f"requested times outside [{self.t[0]}, {self.t[-1]}]")
        if len(self.t) == 1:
            out = np.repeat(self.y[:1], when_arr.size, axis=0)
        else:
            idx = np.clip(np.searchsorted(self.t, when_arr, side="right") - 1, 0, len(self.t) - 2)
            h = self.t[idx + 1] - self.t[idx]
            theta = ((when_arr - self.t[idx]) / h)[:, None]
            r = self.coeffs[idx]
            out = _interpolate(r[:, 0], r[:, 1], r[:, 2], r[:, 3], r[:, 4], theta)
            # exact values at the stored nodes
            exact = when_arr == self.t[idx + 1]
            out[exact] = self.y[idx[exact] + 1]
        if np.ndim(when) == 0:
            return out[0]
        return out


def _interpolate(r1, r2, r3, r4, r5, theta):
    theta1 = 1.0 - theta
    return r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)))


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _initial_step(rhs, t0, y0, f0, atol, rtol, h_max) -> float:
    scale = atol + rtol * np.abs(y0)
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, h_max)


def _locate(spec: EventSpec, t: float, h: float, r, g_start: float) -> Optional[tuple[float, float]]:
    """Bracket the first crossing of ``spec`` inside one step; returns ``(theta_lo, theta_hi)``."""
    c = spec.component
    r1, r2, r3, r4, r5 = (float(v[c]) for v in r)
    sign = 1.0 if spec.direction is Direction.DOWNWARD else -1.0

    def g(theta: float) -> float:
        return sign * (_interpolate(r1, r2, r3, r4, r5, theta) - spec.threshold)

    if g_start <= 0:
        return None
    lo = 0.0
    # interior probes catch dips that recover before the step ends
    for theta in (0.25, 0.5, 0.75, 1.0):
        if g(theta) <= 0:
            hi = theta
            break
        lo = theta
    else:
        return None
    tol = EVENT_TIME_TOL / h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return lo, hi


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    s0: Sequence[float],
    cfg: SolverConfig = SolverConfig(),
    events: Sequence[EventSpec] = (),
    t0: float = 0.0,
) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t0 + cfg.t_max``.

    Parameters
    ----------
    rhs
        Vector field returning a new array; see :func:`hivlatent.model.vector_field_4cm`.
    s0
        Initial state, componentwise nonnegative.
    cfg
        Tolerances, step limits and horizon.
    events
        Threshold crossings to locate. A terminal event stops the integration
        at the end of the step in which it fires.

    Raises
    ------
    StiffnessError
        The step size fell below ``H_MIN``.
    PositivityError
        A component dropped below ``-10 * atol_i``.
    """
    y = np.array(s0, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise InvalidStateError(f"initial state must be a finite vector, got {s0!r}")
    if np.any(y < 0):
        raise InvalidStateError(f"initial state must be nonnegative, got {s0!r}")
    dim = y.size
    atol = cfg.atol_vector(dim)
    rtol = cfg.rtol
    events = tuple(events)
    for ev in events:
        if not 0 <= ev.component < dim:
            raise ParameterError(f"event component {ev.component} outside state of size {dim}")

    t = float(t0)
    t_stop = t + cfg.t_max
    ts, ys, coeffs = [t], [y], []
    records: list[EventRecord] = []

    def finish(terminated: bool) -> Trajectory:
        return Trajectory(
            t=np.array(ts), y=np.array(ys),
            coeffs=np.array(coeffs).reshape(len(coeffs), 5, dim),
            atol=atol, t_max=cfg.t_max, events=tuple(records), event_specs=events,
            terminated=terminated, nfev=nfev, n_rejected=n_rejected,
        )

    nfev = n_rejected = 0
    # infimum convention: a state already past the threshold crosses at t0
    for ev in events:
        if ev.reached(float(y[ev.component])):
            records.append(EventRecord(t, ev.component, ev.threshold, ev.direction, tuple(y.tolist())))
            if ev.terminal:
                return finish(True)
    if cfg.t_max == 0:
        return finish(False)

    K = np.empty((7, dim))
    K[0] = rhs(t, y)
    nfev = 1
    h = cfg.h_init if cfg.h_init is not None else _initial_step(rhs, t, y, K[0], atol, rtol, cfg.h_max)
    nfev += 1
    h = min(h, cfg.h_max)
    facold = 1e-4
    rejected_last = False
    # sign-adjusted distance to each threshold at the current node
    g_now = [
        (y[ev.component] - ev.threshold) * (1.0 if ev.direction is Direction.DOWNWARD else -1.0)
        for ev in events
    ]

    while t < t_stop:
        if h < H_MIN:
            raise StiffnessError(f"step size {h:.3e} below {H_MIN:g} at t={t:.6g}")
        last = t + h >= t_stop
        if last:
            h = t_stop - t
        for i in range(1, 6):
            K[i] = rhs(t + _C[i] * h, y + h * (_A[i] @ K[:i]))
        y_new = y + h * (_B @ K[:6])
        K[6] = rhs(t + h, y_new)
        nfev += 6
        err_vec = h * (_E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))

        if not math.isfinite(err):
            n_rejected += 1
            rejected_last = True
            h *= _FAC_MIN
            continue

        fac11 = err ** _EXPO1
        if err > 1.0:
            n_rejected += 1
            rejected_last = True
            h = h / min(1.0 / _FAC_MIN, fac11 / _SAFE)
            continue

        # accepted
        fac = fac11 / facold ** _BETA
        fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac / _SAFE))
        h_new = h / fac
        if rejected_last:
            h_new = min(h_new, h)
        facold = max(err, 1e-4)
        rejected_last = False

        t_new = t_stop if last else t + h
        if np.any(y_new < -UNDERSHOOT_LIMIT * atol):
            bad = int(np.argmax(-y_new / atol))
            raise PositivityError(
                f"component {bad} = {y_new[bad]:.3e} below -{UNDERSHOOT_LIMIT:g}*atol at t={t_new:.6g}"
            )
        ydiff = y_new - y
        bspl = h * K[0] - ydiff
        r = np.stack((y, ydiff, bspl, ydiff - h * K[6] - bspl, h * (_D @ K)))
        coeffs.append(r)
        ts.append(t_new)
        ys.append(y_new)

        stop = False
        for j, ev in enumerate(events):
            sign = 1.0 if ev.direction is Direction.DOWNWARD else -1.0
            bracket = _locate(ev, t, h, r, g_now[j])
            g_now[j] = sign * (y_new[ev.component] - ev.threshold)
            if bracket is None:
                continue
            theta = bracket[1]
            state = _interpolate(*r, theta) if theta < 1.0 else y_new
            records.append(EventRecord(
                t + theta * h if theta < 1.0 else t_new,
                ev.component, ev.threshold, ev.direction, tuple(state.tolist()),
            ))
            if ev.terminal:
                stop = True

        t, y = t_new, y_new
        K[0] = K[6]
        if stop:
            records.sort(key=lambda rec: rec.t)
            return finish(True)
        h = min(h_new, cfg.h_max)

    records.sort(key=lambda rec: rec.t)
    return finish(False)


def first_crossing(traj: Trajectory, ev: EventSpec) -> Optional[float]:
    """Infimum of the times at which ``ev`` is reached, or ``None`` if never.

    Uses the event records when ``ev`` was registered with the integration,
    otherwise scans the stored dense output of the whole trajectory.
    """
    key = (ev.component, ev.threshold, ev.direction)
    if any((s.component, s.threshold, s.direction) == key for s in traj.event_specs):
        for rec in traj.events:
            if (rec.component, rec.threshold, rec.direction) == key:
                return rec.t
        return None
    if ev.reached(float(traj.y[0, ev.component])):
        return float(traj.t[0])
    sign = 1.0 if ev.direction is Direction.DOWNWARD else -1.0
    for j in range(len(traj.coeffs)):
        h = float(traj.t[j + 1] - traj.t[j])
        g_start = sign * (traj.y[j, ev.component] - ev.threshold)
        bracket = _locate(ev, float(traj.t[j]), h, traj.coeffs[j], g_start)
        if bracket is not None:
            theta = bracket[1]
            return float(traj.t[j + 1]) if theta >= 1.0 else float(traj.t[j]) + theta * h
    return None
