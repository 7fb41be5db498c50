"""Lyapunov functions of the latent-infection model and their trajectory derivatives.

With ``a = (1-p) d_L + alpha``, ``b = d_L + alpha`` and the Volterra-type
function ``g(x; x*) = x - x* - x* ln(x / x*)``:

* around the non-infective state ``(T0, 0, 0, 0)``::

      U = a g(T; T0) + b (I + V / N) + alpha L

* around the endemic state ``(T*, I*, L*, V*)``::

      U = a g(T; T*) + b (g(I; I*) + g(V; V*) / N) + alpha g(L; L*)

Under therapy ``k`` and ``N`` take their efficacy-scaled values. Each
function comes with the closed-form derivative along solutions and with the
chain-rule value ``grad U . f`` as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import EquilibriumKind, endemic_4cm, is_marginal, r_l
from .errors import DomainError, EndemicAbsentError
from .integrator import Trajectory
from .model import Efficacy, LatentParams, State4, rhs_4cm

__all__ = [
    "LyapunovSample",
    "DescentReport",
    "u_noninfective",
    "u_noninfective_rate",
    "grad_u_noninfective",
    "u_endemic",
    "u_endemic_rate",
    "grad_u_endemic",
    "chain_rule_rate",
    "lyapunov_value",
    "lyapunov_rate",
    "verify_descent",
]

LOG_FLOOR = 1e-300
DESCENT_RTOL = 1e-6  # per day, relative to max |U| along the trajectory


@dataclass(frozen=True)
class LyapunovSample:
    t: float
    u: float
    du_dt_analytic: float
    du_dt_chainrule: float


@dataclass(frozen=True, eq=False)
class DescentReport:
    which: EquilibriumKind
    samples: tuple[LyapunovSample, ...]
    fd_rates: np.ndarray
    max_rate_analytic: float
    max_rate_fd: float
    tolerance: float
    skipped: int
    passed: bool


def _phi(x: float) -> float:
    """``x - 1 - ln x`` without cancellation near ``x = 1``."""
    d = x - 1.0
    if abs(d) >= 1e-2:
        return d - math.log(x)
    # sum_{n>=2} (-1)^n d^n / n, truncation error below 1e-18 relative
    total, power = 0.0, d
    for n in range(2, 12):
        power *= d
        total += power / n if n % 2 == 0 else -power / n
    return total


def _volterra(x: float, x_star: float) -> float:
    if x_star == 0.0:
        return x
    return x_star * _phi(x / x_star)


def _weights(lp: LatentParams, eff: Efficacy) -> tuple[float, float, float]:
    N = lp.core.N * (1.0 - eff.eps_PI)
    if N <= 0:
        raise DomainError("Lyapunov functions need a positive effective burst size (eps_PI < 1)")
    return (1.0 - lp.p) * lp.d_L + lp.alpha, lp.d_L + lp.alpha, N


def _endemic_point(lp: LatentParams, eff: Efficacy):
    R = r_l(lp, eff)
    if R <= 1.0 or is_marginal(R):
        raise EndemicAbsentError(f"endemic equilibrium absent: R_L = {R!r} <= 1")
    return R, endemic_4cm(lp, eff, R)


def _check_endemic_state(s: State4) -> None:
    for name, value in zip("TILV", s):
        if not value >= LOG_FLOOR:
            raise DomainError(f"{name} = {value!r} is not positive; the endemic Lyapunov function needs logs")


def u_noninfective(lp: LatentParams, eff: Efficacy, s: State4) -> float:
    T, I, L, V = s
    if not T > 0:
        raise DomainError(f"T must be positive, got {T!r}")
    a, b, N = _weights(lp, eff)
    return a * _volterra(T, lp.core.T0) + b * (I + V / N) + lp.alpha * L


def grad_u_noninfective(lp: LatentParams, eff: Efficacy, s: State4) -> np.ndarray:
    T = s[0]
    if not T > 0:
        raise DomainError(f"T must be positive, got {T!r}")
    a, b, N = _weights(lp, eff)
    return np.array([a * (1.0 - lp.core.T0 / T), b, lp.alpha, b / N])


def u_noninfective_rate(lp: LatentParams, eff: Efficacy, s: State4) -> float:
    """``-a (lam - d_T T)^2 / (d_T T) + (b d_V / N)(R_L - 1) V``; nonpositive when ``R_L <= 1``."""
    T, I, L, V = s
    if not T > 0:
        raise DomainError(f"T must be positive, got {T!r}")
    a, b, N = _weights(lp, eff)
    c = lp.core
    return -a / (c.d_T * T) * (c.lam - c.d_T * T) ** 2 + b * c.d_V / N * (r_l(lp, eff) - 1.0) * V


def u_endemic(lp: LatentParams, eff: Efficacy, s: State4) -> float:
    _check_endemic_state(s)
    _, e = _endemic_point(lp, eff)
    a, b, N = _weights(lp, eff)
    T, I, L, V = s
    return (
        a * _volterra(T, e.T)
        + b * (_volterra(I, e.I) + _volterra(V, e.V) / N)
        + lp.alpha * _volterra(L, e.L)
    )


def grad_u_endemic(lp: LatentParams, eff: Efficacy, s: State4) -> np.ndarray:
    _check_endemic_state(s)
    _, e = _endemic_point(lp, eff)
    a, b, N = _weights(lp, eff)
    T, I, L, V = s
    return np.array([
        a * (1.0 - e.T / T),
        b * (1.0 - e.I / I),
        lp.alpha * (1.0 - e.L / L),
        b / N * (1.0 - e.V / V),
    ])


def u_endemic_rate(lp: LatentParams, eff: Efficacy, s: State4) -> float:
    """Closed-form ``dU/dt`` around the endemic state, grouped so each bracket is <= 0 by AM-GM.

    ``a d_T T* (2 - x - 1/x)``
    ``+ b^2 (1-p) (L*/p) (3 - T*/T - T V I*/(T* V* I) - I V*/(I* V))``
    ``+ alpha b L* (4 - T*/T - T V L*/(T* V* L) - L I*/(L* I) - I V*/(I* V))``

    with ``x = T/T*``. The last bracket is expanded so that ``p = 0``
    (``L* = 0``) stays finite.
    """
    _check_endemic_state(s)
    R, e = _endemic_point(lp, eff)
    a, b, _ = _weights(lp, eff)
    c = lp.core
    T, I, L, V = s
    x = T / e.T
    tv = x * V / e.V  # T V / (T* V*)
    iv = (I / e.I) * (e.V / V)  # I V* / (I* V)
    inv_x = e.T / T
    latent_per_p = c.lam * (R - 1.0) / (R * b)  # L*/p, finite as p -> 0
    term_T = a * c.d_T * e.T * (2.0 - x - inv_x)
    term_I = b * b * (1.0 - lp.p) * latent_per_p * (3.0 - inv_x - tv * e.I / I - iv)
    term_L = lp.alpha * b * (
        e.L * (4.0 - inv_x - iv) - e.L * e.L * tv / L - L * e.I / I
    )
    return term_T + term_I + term_L


def chain_rule_rate(lp: LatentParams, eff: Efficacy, s: State4, which: EquilibriumKind) -> float:
    """``grad U(s) . rhs_4cm(s)`` for the selected Lyapunov function."""
    grad = grad_u_noninfective if EquilibriumKind(which) is EquilibriumKind.NON_INFECTIVE else grad_u_endemic
    return float(grad(lp, eff, s) @ np.array(rhs_4cm(lp, eff, State4(*s))))


def lyapunov_value(lp: LatentParams, eff: Efficacy, s: State4, which: EquilibriumKind) -> float:
    if EquilibriumKind(which) is EquilibriumKind.NON_INFECTIVE:
        return u_noninfective(lp, eff, s)
    return u_endemic(lp, eff, s)


def lyapunov_rate(lp: LatentParams, eff: Efficacy, s: State4, which: EquilibriumKind) -> float:
    if EquilibriumKind(which) is EquilibriumKind.NON_INFECTIVE:
        return u_noninfective_rate(lp, eff, s)
    return u_endemic_rate(lp, eff, s)


def verify_descent(lp: LatentParams, eff: Efficacy, trajectory: Trajectory, which: EquilibriumKind) -> DescentReport:
    """Check that ``U`` does not increase along a simulated trajectory.

    Evaluated at every accepted step of ``trajectory``. Slightly negative
    undershoots are read as zero. Around the endemic state, nodes where a
    component is not positive (typically ``I(0) = L(0) = 0``) cannot be
    evaluated and are counted in ``skipped``.
    """
    which = EquilibriumKind(which)
    if which is EquilibriumKind.ENDEMIC:
        _endemic_point(lp, eff)
    samples: list[LyapunovSample] = []
    skipped = 0
    for t, y in zip(trajectory.t.tolist(), trajectory.y):
        s = State4(*np.maximum(y, 0.0).tolist())
        if which is EquilibriumKind.ENDEMIC and min(s) < LOG_FLOOR:
            skipped += 1
            continue
        samples.append(LyapunovSample(
            t=t,
            u=lyapunov_value(lp, eff, s, which),
            du_dt_analytic=lyapunov_rate(lp, eff, s, which),
            du_dt_chainrule=chain_rule_rate(lp, eff, s, which),
        ))
    times = np.array([smp.t for smp in samples])
    values = np.array([smp.u for smp in samples])
    fd = np.diff(values) / np.diff(times) if len(samples) > 1 else np.zeros(0)
    tol = DESCENT_RTOL * (float(np.max(np.abs(values))) if values.size else 0.0)
    max_analytic = max((smp.du_dt_analytic for smp in samples), default=0.0)
    max_fd = float(np.max(fd)) if fd.size else 0.0
    return DescentReport(
        which=which,
        samples=tuple(samples),
        fd_rates=fd,
        max_rate_analytic=max_analytic,
        max_rate_fd=max_fd,
        tolerance=tol,
        skipped=skipped,
        passed=max_analytic <= tol and max_fd <= tol,
    )
