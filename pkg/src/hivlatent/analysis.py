"""Reproduction numbers, steady states and viral-setpoint sensitivities."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import SingularityError
from .model import NO_THERAPY, CoreParams, Efficacy, LatentParams, State3, State4

__all__ = [
    "EquilibriumKind",
    "Equilibrium3",
    "Equilibrium4",
    "SetpointSensitivity",
    "THRESHOLD_TOL",
    "r0",
    "r_l",
    "q_ratio",
    "q_ratio_alt",
    "is_marginal",
    "equilibria_3cm",
    "equilibria_4cm",
    "endemic_4cm",
    "setpoint_viral_load",
    "setpoint_sensitivity",
]

# |R - 1| at or below this counts as the bifurcation point itself
THRESHOLD_TOL = 1e-12


class EquilibriumKind(str, enum.Enum):
    NON_INFECTIVE = "NonInfective"
    ENDEMIC = "Endemic"


@dataclass(frozen=True)
class Equilibrium3:
    T: float
    I: float
    V: float
    kind: EquilibriumKind

    @property
    def state(self) -> State3:
        return State3(self.T, self.I, self.V)


@dataclass(frozen=True)
class Equilibrium4:
    T: float
    I: float
    L: float
    V: float
    kind: EquilibriumKind

    @property
    def state(self) -> State4:
        return State4(self.T, self.I, self.L, self.V)


@dataclass(frozen=True)
class SetpointSensitivity:
    """Partial derivatives of the treated viral setpoint (virions/ml per unit efficacy)."""

    dV_dEpsRT: float
    dV_dEpsPI: float


def r0(core: CoreParams, eff: Efficacy = NO_THERAPY) -> float:
    """Basic reproduction number ``k N (1 - eps) lam / (d_T d_V)`` of the three-component model."""
    return core.k * core.N * (1.0 - eff.combined) * core.lam / (core.d_T * core.d_V)


def q_ratio(lp: LatentParams) -> float:
    """``R_L / R_0 = ((1 - p) d_L + alpha) / (d_L + alpha)``."""
    return ((1.0 - lp.p) * lp.d_L + lp.alpha) / (lp.d_L + lp.alpha)


def q_ratio_alt(lp: LatentParams) -> float:
    """The same ratio written as ``1 - p d_L / (d_L + alpha)``."""
    return 1.0 - lp.p * lp.d_L / (lp.d_L + lp.alpha)


def r_l(lp: LatentParams, eff: Efficacy = NO_THERAPY) -> float:
    """Basic reproduction number of the latent-infection model.

    Evaluated as ``r0 * q_ratio`` so that the serialized identity
    ``R_L = Q R_0`` holds bit for bit.
    """
    return r0(lp.core, eff) * q_ratio(lp)


def is_marginal(R: float) -> bool:
    return abs(R - 1.0) <= THRESHOLD_TOL


def equilibria_3cm(core: CoreParams, eff: Efficacy = NO_THERAPY) -> list[Equilibrium3]:
    """Non-infective steady state, plus the endemic one when ``R_0^eps > 1``."""
    out = [Equilibrium3(core.T0, 0.0, 0.0, EquilibriumKind.NON_INFECTIVE)]
    R = r0(core, eff)
    if R > 1.0 and not is_marginal(R):
        k = core.k * (1.0 - eff.eps_RT)
        N = core.N * (1.0 - eff.eps_PI)
        out.append(Equilibrium3(
            core.lam / (core.d_T * R),
            core.d_T * core.d_V * (R - 1.0) / (k * N * core.d_I),
            core.d_T * (R - 1.0) / k,
            EquilibriumKind.ENDEMIC,
        ))
    return out


def endemic_4cm(lp: LatentParams, eff: Efficacy, R: float) -> Equilibrium4:
    # closed form; only meaningful (positive) for R > 1
    c = lp.core
    k = c.k * (1.0 - eff.eps_RT)
    N = c.N * (1.0 - eff.eps_PI)
    return Equilibrium4(
        c.lam / (c.d_T * R),
        c.d_T * c.d_V * (R - 1.0) / (k * N * c.d_I),
        lp.p * c.lam * (R - 1.0) / (R * (lp.d_L + lp.alpha)),
        c.d_T * (R - 1.0) / k,
        EquilibriumKind.ENDEMIC,
    )


def equilibria_4cm(lp: LatentParams, eff: Efficacy = NO_THERAPY) -> list[Equilibrium4]:
    """Non-infective steady state, plus the endemic one when ``R_L^eps > 1``."""
    out = [Equilibrium4(lp.core.T0, 0.0, 0.0, 0.0, EquilibriumKind.NON_INFECTIVE)]
    R = r_l(lp, eff)
    if R > 1.0 and not is_marginal(R):
        out.append(endemic_4cm(lp, eff, R))
    return out


def setpoint_viral_load(lp: LatentParams, eff: Efficacy) -> float:
    """Treated endemic viral load ``(d_T R_L / k)(1 - eps_PI) - d_T / (k (1 - eps_RT))``.

    ``R_L`` is the untreated reproduction number; the expression equals the
    virion component of the treated endemic equilibrium whenever it exists.
    """
    if eff.eps_RT >= 1.0:
        raise SingularityError("viral setpoint is singular at eps_RT = 1")
    c = lp.core
    RL = r_l(lp)
    return c.d_T * RL / c.k * (1.0 - eff.eps_PI) - c.d_T / (c.k * (1.0 - eff.eps_RT))


def setpoint_sensitivity(lp: LatentParams, eff: Efficacy) -> SetpointSensitivity:
    if eff.eps_RT >= 1.0:
        raise SingularityError("d V / d eps_RT is singular at eps_RT = 1")
    c = lp.core
    return SetpointSensitivity(
        dV_dEpsRT=-c.d_T / (c.k * (1.0 - eff.eps_RT) ** 2),
        dV_dEpsPI=-c.d_T * r_l(lp) / c.k,
    )
