"""Parameter/state types and right-hand sides of the within-host HIV models.

Two models are covered:

* the three-component model (susceptible T-cells ``T``, productively infected
  cells ``I``, free virions ``V``), and
* the latent-infection model which adds latently infected cells ``L``.

Antiretroviral therapy is folded into both through :class:`Efficacy`: reverse
transcriptase inhibitors scale the infectivity ``k`` by ``1 - eps_RT`` and
protease inhibitors scale the burst size ``N`` by ``1 - eps_PI``. With zero
efficacies the untreated models are recovered exactly.

The clearance term of the latent compartment is ``d_L * L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidStateError, ParameterError

__all__ = [
    "CoreParams",
    "LatentParams",
    "Efficacy",
    "NO_THERAPY",
    "State3",
    "State4",
    "combined_efficacy",
    "effective_params",
    "rhs_3cm",
    "rhs_4cm",
    "vector_field_3cm",
    "vector_field_4cm",
]


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class CoreParams:
    """Constants shared by both models.

    Units: ``lam`` cells/ml/day, ``d_T``/``d_I``/``d_V`` 1/day, ``k`` ml/day,
    ``N`` virions per cell (dimensionless).
    """

    lam: float
    d_T: float
    d_I: float
    d_V: float
    k: float
    N: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            _require_finite(f.name, value)
            if value <= 0:
                raise ParameterError(f"{f.name} must be strictly positive, got {value!r}")
        if self.N < 1:
            raise ParameterError(f"burst size N must be >= 1, got {self.N!r}")

    @classmethod
    def _treated(cls, lam: float, d_T: float, d_I: float, d_V: float, k: float, N: float) -> "CoreParams":
        # therapy may drive k or N to zero, which the untreated invariants forbid
        obj = object.__new__(cls)
        for name, value in zip(("lam", "d_T", "d_I", "d_V", "k", "N"), (lam, d_T, d_I, d_V, k, N)):
            object.__setattr__(obj, name, float(value))
        return obj

    @property
    def T0(self) -> float:
        """Susceptible T-cell density of the infection-free steady state."""
        return self.lam / self.d_T


@dataclass(frozen=True)
class LatentParams:
    """Core constants plus the latent-compartment parameters.

    ``p`` is the fraction of infections that become latent, ``alpha`` the
    activation rate and ``d_L`` the clearance rate of latent cells. ``p = 0``
    is admitted; the latent model then reduces to the three-component model.
    """

    core: CoreParams
    p: float
    alpha: float
    d_L: float

    def __post_init__(self) -> None:
        for name in ("p", "alpha", "d_L"):
            _require_finite(name, getattr(self, name))
        if not 0.0 <= self.p < 1.0:
            raise ParameterError(f"p must lie in [0, 1), got {self.p!r}")
        if self.alpha < 0 or self.d_L < 0:
            raise ParameterError("alpha and d_L must be nonnegative")
        if self.alpha + self.d_L <= 0:
            raise ParameterError("alpha + d_L must be strictly positive")


@dataclass(frozen=True)
class Efficacy:
    """Drug efficacies, each a fraction in ``[0, 1]``."""

    eps_RT: float = 0.0
    eps_PI: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eps_RT", "eps_PI"):
            value = getattr(self, name)
            _require_finite(name, value)
            if not 0.0 <= value <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")

    @property
    def combined(self) -> float:
        return combined_efficacy(self)


NO_THERAPY = Efficacy()


class State3(NamedTuple):
    """Population densities of the three-component model."""

    T: float
    I: float
    V: float


class State4(NamedTuple):
    """Population densities of the latent-infection model."""

    T: float
    I: float
    L: float
    V: float


def combined_efficacy(eff: Efficacy) -> float:
    """Overall efficacy ``eps`` with ``1 - eps = (1 - eps_RT)(1 - eps_PI)``."""
    return eff.eps_RT + eff.eps_PI - eff.eps_RT * eff.eps_PI


def effective_params(core: CoreParams, eff: Efficacy) -> CoreParams:
    """Return ``core`` with ``k`` and ``N`` scaled by the therapy.

    The result may carry ``k = 0`` or ``N < 1`` (complete blockage), which is
    why it bypasses the untreated invariants.
    """
    if eff.eps_RT == 0.0 and eff.eps_PI == 0.0:
        return core
    return CoreParams._treated(
        core.lam, core.d_T, core.d_I, core.d_V,
        core.k * (1.0 - eff.eps_RT), core.N * (1.0 - eff.eps_PI),
    )


def _check_state(s) -> None:
    for value in s:
        if not math.isfinite(value):
            raise InvalidStateError(f"state has non-finite component: {tuple(s)!r}")


def rhs_3cm(core: CoreParams, eff: Efficacy, s: State3) -> State3:
    """Time derivative of the (treated) three-component model at ``s``."""
    _check_state(s)
    T, I, V = s
    k = core.k * (1.0 - eff.eps_RT)
    N = core.N * (1.0 - eff.eps_PI)
    infection = k * T * V
    return State3(
        core.lam - core.d_T * T - infection,
        infection - core.d_I * I,
        N * core.d_I * I - core.d_V * V,
    )


def rhs_4cm(lp: LatentParams, eff: Efficacy, s: State4) -> State4:
    """Time derivative of the (treated) latent-infection model at ``s``."""
    _check_state(s)
    T, I, L, V = s
    c = lp.core
    k = c.k * (1.0 - eff.eps_RT)
    N = c.N * (1.0 - eff.eps_PI)
    infection = k * T * V
    return State4(
        c.lam - c.d_T * T - infection,
        (1.0 - lp.p) * infection + lp.alpha * L - c.d_I * I,
        lp.p * infection - (lp.alpha + lp.d_L) * L,
        N * c.d_I * I - c.d_V * V,
    )


VectorField = Callable[[float, np.ndarray], np.ndarray]


def vector_field_3cm(core: CoreParams, eff: Efficacy = NO_THERAPY) -> VectorField:
    """Array-valued ``f(t, y)`` for the integrator; same arithmetic as :func:`rhs_3cm`."""
    lam, d_T, d_I, d_V = core.lam, core.d_T, core.d_I, core.d_V
    k = core.k * (1.0 - eff.eps_RT)
    burst = core.N * (1.0 - eff.eps_PI) * d_I

    def f(t: float, y: np.ndarray) -> np.ndarray:
        T, I, V = y.tolist()
        infection = k * T * V
        return np.array((lam - d_T * T - infection, infection - d_I * I, burst * I - d_V * V))

    return f


def vector_field_4cm(lp: LatentParams, eff: Efficacy = NO_THERAPY) -> VectorField:
    """Array-valued ``f(t, y)`` for the integrator; same arithmetic as :func:`rhs_4cm`."""
    c = lp.core
    lam, d_T, d_I, d_V = c.lam, c.d_T, c.d_I, c.d_V
    k = c.k * (1.0 - eff.eps_RT)
    burst = c.N * (1.0 - eff.eps_PI) * d_I
    p, alpha, out_L = lp.p, lp.alpha, lp.alpha + lp.d_L

    def f(t: float, y: np.ndarray) -> np.ndarray:
        T, I, L, V = y.tolist()
        infection = k * T * V
        return np.array((
            lam - d_T * T - infection,
            (1.0 - p) * infection + alpha * L - d_I * I,
            p * infection - out_L * L,
            burst * I - d_V * V,
        ))

    return f
