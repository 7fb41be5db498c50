"""Linear stability of the steady states.

Two independent routes are provided and cross-checked:

* closed-form characteristic-polynomial coefficients at the non-infective
  (cubic, after factoring out the root ``-d_T``) and endemic (quartic)
  equilibria of the latent model, judged by the Routh-Hurwitz conditions;
* the numeric spectrum of the analytic Jacobian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .analysis import (
    EquilibriumKind,
    endemic_4cm,
    equilibria_3cm,
    is_marginal,
    r0,
    r_l,
)
from .errors import EigenFailure, EndemicAbsentError, InvalidStateError, VerdictMismatchError
from .model import CoreParams, Efficacy, LatentParams, State3, State4

__all__ = [
    "Verdict",
    "CharCoeffsCubic",
    "CharCoeffsQuartic",
    "EigenSpectrum",
    "StabilityReport",
    "jacobian_3cm",
    "jacobian_4cm",
    "char_coeffs_noninfective",
    "char_coeffs_endemic",
    "routh_hurwitz_cubic",
    "routh_hurwitz_quartic",
    "eigen_spectrum",
    "spectrum_verdict",
    "classify_equilibrium",
    "classify_equilibrium_3cm",
]

RH_TOL = 1e-12
EIG_RESIDUAL_TOL = 1e-8


class Verdict(str, enum.Enum):
    LOCALLY_STABLE = "LocallyStable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


class CharCoeffsCubic(NamedTuple):
    """``eta^3 + A1 eta^2 + A2 eta + A3``."""

    A1: float
    A2: float
    A3: float


class CharCoeffsQuartic(NamedTuple):
    """``eta^4 + A1 eta^3 + A2 eta^2 + A3 eta + A4``."""

    A1: float
    A2: float
    A3: float
    A4: float


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    eigenvalues: np.ndarray
    max_residual: float

    @property
    def max_real(self) -> float:
        return float(np.max(self.eigenvalues.real))

    def count_unstable(self) -> int:
        return int(np.sum(self.eigenvalues.real > 0))


@dataclass(frozen=True)
class StabilityReport:
    """Routh-Hurwitz flags, verdict and (when classified) the numeric spectrum.

    ``positive`` holds one flag per coefficient, ``composite`` the flags of
    ``A1 A2 - A3 > 0`` and, for quartics, ``A3 (A1 A2 - A3) - A4 A1^2 > 0``.
    """

    coefficients: tuple[float, ...]
    positive: tuple[bool, ...]
    composite: tuple[bool, ...]
    verdict: Verdict
    kind: Optional[EquilibriumKind] = None
    reproduction_number: Optional[float] = None
    eigenvalues: Optional[tuple[complex, ...]] = None
    factored_root: Optional[float] = None
    numeric_verdict: Optional[Verdict] = None

    @property
    def all_hold(self) -> bool:
        return all(self.positive) and all(self.composite)


def _finite_matrix(J: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(J)):
        raise InvalidStateError("Jacobian has non-finite entries")
    return J


def jacobian_4cm(lp: LatentParams, eff: Efficacy, at: State4) -> np.ndarray:
    """Analytic Jacobian of :func:`hivlatent.model.rhs_4cm` at ``at`` (rows/cols ordered T, I, L, V)."""
    T, I, L, V = at
    c = lp.core
    k = c.k * (1.0 - eff.eps_RT)
    N = c.N * (1.0 - eff.eps_PI)
    p = lp.p
    return _finite_matrix(np.array([
        [-c.d_T - k * V, 0.0, 0.0, -k * T],
        [(1.0 - p) * k * V, -c.d_I, lp.alpha, (1.0 - p) * k * T],
        [p * k * V, 0.0, -(lp.d_L + lp.alpha), p * k * T],
        [0.0, N * c.d_I, 0.0, -c.d_V],
    ]))


def jacobian_3cm(core: CoreParams, eff: Efficacy, at: State3) -> np.ndarray:
    """Analytic Jacobian of :func:`hivlatent.model.rhs_3cm` at ``at``."""
    T, I, V = at
    k = core.k * (1.0 - eff.eps_RT)
    N = core.N * (1.0 - eff.eps_PI)
    return _finite_matrix(np.array([
        [-core.d_T - k * V, 0.0, -k * T],
        [k * V, -core.d_I, k * T],
        [0.0, N * core.d_I, -core.d_V],
    ]))


def char_coeffs_noninfective(lp: LatentParams, eff: Efficacy) -> CharCoeffsCubic:
    """Cubic factor of the characteristic polynomial at the non-infective state."""
    c = lp.core
    k = c.k * (1.0 - eff.eps_RT)
    N = c.N * (1.0 - eff.eps_PI)
    out = lp.d_L + lp.alpha
    drive = c.lam * N * k * c.d_I / c.d_T
    A1 = c.d_V + c.d_I + out
    A2 = c.d_I * c.d_V + out * (c.d_I + c.d_V) - (1.0 - lp.p) * drive
    A3 = out * c.d_I * c.d_V - drive * ((1.0 - lp.p) * lp.d_L + lp.alpha)
    return CharCoeffsCubic(A1, A2, A3)


def char_coeffs_endemic(lp: LatentParams, eff: Efficacy) -> CharCoeffsQuartic:
    """Quartic characteristic polynomial at the endemic state; requires ``R_L^eps > 1``."""
    R = r_l(lp, eff)
    if R <= 1.0 or is_marginal(R):
        raise EndemicAbsentError(f"endemic equilibrium absent: R_L = {R!r} <= 1")
    c = lp.core
    k = c.k * (1.0 - eff.eps_RT)
    N = c.N * (1.0 - eff.eps_PI)
    p, out = lp.p, lp.d_L + lp.alpha
    dTR = c.d_T * R
    drive = c.lam * N * k * c.d_I
    A1 = dTR + c.d_V + c.d_I + out
    A2 = dTR * (out + c.d_I + c.d_V) + out * (c.d_I + c.d_V) + c.d_I * c.d_V - (1.0 - p) * drive / dTR
    A3 = (
        dTR * out * (c.d_I + c.d_V) + dTR * c.d_I * c.d_V + out * c.d_I * c.d_V
        - drive / dTR * ((1.0 - p) * c.d_T + (1.0 - p) * lp.d_L + lp.alpha)
    )
    A4 = dTR * out * c.d_I * c.d_V - drive / R * ((1.0 - p) * lp.d_L + lp.alpha)
    return CharCoeffsQuartic(A1, A2, A3, A4)


def _condition(x: float, scale: float) -> int:
    """+1 if ``x > 0`` beyond tolerance, -1 if below, 0 if numerically zero."""
    tol = RH_TOL * scale
    if x > tol:
        return 1
    if x < -tol:
        return -1
    return 0


def _rh_report(coeffs: tuple[float, ...], composites: list[tuple[float, float]]) -> StabilityReport:
    scale = max(abs(a) for a in coeffs)
    coeff_states = [_condition(a, scale) for a in coeffs]
    comp_states = [_condition(x, s) for x, s in composites]
    states = coeff_states + comp_states
    if all(s == 1 for s in states):
        verdict = Verdict.LOCALLY_STABLE
    elif any(s == -1 for s in states):
        verdict = Verdict.UNSTABLE
    else:
        verdict = Verdict.MARGINAL
    return StabilityReport(
        coefficients=tuple(float(a) for a in coeffs),
        positive=tuple(s == 1 for s in coeff_states),
        composite=tuple(s == 1 for s in comp_states),
        verdict=verdict,
    )


def routh_hurwitz_cubic(c: CharCoeffsCubic) -> StabilityReport:
    """Routh-Hurwitz test: ``A1, A2, A3 > 0`` and ``A1 A2 - A3 > 0``."""
    A1, A2, A3 = c
    return _rh_report((A1, A2, A3), [(A1 * A2 - A3, max(abs(A1 * A2), abs(A3)))])


def routh_hurwitz_quartic(c: CharCoeffsQuartic) -> StabilityReport:
    """Routh-Hurwitz test for quartics, adding ``A3 (A1 A2 - A3) - A4 A1^2 > 0``."""
    A1, A2, A3, A4 = c
    h2 = A1 * A2 - A3
    h3 = A3 * h2 - A4 * A1 * A1
    return _rh_report(
        (A1, A2, A3, A4),
        [(h2, max(abs(A1 * A2), abs(A3))), (h3, max(abs(A3 * h2), abs(A4 * A1 * A1)))],
    )


def eigen_spectrum(J: np.ndarray) -> EigenSpectrum:
    """All eigenvalues of a small dense matrix, with a residual check per eigenpair.

    LAPACK ``geev`` (balancing, Hessenberg reduction, shifted QR) does the work.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {J.shape}")
    _finite_matrix(J)
    try:
        w, v = np.linalg.eig(J)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigensolver did not converge: {exc}") from exc
    norm = float(np.linalg.norm(J, 2)) or 1.0
    residuals = np.linalg.norm(J @ v - v * w, axis=0) / np.linalg.norm(v, axis=0)
    worst = float(np.max(residuals)) if residuals.size else 0.0
    if worst > EIG_RESIDUAL_TOL * norm:
        raise EigenFailure(f"eigenpair residual {worst:.3e} exceeds {EIG_RESIDUAL_TOL:g} * ||J||")
    order = np.lexsort((w.imag, w.real))
    return EigenSpectrum(eigenvalues=w[order], max_residual=worst)


def spectrum_verdict(spec: EigenSpectrum, scale: float) -> Verdict:
    """Stable iff every eigenvalue has real part below ``-tol``; marginal inside ``[-tol, tol]``."""
    tol = RH_TOL * scale
    top = spec.max_real
    if top < -tol:
        return Verdict.LOCALLY_STABLE
    if top > tol:
        return Verdict.UNSTABLE
    return Verdict.MARGINAL


def _combine(rh: Verdict, numeric: Verdict, R: float, what: str) -> Verdict:
    if is_marginal(R):
        return Verdict.MARGINAL
    if {rh, numeric} == {Verdict.LOCALLY_STABLE, Verdict.UNSTABLE}:
        raise VerdictMismatchError(
            f"{what}: Routh-Hurwitz says {rh.value}, spectrum says {numeric.value} (R = {R!r})"
        )
    return rh if rh is not Verdict.MARGINAL else numeric


def classify_equilibrium(lp: LatentParams, eff: Efficacy, which: EquilibriumKind) -> StabilityReport:
    """Stability of a steady state of the latent model by both routes.

    For the non-infective state the cubic describes the quotient after the
    root ``-d_T`` is factored out; that root is reported in ``factored_root``
    and the spectrum covers all four eigenvalues.
    """
    which = EquilibriumKind(which)
    R = r_l(lp, eff)
    if which is EquilibriumKind.NON_INFECTIVE:
        rh = routh_hurwitz_cubic(char_coeffs_noninfective(lp, eff))
        at = State4(lp.core.T0, 0.0, 0.0, 0.0)
        factored = -lp.core.d_T
    else:
        rh = routh_hurwitz_quartic(char_coeffs_endemic(lp, eff))
        e = endemic_4cm(lp, eff, R)
        at = e.state
        factored = None
    J = jacobian_4cm(lp, eff, at)
    spec = eigen_spectrum(J)
    numeric = spectrum_verdict(spec, float(np.max(np.abs(J))))
    verdict = _combine(rh.verdict, numeric, R, which.value)
    return StabilityReport(
        coefficients=rh.coefficients,
        positive=rh.positive,
        composite=rh.composite,
        verdict=verdict,
        kind=which,
        reproduction_number=R,
        eigenvalues=tuple(complex(x) for x in spec.eigenvalues),
        factored_root=factored,
        numeric_verdict=numeric,
    )


def classify_equilibrium_3cm(core: CoreParams, eff: Efficacy, which: EquilibriumKind) -> StabilityReport:
    """Spectrum-only stability of a steady state of the three-component model."""
    which = EquilibriumKind(which)
    R = r0(core, eff)
    eqs = {e.kind: e for e in equilibria_3cm(core, eff)}
    if which not in eqs:
        raise EndemicAbsentError(f"endemic equilibrium absent: R_0 = {R!r} <= 1")
    J = jacobian_3cm(core, eff, eqs[which].state)
    spec = eigen_spectrum(J)
    numeric = spectrum_verdict(spec, float(np.max(np.abs(J))))
    verdict = Verdict.MARGINAL if is_marginal(R) else numeric
    return StabilityReport(
        coefficients=(), positive=(), composite=(), verdict=verdict, kind=which,
        reproduction_number=R, eigenvalues=tuple(complex(x) for x in spec.eigenvalues),
        numeric_verdict=numeric,
    )
