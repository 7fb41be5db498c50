"""Scenario configuration, run reports and their file formats.

A scenario is one JSON document::

    {
      "model": "latent",                      # or "3cm"
      "params": {"preset": "table1", "p": 0.05},
      "efficacy": {"eps_RT": 0.0, "eps_PI": 0.519},
      "initials": {"preset": "init-default"},
      "solver": {"rtol": 1e-8, "t_max": 10000},
      "output": {"horizon": 600, "samples": 1000, "sampling": "log",
                 "times": [100, 365],
                 "events": [{"component": "V", "threshold": 1e-5}]}
    }

Every section is optional; presets are resolved first and individual fields
override them. ``efficacy`` also accepts ``{"epsilon": x}`` as shorthand for
PI-only therapy. ``output.times`` adds exact sample times to the
trajectory grid, alongside any event times.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import analysis, stability
from .analysis import EquilibriumKind
from .errors import ConfigError, HivModelError, SingularityError
from .integrator import Direction, EventSpec, SolverConfig, Trajectory
from .model import CoreParams, Efficacy, LatentParams, State4
from .presets import INITIAL_PRESETS, PARAM_PRESETS, params_as_dict

__all__ = [
    "ModelKind",
    "OutputOptions",
    "Scenario",
    "RunReport",
    "DEFAULT_CONFIG",
    "parse_config_text",
    "apply_overrides",
    "load_scenario",
    "build_report",
    "sample_times",
    "format_float",
    "write_csv",
]

PARAM_KEYS = ("lam", "d_T", "d_I", "d_V", "k", "N", "p", "alpha", "d_L")
STATE_KEYS = ("T", "I", "L", "V")
SOLVER_KEYS = ("rtol", "atol", "h_init", "h_max", "t_max")
TOP_KEYS = ("model", "params", "efficacy", "initials", "solver", "output")


class ModelKind:
    THREE_COMPONENT = "3cm"
    LATENT = "latent"
    ALL = (THREE_COMPONENT, LATENT)


DEFAULT_CONFIG: dict[str, Any] = {
    "model": ModelKind.LATENT,
    "params": {"preset": "table1"},
    "efficacy": {},
    "initials": {"preset": "init-default"},
    "solver": {},
    "output": {},
}


@dataclass(frozen=True)
class OutputOptions:
    horizon: Optional[float] = None
    samples: int = 1000
    sampling: str = "log"
    events: tuple[EventSpec, ...] = ()
    times: tuple[float, ...] = ()


@dataclass(frozen=True)
class Scenario:
    model: str
    params: LatentParams
    efficacy: Efficacy
    initials: State4
    solver: SolverConfig
    output: OutputOptions = field(default_factory=OutputOptions)

    @property
    def core(self) -> CoreParams:
        return self.params.core

    @property
    def horizon(self) -> float:
        return self.solver.t_max if self.output.horizon is None else self.output.horizon

    @property
    def state_names(self) -> tuple[str, ...]:
        return ("T", "I", "V") if self.model == ModelKind.THREE_COMPONENT else STATE_KEYS

    def initial_vector(self) -> tuple[float, ...]:
        s = self.initials
        if self.model == ModelKind.THREE_COMPONENT:
            return (s.T, s.I, s.V)
        return tuple(s)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return doc


def _coerce_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: Iterable[str]) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as JSON when possible."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        path, raw = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"--set {item!r}: empty key")
        node = doc
        for key in keys[:-1]:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigError(f"--set {item!r}: {key!r} is not a section")
            node = child
        node[keys[-1]] = _coerce_value(raw.strip())
    return doc


def _number(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    return float(value)


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object, got {type(value).__name__}")
    return value


def _check_keys(name: str, section: dict, allowed: Sequence[str]) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}: unknown field(s) {', '.join(unknown)}; allowed: {', '.join(allowed)}")


def _resolve_params(section: dict) -> LatentParams:
    _check_keys("params", section, ("preset",) + PARAM_KEYS)
    preset = section.get("preset", "table1")
    if preset not in PARAM_PRESETS:
        raise ConfigError(f"params.preset: unknown preset {preset!r}; known: {', '.join(PARAM_PRESETS)}")
    values = params_as_dict(PARAM_PRESETS[preset])
    for key in PARAM_KEYS:
        if key in section:
            values[key] = _number("params", key, section[key])
    try:
        core = CoreParams(*(values[k] for k in PARAM_KEYS[:6]))
        return LatentParams(core, values["p"], values["alpha"], values["d_L"])
    except HivModelError as exc:
        raise ConfigError(f"params: {exc}") from exc


def _resolve_efficacy(section: dict) -> Efficacy:
    _check_keys("efficacy", section, ("eps_RT", "eps_PI", "epsilon"))
    if "epsilon" in section and ("eps_PI" in section or "eps_RT" in section):
        raise ConfigError("efficacy: give either epsilon (PI-only) or eps_RT/eps_PI, not both")
    try:
        if "epsilon" in section:
            return Efficacy(0.0, _number("efficacy", "epsilon", section["epsilon"]))
        return Efficacy(
            _number("efficacy", "eps_RT", section.get("eps_RT", 0.0)),
            _number("efficacy", "eps_PI", section.get("eps_PI", 0.0)),
        )
    except HivModelError as exc:
        raise ConfigError(f"efficacy: {exc}") from exc


def _resolve_initials(section: dict) -> State4:
    _check_keys("initials", section, ("preset",) + STATE_KEYS)
    preset = section.get("preset", "init-default")
    if preset not in INITIAL_PRESETS:
        raise ConfigError(f"initials.preset: unknown preset {preset!r}; known: {', '.join(INITIAL_PRESETS)}")
    values = INITIAL_PRESETS[preset]._asdict()
    for key in STATE_KEYS:
        if key in section:
            values[key] = _number("initials", key, section[key])
    for key, value in values.items():
        if not (math.isfinite(value) and value >= 0):
            raise ConfigError(f"initials.{key}: must be finite and nonnegative, got {value!r}")
    return State4(**values)


def _resolve_solver(section: dict) -> SolverConfig:
    _check_keys("solver", section, SOLVER_KEYS)
    kwargs: dict[str, Any] = {}
    for key in ("rtol", "h_init", "h_max", "t_max"):
        if section.get(key) is not None:
            kwargs[key] = _number("solver", key, section[key])
    if section.get("atol") is not None:
        atol = section["atol"]
        if isinstance(atol, list):
            kwargs["atol"] = tuple(_number("solver", "atol", a) for a in atol)
        else:
            kwargs["atol"] = _number("solver", "atol", atol)
    try:
        return SolverConfig(**kwargs)
    except HivModelError as exc:
        raise ConfigError(f"solver: {exc}") from exc


def _resolve_event(item: Any, names: Sequence[str], index: int) -> EventSpec:
    where = f"output.events[{index}]"
    if not isinstance(item, dict):
        raise ConfigError(f"{where}: expected an object")
    _check_keys(where, item, ("component", "threshold", "direction"))
    comp = item.get("component", "V")
    if isinstance(comp, str):
        if comp not in names:
            raise ConfigError(f"{where}.component: {comp!r} is not one of {', '.join(names)}")
        comp = names.index(comp)
    elif isinstance(comp, bool) or not isinstance(comp, int) or not 0 <= comp < len(names):
        raise ConfigError(f"{where}.component: invalid component {comp!r}")
    if "threshold" not in item:
        raise ConfigError(f"{where}.threshold: missing")
    try:
        direction = Direction(item.get("direction", "down"))
    except ValueError:
        raise ConfigError(f"{where}.direction: expected 'down' or 'up'") from None
    try:
        return EventSpec(comp, _number(where, "threshold", item["threshold"]), direction)
    except HivModelError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _resolve_output(section: dict, names: Sequence[str]) -> OutputOptions:
    _check_keys("output", section, ("horizon", "samples", "sampling", "events", "times"))
    horizon = section.get("horizon")
    if horizon is not None:
        horizon = _number("output", "horizon", horizon)
        if not (math.isfinite(horizon) and horizon >= 0):
            raise ConfigError(f"output.horizon: must be finite and nonnegative, got {horizon!r}")
    samples = section.get("samples", 1000)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise ConfigError(f"output.samples: expected a positive integer, got {samples!r}")
    sampling = section.get("sampling", "log")
    if sampling not in ("log", "linear"):
        raise ConfigError(f"output.sampling: expected 'log' or 'linear', got {sampling!r}")
    events = section.get("events", [])
    if not isinstance(events, list):
        raise ConfigError("output.events: expected a list")
    times = section.get("times", [])
    if not isinstance(times, list):
        raise ConfigError("output.times: expected a list of times in days")
    extra = tuple(_number("output", f"times[{i}]", t) for i, t in enumerate(times))
    if any(not (math.isfinite(t) and t >= 0) for t in extra):
        raise ConfigError("output.times: every time must be finite and nonnegative")
    return OutputOptions(
        horizon, samples, sampling, tuple(_resolve_event(e, names, i) for i, e in enumerate(events)), extra
    )


def load_scenario(doc: dict) -> Scenario:
    """Validate a configuration document and build a :class:`Scenario`."""
    _check_keys("config", doc, TOP_KEYS)
    model = doc.get("model", ModelKind.LATENT)
    if model not in ModelKind.ALL:
        raise ConfigError(f"model: expected one of {', '.join(ModelKind.ALL)}, got {model!r}")
    names = ("T", "I", "V") if model == ModelKind.THREE_COMPONENT else STATE_KEYS
    return Scenario(
        model=model,
        params=_resolve_params(_section(doc, "params")),
        efficacy=_resolve_efficacy(_section(doc, "efficacy")),
        initials=_resolve_initials(_section(doc, "initials")),
        solver=_resolve_solver(_section(doc, "solver")),
        output=_resolve_output(_section(doc, "output"), names),
    )


# -- reports -------------------------------------------------------------------


def format_float(x: float) -> str:
    """Shortest round-trip decimal form; ``inf``/``-inf``/``nan`` literals for non-finite values."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _encode(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return format_float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return _encode(obj.item())
    return obj


def _decode_special(obj: Any) -> Any:
    if isinstance(obj, str) and obj in ("inf", "-inf", "nan"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _decode_special(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode_special(v) for v in obj]
    return obj


@dataclass
class RunReport:
    """Structured output of an analysis run; round-trips through JSON exactly."""

    model: str
    params: dict
    efficacy: dict
    reproduction: dict
    equilibria: dict
    stability: dict
    setpoint: Optional[dict] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "efficacy": self.efficacy,
            "reproduction": self.reproduction,
            "equilibria": self.equilibria,
            "stability": self.stability,
            "setpoint": self.setpoint,
            "extras": self.extras,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(_encode(self.to_dict()), indent=indent, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**_decode_special(json.loads(text)))


def _equilibrium_dict(e) -> dict:
    out = {"kind": e.kind.value}
    for name in ("T", "I", "L", "V"):
        if hasattr(e, name):
            out[name] = getattr(e, name)
    return out


def _stability_dict(rep: stability.StabilityReport) -> dict:
    return {
        "verdict": rep.verdict.value,
        "numeric_verdict": rep.numeric_verdict.value if rep.numeric_verdict else None,
        "reproduction_number": rep.reproduction_number,
        "coefficients": list(rep.coefficients),
        "coefficients_positive": list(rep.positive),
        "composite_conditions": list(rep.composite),
        "eigenvalues": [complex(z) for z in rep.eigenvalues or ()],
        "factored_root": rep.factored_root,
    }


def build_report(sc: Scenario) -> RunReport:
    """Reproduction numbers, steady states and stability verdicts for a scenario.

    Both models are reported; the latent model's closed-form Routh-Hurwitz
    verdicts are cross-checked against the numeric spectrum.
    """
    lp, eff = sc.params, sc.efficacy
    R0 = analysis.r0(lp.core)
    Q = analysis.q_ratio(lp)
    RL = analysis.r_l(lp)
    R0_eps = analysis.r0(lp.core, eff)
    RL_eps = analysis.r_l(lp, eff)
    reproduction = {
        "R0": R0,
        "RL": RL,
        "Q": Q,
        "Q_alt": analysis.q_ratio_alt(lp),
        "one_minus_Q_percent": round(100.0 * (1.0 - Q)),
        "R0_treated": R0_eps,
        "RL_treated": RL_eps,
        "p_zero_degenerate": lp.p == 0.0,
        "RL_equals_R0": RL == R0,
    }
    eq3 = analysis.equilibria_3cm(lp.core, eff)
    eq4 = analysis.equilibria_4cm(lp, eff)
    stab4 = {
        EquilibriumKind.NON_INFECTIVE.value: _stability_dict(
            stability.classify_equilibrium(lp, eff, EquilibriumKind.NON_INFECTIVE)
        )
    }
    if len(eq4) > 1:
        stab4[EquilibriumKind.ENDEMIC.value] = _stability_dict(
            stability.classify_equilibrium(lp, eff, EquilibriumKind.ENDEMIC)
        )
    stab3 = {
        e.kind.value: _stability_dict(stability.classify_equilibrium_3cm(lp.core, eff, e.kind)) for e in eq3
    }
    setpoint = None
    try:
        sens = analysis.setpoint_sensitivity(lp, eff)
        setpoint = {
            "V_bar": analysis.setpoint_viral_load(lp, eff),
            "dV_dEpsRT": sens.dV_dEpsRT,
            "dV_dEpsPI": sens.dV_dEpsPI,
        }
    except SingularityError:
        pass
    return RunReport(
        model=sc.model,
        params=params_as_dict(lp),
        efficacy={"eps_RT": eff.eps_RT, "eps_PI": eff.eps_PI, "epsilon": eff.combined},
        reproduction=reproduction,
        equilibria={
            ModelKind.THREE_COMPONENT: [_equilibrium_dict(e) for e in eq3],
            ModelKind.LATENT: [_equilibrium_dict(e) for e in eq4],
        },
        stability={ModelKind.THREE_COMPONENT: stab3, ModelKind.LATENT: stab4},
        setpoint=setpoint,
    )


def sample_times(horizon: float, samples: int, sampling: str, extra: Iterable[float] = ()) -> np.ndarray:
    """Output grid: ``t = 0``, ``samples`` log- or linearly spaced points up to ``horizon``, and ``extra`` times.

    Log spacing starts six decades below the horizon.
    """
    if horizon == 0:
        return np.array([0.0])
    if sampling == "log":
        grid = np.concatenate(([0.0], np.geomspace(horizon * 1e-6, horizon, max(samples, 1))))
    else:
        grid = np.linspace(0.0, horizon, max(samples, 2))
    grid[-1] = horizon
    extra = [t for t in extra if 0.0 <= t <= horizon]
    return np.unique(np.concatenate((grid, np.asarray(extra, dtype=float))))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write rows with floats in shortest round-trip form and a ``\\n`` line terminator."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else ("" if v is None else v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def trajectory_rows(traj: Trajectory, times: np.ndarray) -> list[list[float]]:
    values = traj(times)
    return [[float(t), *map(float, row)] for t, row in zip(times, values)]


def trajectory_summary(traj: Trajectory, names: Sequence[str]) -> dict:
    return {
        "t_end": traj.t_end,
        "final_state": dict(zip(names, map(float, traj.final_state))),
        "steps": len(traj.t) - 1,
        "nfev": traj.nfev,
        "rejected_steps": traj.n_rejected,
        "worst_undershoot_atol_units": traj.worst_undershoot,
        "events": [
            {"t": rec.t, "component": names[rec.component], "threshold": rec.threshold,
             "direction": rec.direction.value}
            for rec in traj.events
        ],
    }
