"""JSON configuration: parse, validate, deep-merge onto presets, and
materialize every default for manifests.

Infinite durations and bounds are written as ``null``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .controller import (
    ControllerConfig,
    ForceSegment,
    HysteresisConfig,
    PositionSegment,
    ReferenceSpec,
    ReturnRule,
)
from .errors import ValidationError
from .linear_system import DESIGN_OPERATING_POINTS, GainVector, OperatingPoint
from .lyapunov import LyapunovWeights
from .plant import FORCE, POSITION, DynamicLoad, FrictionModel, HardStop, PlantParams, PlantState
from .simulation import PRESETS, NoiseConfig, ScenarioConfig

SECTIONS = ("scenario", "plant", "friction", "environment", "gains", "controller",
            "hysteresis", "reference", "noise", "initial", "lyapunov")
_MODES = {"position": POSITION, "force": FORCE}
_ENVS = {"hard_stop": HardStop, "dynamic_load": DynamicLoad}
_SCENARIO_KEYS = ("preset", "name", "variant", "duration", "dt", "seed", "run_count",
                  "decimation", "supply_flow_lpm")
# fields where null means +inf
_INF_FIELDS = {"duration", "e_max"}


@dataclass(frozen=True)
class Config:
    scenario: ScenarioConfig
    desired_poles: dict | None = None
    preset: str = "A"


def _encode(v):
    if isinstance(v, float) and math.isinf(v):
        return None
    return v


def _dc_to_dict(obj) -> dict:
    return {f.name: _encode(getattr(obj, f.name)) for f in fields(obj) if f.init}


def _dc_from_dict(cls, d, path: str):
    if not isinstance(d, dict):
        raise ValidationError(f"expected an object, got {type(d).__name__}", path)
    names = {f.name for f in fields(cls) if f.init}
    unknown = set(d) - names
    if unknown:
        raise ValidationError(f"unknown key(s) {sorted(unknown)}", path)
    kw = {}
    for k, v in d.items():
        if v is None and k in _INF_FIELDS:
            v = math.inf
        kw[k] = v
    try:
        return cls(**kw)
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), path) from exc


def _modes_to_dict(m: dict) -> dict:
    return {name: _dc_to_dict(m[h]) for name, h in _MODES.items()}


def _modes_from_dict(cls, d, path: str) -> dict:
    if not isinstance(d, dict) or set(d) - set(_MODES):
        raise ValidationError("expected keys 'position' and/or 'force'", path)
    return {h: _dc_from_dict(cls, d[name], f"{path}.{name}") for name, h in _MODES.items()}


def to_dict(cfg: Config) -> dict:
    """Fully resolved configuration document."""
    s = cfg.scenario
    env = _dc_to_dict(s.environment)
    env["kind"] = s.environment.kind
    desired = None
    if cfg.desired_poles is not None:
        desired = {name: [[complex(p).real, complex(p).imag] for p in cfg.desired_poles[h]]
                   for name, h in _MODES.items() if h in cfg.desired_poles}
    return {
        "scenario": {"preset": cfg.preset, "name": s.name, "variant": s.variant,
                     "duration": s.duration, "dt": s.dt, "seed": s.seed, "run_count": s.run_count,
                     "decimation": s.decimation, "supply_flow_lpm": s.supply_flow_lpm},
        "plant": _dc_to_dict(s.plant),
        "friction": _dc_to_dict(s.friction),
        "environment": env,
        "gains": {**_modes_to_dict(s.gains), "desired_poles": desired,
                  "operating_points": _modes_to_dict(s.operating_points)},
        "controller": _dc_to_dict(s.controller),
        "hysteresis": _dc_to_dict(s.hysteresis),
        "reference": {
            "position": [_dc_to_dict(seg) for seg in s.reference.position],
            "force": [_dc_to_dict(seg) for seg in s.reference.force],
            "position_return": _dc_to_dict(s.reference.position_return),
            "position_start": s.reference.position_start,
        },
        "noise": _dc_to_dict(s.noise),
        "initial": _dc_to_dict(s.initial),
        "lyapunov": _modes_to_dict(s.weights),
    }


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        p = f"{path}.{k}" if path else k
        if k not in out:
            raise ValidationError("unknown key", p)
        if isinstance(v, dict) and isinstance(out[k], dict):
            out[k] = _merge(out[k], v, p)
        else:
            out[k] = v
    return out


def _parse_poles(d, path: str) -> dict:
    out = {}
    for name, plist in d.items():
        if name not in _MODES:
            raise ValidationError("unknown mode", f"{path}.{name}")
        try:
            out[_MODES[name]] = [complex(float(p[0]), float(p[1])) if isinstance(p, (list, tuple))
                                 else complex(float(p)) for p in plist]
        except (TypeError, ValueError, IndexError) as exc:
            raise ValidationError(f"poles must be [re, im] pairs or reals ({exc})", f"{path}.{name}") from exc
    return out


def from_dict(doc: dict) -> Config:
    """Build a :class:`Config` from a (partial) document.

    The document is merged over the preset named in ``scenario.preset``
    (default ``"A"``); unknown keys anywhere are rejected with their path.
    """
    if not isinstance(doc, dict):
        raise ValidationError("configuration must be a JSON object", "config")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ValidationError(f"unknown section(s) {sorted(unknown)}", "config")
    preset = (doc.get("scenario") or {}).get("preset", "A")
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "scenario.preset")
    base = to_dict(Config(PRESETS[preset](), preset=preset))

    doc = copy.deepcopy(doc)
    env_over = doc.get("environment")
    if isinstance(env_over, dict) and env_over.get("kind", base["environment"]["kind"]) != base["environment"]["kind"]:
        kind = env_over["kind"]
        if kind not in _ENVS:
            raise ValidationError(f"unknown kind {kind!r}", "environment.kind")
        base["environment"] = {**_dc_to_dict(_ENVS[kind]()), "kind": kind}
    # segment lists replace the preset lists wholesale
    ref_over = doc.get("reference")
    if isinstance(ref_over, dict):
        for k in ("position", "force"):
            if k in ref_over:
                base["reference"][k] = ref_over.pop(k)
    merged = _merge(base, doc)
    return _build(merged)


def _build(d: dict) -> Config:
    sc = d["scenario"]
    bad = set(sc) - set(_SCENARIO_KEYS)
    if bad:
        raise ValidationError(f"unknown key(s) {sorted(bad)}", "scenario")
    env_d = dict(d["environment"])
    kind = env_d.pop("kind", "hard_stop")
    if kind not in _ENVS:
        raise ValidationError(f"unknown kind {kind!r}", "environment.kind")
    g = dict(d["gains"])
    desired = g.pop("desired_poles", None)
    ops = g.pop("operating_points", None)
    ref = d["reference"]
    for k in ref:
        if k not in ("position", "force", "position_return", "position_start"):
            raise ValidationError("unknown key", f"reference.{k}")

    def segs(cls, items, path):
        if not isinstance(items, list):
            raise ValidationError("expected a list of segments", path)
        return tuple(_dc_from_dict(cls, s, f"{path}[{i}]") for i, s in enumerate(items))

    reference = ReferenceSpec(
        position=segs(PositionSegment, ref["position"], "reference.position"),
        force=segs(ForceSegment, ref["force"], "reference.force"),
        position_return=_dc_from_dict(ReturnRule, ref["position_return"], "reference.position_return"),
        position_start=float(ref["position_start"]),
    )
    duration = math.inf if sc["duration"] is None else sc["duration"]
    for key, typ in (("seed", int), ("run_count", int), ("decimation", int)):
        if not isinstance(sc[key], typ) or isinstance(sc[key], bool):
            raise ValidationError("must be an integer", f"scenario.{key}")
    try:
        scenario = ScenarioConfig(
            name=sc["name"], variant=sc["variant"], duration=duration, dt=sc["dt"],
            plant=_dc_from_dict(PlantParams, d["plant"], "plant"),
            friction=_dc_from_dict(FrictionModel, d["friction"], "friction"),
            environment=_dc_from_dict(_ENVS[kind], env_d, "environment"),
            gains=_modes_from_dict(GainVector, g, "gains"),
            operating_points=(_modes_from_dict(OperatingPoint, ops, "gains.operating_points")
                              if ops else dict(DESIGN_OPERATING_POINTS)),
            controller=_dc_from_dict(ControllerConfig, d["controller"], "controller"),
            hysteresis=_dc_from_dict(HysteresisConfig, d["hysteresis"], "hysteresis"),
            reference=reference,
            noise=_dc_from_dict(NoiseConfig, d["noise"], "noise"),
            initial=_dc_from_dict(PlantState, d["initial"], "initial"),
            weights=_modes_from_dict(LyapunovWeights, d["lyapunov"], "lyapunov"),
            seed=sc["seed"], run_count=sc["run_count"], decimation=sc["decimation"],
            supply_flow_lpm=sc["supply_flow_lpm"],
        )
    except TypeError as exc:
        raise ValidationError(str(exc), "scenario") from exc
    poles = _parse_poles(desired, "gains.desired_poles") if desired else None
    return Config(scenario=scenario, desired_poles=poles, preset=sc.get("preset", "A"))


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}", "config") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}", "config") from exc
    return from_dict(doc)
