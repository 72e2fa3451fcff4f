"""Scenario and model files.

Files are YAML mappings carrying ``schema_version: 1``.  A *model* file needs
only the ``model`` and ``safety`` blocks; a *scenario* file adds the
controller, plant, schedule and horizon.  See ``scenarios/balancing.yaml``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .pose import PiawGains
from .safety import SafetyConfig
from .sim import (DisturbanceProfile, DisturbanceWindow, LimbGeometry, PoseModelParams,
                  SetpointSchedule)
from .thermal import (BlockLinearSystem, LumpedThermalParams, PhysicalThermalParams,
                      augment, build_block_system, lump)

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Malformed or invalid scenario/model file; the message names the field."""


@dataclass(frozen=True)
class ScenarioConfig:
    thermal: tuple[LumpedThermalParams, ...]
    safety: SafetyConfig
    gains: tuple[PiawGains, ...]
    pose_model: PoseModelParams
    geometry: LimbGeometry
    setpoints: SetpointSchedule
    disturbances: DisturbanceProfile = DisturbanceProfile()
    horizon: int = 1
    dt: float = 0.1
    initial_theta: tuple[float, ...] | None = None
    initial_temp: tuple[float, ...] | None = None

    @property
    def system(self) -> BlockLinearSystem:
        return build_block_system(self.thermal)

    @property
    def n_limbs(self) -> int:
        return self.setpoints.n_limbs

    @property
    def limb_gains(self) -> list[PiawGains]:
        return list(self.gains)

    @property
    def initial_x(self) -> np.ndarray:
        if self.initial_temp is None:
            return augment(self.system.ambient)
        return augment(self.initial_temp)


def bundled_scenario_path(name: str = "balancing") -> Path:
    return Path(str(resources.files("smasafe") / "scenarios" / f"{name}.yaml"))


def _load_yaml(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ScenarioError(f"{where}: YAML syntax error: {problem}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"{path}: schema_version must be {SCHEMA_VERSION}, got {version!r}")
    return doc


def _section(doc: dict, key: str, required: bool = True):
    if key not in doc:
        if required:
            raise ScenarioError(f"missing required block '{key}'")
        return None
    return doc[key]


def _build(field: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ScenarioError(f"{field}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{field}: {exc}") from None


def _mapping(field: str, value) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(f"{field}: expected a mapping, got {type(value).__name__}")
    return value


def _per_item(field: str, value, n: int | None) -> list:
    """Accept one mapping (replicated) or a list of mappings."""
    if isinstance(value, dict):
        return [value] * (n or 1)
    if isinstance(value, list) and value:
        if n is not None and len(value) != n:
            raise ScenarioError(f"{field}: expected {n} entries, got {len(value)}")
        return value
    raise ScenarioError(f"{field}: expected a mapping or a non-empty list")


def _parse_model(doc: dict, dt: float | None, n_wires: int | None) -> tuple[LumpedThermalParams, ...]:
    model = _mapping("model", _section(doc, "model"))
    if ("lumped" in model) == ("physical" in model):
        raise ScenarioError("model: give exactly one of 'lumped' or 'physical'")
    params = []
    if "lumped" in model:
        for i, item in enumerate(_per_item("model.lumped", model["lumped"], n_wires)):
            p = _build(f"model.lumped[{i}]", LumpedThermalParams, **_mapping(f"model.lumped[{i}]", item))
            if not p.a2 > 0:
                raise ScenarioError(f"model.lumped[{i}]: a2 must be > 0, got {p.a2}")
            params.append(p)
    else:
        for i, item in enumerate(_per_item("model.physical", model["physical"], n_wires)):
            item = dict(_mapping(f"model.physical[{i}]", item))
            if "dt" not in item:
                if dt is None:
                    raise ScenarioError(f"model.physical[{i}]: dt missing")
                item["dt"] = dt
            phys = _build(f"model.physical[{i}]", PhysicalThermalParams, **item)
            params.append(_build(f"model.physical[{i}]", lump, phys=phys))
    return tuple(params)


def _parse_safety(doc: dict, system: BlockLinearSystem) -> SafetyConfig:
    safety = _mapping("safety", _section(doc, "safety"))
    cfg = _build("safety", SafetyConfig, **safety)
    try:
        return cfg.validate_for(system)
    except ValueError as exc:
        raise ScenarioError(f"safety: {exc}") from None


def parse_model(path) -> tuple[BlockLinearSystem, SafetyConfig]:
    """Read the thermal model and safety block of a model or scenario file."""
    doc = _load_yaml(path)
    dt = doc.get("dt")
    thermal = _parse_model(doc, dt, None)
    system = build_block_system(thermal)
    return system, _parse_safety(doc, system)


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    dt = doc.get("dt", 0.1)
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
        raise ScenarioError(f"dt: must be a positive number, got {dt!r}")
    dt = float(dt)
    horizon = _section(doc, "horizon")
    if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 1:
        raise ScenarioError(f"horizon: must be an integer >= 1, got {horizon!r}")

    sp = _section(doc, "setpoints")
    if not isinstance(sp, list) or not sp:
        raise ScenarioError("setpoints: expected a non-empty list of {t, theta}")
    try:
        entries = tuple((float(_mapping(f"setpoints[{i}]", e)["t"]), tuple(e["theta"])) for i, e in enumerate(sp))
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"setpoints: each entry needs 't' and 'theta' ({exc})") from None
    setpoints = _build("setpoints", SetpointSchedule, entries=entries)
    J = setpoints.n_limbs

    thermal = _parse_model(doc, dt, 2 * J)
    if len(thermal) != 2 * J:
        raise ScenarioError(f"model: {J} limbs need {2 * J} wires, got {len(thermal)}")
    system = build_block_system(thermal)
    safety = _parse_safety(doc, system)

    gains_doc = _section(doc, "gains", required=False) or {}
    gains = tuple(_build(f"gains[{i}]", PiawGains, dt=dt, **_mapping(f"gains[{i}]", g))
                  for i, g in enumerate(_per_item("gains", gains_doc, J)))

    pm_doc = dict(_mapping("pose_model", _section(doc, "pose_model", required=False) or {}))
    load = pm_doc.get("load", 0.0)
    if isinstance(load, list) and len(load) != J:
        raise ScenarioError(f"pose_model.load: expected {J} entries, got {len(load)}")
    if isinstance(load, list):
        pm_doc["load"] = tuple(load)
    pose_model = _build("pose_model", PoseModelParams, dt=dt, **pm_doc)

    geom_doc = dict(_mapping("geometry", _section(doc, "geometry", required=False) or {}))
    if "chain" not in geom_doc and J != 5:
        # the default chain is laid out for five limbs; otherwise walk every limb, last one grounded
        geom_doc["chain"] = tuple(range(J - 1, -1, -1))
    if isinstance(geom_doc.get("chain"), list):
        geom_doc["chain"] = tuple(geom_doc["chain"])
    if isinstance(geom_doc.get("base_pose"), list):
        geom_doc["base_pose"] = tuple(geom_doc["base_pose"])
    geometry = _build("geometry", LimbGeometry, **geom_doc)
    if any(not 0 <= j < J for j in geometry.chain):
        raise ScenarioError(f"geometry.chain: limb indices must lie in [0, {J - 1}]")

    windows = []
    for i, w in enumerate(_section(doc, "disturbances", required=False) or []):
        w = _mapping(f"disturbances[{i}]", w)
        window = _build(f"disturbances[{i}]", DisturbanceWindow, **w)
        if len(window.bias) != J:
            raise ScenarioError(f"disturbances[{i}].bias: expected {J} entries, got {len(window.bias)}")
        windows.append(window)

    init = _mapping("initial", _section(doc, "initial", required=False) or {})
    theta0 = init.get("theta", [0.0] * J)
    if len(theta0) != J:
        raise ScenarioError(f"initial.theta: expected {J} entries, got {len(theta0)}")
    temp0 = init.get("temp")
    if temp0 is not None:
        temp0 = tuple(float(t) for t in np.broadcast_to(np.asarray(temp0, dtype=float), (2 * J,)))
        if np.any(np.array(temp0) > np.broadcast_to(safety.t_max, (2 * J,))):
            raise ScenarioError("initial.temp: every wire must start at or below t_max")

    return ScenarioConfig(
        thermal=thermal, safety=safety, gains=gains, pose_model=pose_model, geometry=geometry,
        setpoints=setpoints, disturbances=DisturbanceProfile(tuple(windows)), horizon=horizon,
        dt=dt, initial_theta=tuple(float(t) for t in theta0), initial_temp=temp0,
    )


def parse_scenario(path) -> ScenarioConfig:
    return scenario_from_dict(_load_yaml(path))


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    pm = asdict(cfg.pose_model)
    pm.pop("dt")
    pm["load"] = list(pm["load"]) if isinstance(pm["load"], tuple) else pm["load"]
    gains = []
    for g in cfg.gains:
        d = asdict(g)
        d.pop("dt")
        gains.append(d)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dt": cfg.dt,
        "horizon": cfg.horizon,
        "model": {"lumped": [asdict(p) for p in cfg.thermal]},
        "safety": {"t_max": list(cfg.safety.t_max) if isinstance(cfg.safety.t_max, tuple) else cfg.safety.t_max,
                   "gamma": cfg.safety.gamma},
        "gains": gains,
        "pose_model": pm,
        "geometry": {"seg_len": cfg.geometry.seg_len, "base_pose": list(cfg.geometry.base_pose),
                     "chain": list(cfg.geometry.chain)},
        "setpoints": [{"t": t, "theta": list(q)} for t, q in cfg.setpoints.entries],
        "disturbances": [{"t_start": w.t_start, "t_end": w.t_end, "bias": list(w.bias)}
                         for w in cfg.disturbances.windows],
        "initial": {"theta": list(cfg.initial_theta)},
    }
    if cfg.initial_temp is not None:
        doc["initial"]["temp"] = list(cfg.initial_temp)
    return doc


def dump_scenario(cfg: ScenarioConfig, path=None) -> str:
    text = yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
