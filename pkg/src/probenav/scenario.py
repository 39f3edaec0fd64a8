"""Scenario files: YAML in, validated simulation configuration out.

A scenario document has the top-level sections ``world``, ``robot``,
``sensors``, ``probe``, ``fusion``, ``planner`` and ``run`` (plus an optional
``name``).  Omitted keys take the library defaults; unknown keys are errors.
See ``scenarios/sim-garden.yaml`` for a commented example.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .collapsibility import ProbeConfig
from .geometry import VarianceModel
from .planner import PlannerConfig
from .probing import ProbePlannerConfig
from .semantics import SemanticClass, SemanticSensorSpec
from .simulation import SimConfig
from .traversability import FusionConfig
from .world import BearingRegion, DepthSensorSpec, HeightPrimitive, Rect, SemanticRegion, WorldSpec

SECTIONS = ("name", "world", "robot", "sensors", "probe", "fusion", "planner", "run")


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(ScenarioError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys."""


def _construct_mapping(loader, node, deep=False):
    loader.flatten_mapping(node)
    seen = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            mark = key_node.start_mark
            raise ParseError(f"duplicate key {key!r}", mark.line + 1, mark.column + 1)
        seen[key] = True
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass(frozen=True)
class Scenario:
    sim: SimConfig
    max_ticks: int = 600
    snapshot_every: int = 0
    name: str = "scenario"

    def to_dict(self) -> dict:
        return scenario_to_dict(self)


# -- helpers -----------------------------------------------------------------

def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ValidationError(name, "section must be a mapping")
    return value


def _reject_unknown(section: str, data: dict, allowed) -> None:
    for key in data:
        if key not in allowed:
            raise ValidationError(f"{section}.{key}", "unknown key")


def _number(field: str, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(field, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ValidationError(field, f"expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(field, "must be finite")
    return value


def _vector(field: str, value, n: int) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ValidationError(field, f"expected a list of {n} numbers")
    return tuple(_number(field, v) for v in value)


def _rect(field: str, value) -> Rect:
    x0, y0, x1, y1 = _vector(field, value, 4)
    try:
        return Rect(x0, y0, x1, y1)
    except ValueError as exc:
        raise ValidationError(field, str(exc)) from None


def _build(cls, section: str, data: dict, rename: dict | None = None):
    """Instantiate a config dataclass from a mapping with type coercion."""
    rename = rename or {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = rename.get(key, key)
        if name not in fields:
            raise ValidationError(f"{section}.{key}", "unknown key")
        default = fields[name].default
        label = f"{section}.{key}"
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ValidationError(label, f"expected true/false, got {value!r}")
            kwargs[name] = value
        elif isinstance(default, int):
            kwargs[name] = _number(label, value, int)
        else:
            kwargs[name] = _number(label, value)
    return _construct(cls, section, kwargs, rename)


def _construct(cls, section: str, kwargs: dict, rename: dict | None = None):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        first = msg.split()[0].rstrip(",") if msg else ""
        back = {v: k for k, v in (rename or {}).items()}
        names = {f.name for f in dataclasses.fields(cls)}
        field = f"{section}.{back.get(first, first)}" if first in names else section
        raise ValidationError(field, msg) from None


# -- parsing -----------------------------------------------------------------

_HEIGHT_KEYS = {"type", "rect", "z", "gradient"}


def _parse_world(world: dict, robot: dict) -> WorldSpec:
    _reject_unknown(
        "world", world, {"extent", "resolution", "heights", "semantic", "bearing", "default_bearing", "fail_force"}
    )
    _reject_unknown("robot", robot, {"start", "goal", "speed"})
    if "extent" not in world:
        raise ValidationError("world.extent", "required")
    kwargs: dict[str, Any] = {"extent": _vector("world.extent", world["extent"], 2)}
    if "resolution" in world:
        res = _number("world.resolution", world["resolution"])
        if not res > 0:
            raise ValidationError("resolution", "must be positive")
        kwargs["resolution"] = res
    for key in ("default_bearing", "fail_force"):
        if key in world:
            kwargs[key] = _number(f"world.{key}", world[key])

    heights = []
    for i, h in enumerate(world.get("heights") or [{"type": "plane"}]):
        label = f"world.heights[{i}]"
        if not isinstance(h, dict):
            raise ValidationError(label, "must be a mapping")
        _reject_unknown(label, h, _HEIGHT_KEYS)
        kind = h.get("type")
        if kind not in ("plane", "box", "ramp"):
            raise ValidationError(f"{label}.type", f"expected plane, box or ramp, got {kind!r}")
        hk: dict[str, Any] = {"kind": kind, "z": _number(f"{label}.z", h.get("z", 0.0))}
        if kind != "plane":
            if "rect" not in h:
                raise ValidationError(f"{label}.rect", "required")
            hk["rect"] = _rect(f"{label}.rect", h["rect"])
        elif "rect" in h:
            raise ValidationError(f"{label}.rect", "plane takes no rect")
        if "gradient" in h:
            if kind != "ramp":
                raise ValidationError(f"{label}.gradient", "only ramps have a gradient")
            hk["gradient"] = _vector(f"{label}.gradient", h["gradient"], 2)
        heights.append(HeightPrimitive(**hk))
    kwargs["heights"] = tuple(heights)

    regions = []
    for i, s in enumerate(world.get("semantic") or []):
        label = f"world.semantic[{i}]"
        if not isinstance(s, dict):
            raise ValidationError(label, "must be a mapping")
        _reject_unknown(label, s, {"class", "rect"})
        try:
            cls = SemanticClass.parse(str(s.get("class")))
        except ValueError as exc:
            raise ValidationError(f"{label}.class", str(exc)) from None
        if cls == SemanticClass.NONE:
            raise ValidationError(f"{label}.class", "regions must be plants or water")
        regions.append(SemanticRegion(_rect(f"{label}.rect", s.get("rect")), cls))
    kwargs["semantic_regions"] = tuple(regions)

    bearing = []
    for i, b in enumerate(world.get("bearing") or []):
        label = f"world.bearing[{i}]"
        if not isinstance(b, dict):
            raise ValidationError(label, "must be a mapping")
        _reject_unknown(label, b, {"force", "rect"})
        force = _number(f"{label}.force", b.get("force"))
        if force < 0:
            raise ValidationError(f"{label}.force", "must be >= 0")
        bearing.append(BearingRegion(_rect(f"{label}.rect", b.get("rect")), force))
    kwargs["bearing_regions"] = tuple(bearing)

    if "start" not in robot or "goal" not in robot:
        raise ValidationError("robot.start" if "start" not in robot else "robot.goal", "required")
    start = robot["start"]
    if isinstance(start, (list, tuple)) and len(start) == 2:
        start = list(start) + [0.0]
    kwargs["start_pose"] = _vector("robot.start", start, 3)
    kwargs["goal"] = _vector("robot.goal", robot["goal"], 2)
    try:
        return WorldSpec(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        field = "robot." + msg.split()[0] if msg.startswith(("start", "goal")) else "world"
        raise ValidationError(field, msg) from None


def load_document(text: str) -> dict:
    try:
        doc = yaml.load(text, Loader=_StrictLoader)
    except ParseError:
        raise
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ParseError(exc.problem or str(exc), line, col) from None
    except yaml.YAMLError as exc:
        raise ParseError(str(exc)) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a mapping of sections", 1, 1)
    return doc


def scenario_from_dict(doc: dict) -> Scenario:
    _reject_unknown("scenario", doc, SECTIONS)
    world_sec, robot_sec = _section(doc, "world"), _section(doc, "robot")
    world = _parse_world(world_sec, {k: v for k, v in robot_sec.items()})

    sensors = _section(doc, "sensors")
    _reject_unknown("sensors", sensors, {"depth", "semantic"})
    depth_sec = dict(_section(sensors, "depth"))
    vm_sec = {k: depth_sec.pop(k) for k in ("base_var", "range_coeff") if k in depth_sec}
    depth = _build(DepthSensorSpec, "sensors.depth", depth_sec)
    variance = _build(VarianceModel, "sensors.depth", vm_sec)
    semantic = _build(SemanticSensorSpec, "sensors.semantic", _section(sensors, "semantic"))

    probe_sec = dict(_section(doc, "probe"))
    probe_keys = {f.name for f in dataclasses.fields(ProbeConfig)}
    probe = _build(ProbeConfig, "probe", {k: v for k, v in probe_sec.items() if k in probe_keys})
    probing = _build(ProbePlannerConfig, "probe", {k: v for k, v in probe_sec.items() if k not in probe_keys})

    fusion_sec = dict(_section(doc, "fusion"))
    plane_half_width = fusion_sec.pop("plane_half_width", 2)
    fusion = _build(FusionConfig, "fusion", fusion_sec)

    planner_sec = dict(_section(doc, "planner"))
    if "speed" in robot_sec:
        planner_sec["speed"] = robot_sec["speed"]
    planner = _build(PlannerConfig, "planner", planner_sec)

    run_sec = _section(doc, "run")
    _reject_unknown("run", run_sec, {"seed", "max_ticks", "snapshot_every", "dt"})
    seed = _number("run.seed", run_sec.get("seed", 0), int)
    if seed < 0:
        raise ValidationError("run.seed", "must be >= 0")
    max_ticks = _number("run.max_ticks", run_sec.get("max_ticks", 600), int)
    if max_ticks < 1:
        raise ValidationError("run.max_ticks", "must be >= 1")
    snapshot_every = _number("run.snapshot_every", run_sec.get("snapshot_every", 0), int)
    if snapshot_every < 0:
        raise ValidationError("run.snapshot_every", "must be >= 0")
    dt = _number("run.dt", run_sec.get("dt", 0.2))

    sim = _construct(
        SimConfig,
        "fusion",
        dict(
            world=world,
            depth=depth,
            variance=variance,
            semantic=semantic,
            probe=probe,
            probing=probing,
            fusion=fusion,
            planner=planner,
            plane_half_width=_number("fusion.plane_half_width", plane_half_width, int),
            dt=dt,
            seed=seed,
        ),
    )
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        raise ValidationError("name", "must be a string")
    return Scenario(sim, max_ticks, snapshot_every, name)


def parse_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file."""
    text = Path(path).read_text()
    return scenario_from_dict(load_document(text))


def builtin_scenarios() -> list[str]:
    root = resources.files("probenav") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def builtin_path(name: str) -> Path:
    path = Path(str(resources.files("probenav") / "scenarios" / f"{name}.yaml"))
    if not path.exists():
        raise FileNotFoundError(f"no built-in scenario named {name!r}")
    return path


def resolve_scenario_path(spec: str | Path) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    path = Path(spec)
    if path.exists():
        return path
    return builtin_path(str(spec))


def _plain(dc, drop=()) -> dict:
    return {f.name: getattr(dc, f.name) for f in dataclasses.fields(dc) if f.name not in drop}


def scenario_to_dict(sc: Scenario) -> dict:
    """Fully resolved scenario document; parsing it yields an equal Scenario."""
    sim, w = sc.sim, sc.sim.world
    heights = []
    for h in w.heights:
        item: dict[str, Any] = {"type": h.kind, "z": h.z}
        if h.rect is not None:
            item["rect"] = h.rect.as_list()
        if h.kind == "ramp":
            item["gradient"] = list(h.gradient)
        heights.append(item)
    depth = _plain(sim.depth)
    depth.update(_plain(sim.variance))
    probe = _plain(sim.probe)
    probe.update(_plain(sim.probing))
    fusion = _plain(sim.fusion)
    fusion["plane_half_width"] = sim.plane_half_width
    return {
        "name": sc.name,
        "world": {
            "extent": list(w.extent),
            "resolution": w.resolution,
            "default_bearing": w.default_bearing,
            "fail_force": w.fail_force,
            "heights": heights,
            "semantic": [{"class": r.cls.label, "rect": r.rect.as_list()} for r in w.semantic_regions],
            "bearing": [{"force": r.force, "rect": r.rect.as_list()} for r in w.bearing_regions],
        },
        "robot": {"start": list(w.start_pose), "goal": list(w.goal), "speed": sim.planner.speed},
        "sensors": {"depth": depth, "semantic": _plain(sim.semantic)},
        "probe": probe,
        "fusion": fusion,
        "planner": _plain(sim.planner, drop=("speed",)),
        "run": {"seed": sim.seed, "max_ticks": sc.max_ticks, "snapshot_every": sc.snapshot_every, "dt": sim.dt},
    }


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)
