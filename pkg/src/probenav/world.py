"""Ground-truth world: heightfield, semantic regions, bearing-force field."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import DepthScan, ray_variance
from .gridmap import MapGeometry, OutOfBounds
from .semantics import SemanticClass


@dataclass(frozen=True)
class Rect:
    """Half-open axis-aligned rectangle [x0, x1) x [y0, y1) in meters."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, x, y):
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class HeightPrimitive:
    """One heightfield element; later primitives override earlier ones.

    kind ``plane``: z everywhere (``rect`` ignored).
    kind ``box``: constant z inside ``rect``.
    kind ``ramp``: z + gx*(x - x0) + gy*(y - y0) inside ``rect``.
    """

    kind: str
    z: float = 0.0
    rect: Rect | None = None
    gradient: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("plane", "box", "ramp"):
            raise ValueError(f"unknown height primitive {self.kind!r}")
        if self.kind != "plane" and self.rect is None:
            raise ValueError(f"{self.kind} primitive needs a rect")


@dataclass(frozen=True)
class SemanticRegion:
    rect: Rect
    cls: SemanticClass


@dataclass(frozen=True)
class BearingRegion:
    rect: Rect
    force: float

    def __post_init__(self):
        if self.force < 0:
            raise ValueError("bearing force must be >= 0")


@dataclass(frozen=True)
class WorldSpec:
    extent: tuple[float, float]
    resolution: float = 0.05
    heights: tuple[HeightPrimitive, ...] = (HeightPrimitive("plane"),)
    semantic_regions: tuple[SemanticRegion, ...] = ()
    bearing_regions: tuple[BearingRegion, ...] = ()
    default_bearing: float = 500.0
    start_pose: tuple[float, float, float] = (0.5, 0.5, 0.0)
    goal: tuple[float, float] = (1.0, 1.0)
    fail_force: float = 100.0

    def __post_init__(self):
        ex, ey = self.extent
        if not (ex > 0 and ey > 0):
            raise ValueError("extent must be positive")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.default_bearing < 0 or self.fail_force < 0:
            raise ValueError("forces must be >= 0")
        for name, p in (("start", self.start_pose[:2]), ("goal", self.goal)):
            if not (0 <= p[0] < ex and 0 <= p[1] < ey):
                raise ValueError(f"{name} {tuple(p)} outside world extent")
        rects = [h.rect for h in self.heights if h.rect is not None]
        rects += [r.rect for r in self.semantic_regions] + [r.rect for r in self.bearing_regions]
        for r in rects:
            if r.x0 < 0 or r.y0 < 0 or r.x1 > ex + 1e-9 or r.y1 > ey + 1e-9:
                raise ValueError(f"rectangle {r.as_list()} outside world extent")

    @cached_property
    def geometry(self) -> MapGeometry:
        return MapGeometry(
            (0.0, 0.0),
            self.resolution,
            int(round(self.extent[0] / self.resolution)),
            int(round(self.extent[1] / self.resolution)),
        )

    def inside(self, x, y):
        return (x >= 0) & (x < self.extent[0]) & (y >= 0) & (y < self.extent[1])

    def height_at(self, x, y):
        """Ground height at world coordinates (vectorized)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = np.zeros(np.broadcast(x, y).shape)
        for h in self.heights:
            if h.kind == "plane":
                z[...] = h.z
                continue
            sel = h.rect.contains(x, y)
            if h.kind == "box":
                z = np.where(sel, h.z, z)
            else:
                ramp = h.z + h.gradient[0] * (x - h.rect.x0) + h.gradient[1] * (y - h.rect.y0)
                z = np.where(sel, ramp, z)
        return z

    def bearing_force(self, p) -> float:
        """Ground-truth supportable force at a point; the last matching region wins."""
        x, y = float(p[0]), float(p[1])
        if not self.inside(x, y):
            raise OutOfBounds(f"point {(x, y)} outside the world")
        force = self.default_bearing
        for region in self.bearing_regions:
            if region.rect.contains(x, y):
                force = region.force
        return float(force)

    def semantic_class_at(self, p) -> SemanticClass:
        cls = SemanticClass.NONE
        for region in self.semantic_regions:
            if region.rect.contains(p[0], p[1]):
                cls = region.cls
        return cls

    @cached_property
    def class_grid(self) -> np.ndarray:
        """Ground-truth class code at every cell center."""
        cx, cy = self.geometry.cell_centers()
        grid = np.full(cx.shape, int(SemanticClass.NONE), dtype=np.int8)
        for region in self.semantic_regions:
            grid[region.rect.contains(cx, cy)] = int(region.cls)
        grid.setflags(write=False)
        return grid

    @cached_property
    def bearing_grid(self) -> np.ndarray:
        cx, cy = self.geometry.cell_centers()
        grid = np.full(cx.shape, float(self.default_bearing))
        for region in self.bearing_regions:
            grid[region.rect.contains(cx, cy)] = region.force
        grid.setflags(write=False)
        return grid


class RobotStatus(enum.Enum):
    RUNNING = "running"
    PAUSED = "paused"
    GOAL_REACHED = "goal_reached"
    FAILED = "failed"


@dataclass
class RobotState:
    pose: tuple[float, float, float]
    status: RobotStatus = RobotStatus.RUNNING


@dataclass(frozen=True)
class DepthSensorSpec:
    horizontal_fov: float = 1.518
    rays_per_scan: int = 96
    scan_lines: int = 40
    max_range: float = 4.0
    min_range: float = 0.3
    mounted_height: float = 0.5
    noise_scale: float = 0.0

    def __post_init__(self):
        if not 0 < self.horizontal_fov < math.pi:
            raise ValueError("horizontal_fov must be in (0, pi)")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.rays_per_scan < 1 or self.scan_lines < 1:
            raise ValueError("rays_per_scan and scan_lines must be >= 1")
        if not 0 <= self.min_range < self.max_range:
            raise ValueError("min_range must be in [0, max_range)")
        if not self.mounted_height > 0:
            raise ValueError("mounted_height must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    def ray_directions(self, heading: float) -> np.ndarray:
        """Unit directions (n, 3): a horizontal fan repeated over scan lines.

        Scan-line depression angles are chosen so that, over flat ground, the
        lines land at evenly spaced distances between min_range and the
        farthest point reachable within max_range.
        """
        if self.rays_per_scan == 1:
            yaws = np.array([heading])
        else:
            yaws = heading + np.linspace(-self.horizontal_fov / 2, self.horizontal_fov / 2, self.rays_per_scan)
        h = self.mounted_height
        far = math.sqrt(max(self.max_range**2 - h * h, 0.0)) * 0.999
        near = min(max(self.min_range, 1e-3), far)
        dists = np.linspace(near, far, self.scan_lines) if self.scan_lines > 1 else np.array([far])
        depress = np.arctan2(h, dists)
        yaw_g, dep_g = np.meshgrid(yaws, depress)
        yaw_g, dep_g = yaw_g.ravel(), dep_g.ravel()
        return np.column_stack(
            [np.cos(dep_g) * np.cos(yaw_g), np.cos(dep_g) * np.sin(yaw_g), -np.sin(dep_g)]
        )


def raycast(world: WorldSpec, origin, directions: np.ndarray, max_range: float, step: float | None = None) -> DepthScan:
    """March rays against the heightfield and report first ground crossings.

    Each crossing bracketed by the fixed march step is refined by bisection
    on the continuous heightfield.  Rays that leave the world or exceed
    ``max_range`` are dropped.
    """
    origin = np.asarray(origin, dtype=float)
    dirs = np.asarray(directions, dtype=float).reshape(-1, 3)
    if step is None:
        step = world.resolution / 2
    ts = np.arange(1, int(math.ceil(max_range / step)) + 1) * step
    ts[-1] = min(ts[-1], max_range)
    pts = origin + ts[None, :, None] * dirs[:, None, :]
    inside = world.inside(pts[..., 0], pts[..., 1])
    gap = pts[..., 2] - world.height_at(pts[..., 0], pts[..., 1])
    below = (gap <= 0) & inside
    # A ray that leaves the world before touching ground is a miss.
    outside_first = np.where((~inside).any(axis=1), np.argmax(~inside, axis=1), len(ts))
    hit_first = np.where(below.any(axis=1), np.argmax(below, axis=1), len(ts))
    hit = (hit_first < len(ts)) & (hit_first < outside_first)
    if not hit.any():
        return DepthScan(np.zeros((0, 3)), np.zeros(0))

    d = dirs[hit]
    k = hit_first[hit]
    hi = ts[k]
    lo = np.where(k > 0, ts[np.maximum(k - 1, 0)], 0.0)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        p = origin + mid[:, None] * d
        under = p[:, 2] - world.height_at(p[:, 0], p[:, 1]) <= 0
        hi = np.where(under, mid, hi)
        lo = np.where(under, lo, mid)
    points = origin + hi[:, None] * d
    return DepthScan(points, hi)


def raycast_depth(world: WorldSpec, pose, spec: DepthSensorSpec, rng: np.random.Generator | None = None, vm=None) -> DepthScan:
    """One depth scan from a sensor at ``mounted_height`` above the robot's ground."""
    x, y, heading = pose
    ground = float(world.height_at(x, y))
    origin = np.array([x, y, ground + spec.mounted_height])
    scan = raycast(world, origin, spec.ray_directions(heading), spec.max_range)
    if spec.noise_scale > 0 and rng is not None and vm is not None and len(scan):
        sd = np.sqrt(ray_variance(scan.ranges, vm)) * spec.noise_scale
        scan.points[:, 2] += rng.standard_normal(len(scan)) * sd
    return scan
