"""Dijkstra planning over the global traversability layer and a waypoint follower."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .gridmap import GridIndex, Layer, MapGeometry

SQRT2 = math.sqrt(2.0)
NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


class PlanningError(Exception):
    pass


class NoPath(PlanningError):
    pass


class BlockedEndpoint(PlanningError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    t_block: float = 0.1
    cost_weight: float = 4.0  # lambda
    goal_tolerance: float = 0.1
    speed: float = 0.5
    replan_every: int = 1
    inflation_radius: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.t_block < 1.0:
            raise ValueError("t_block must be in [0, 1)")
        if self.cost_weight < 0:
            raise ValueError("cost_weight must be >= 0")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        if self.goal_tolerance < 0:
            raise ValueError("goal_tolerance must be >= 0")
        if self.replan_every < 1:
            raise ValueError("replan_every must be >= 1")
        if self.inflation_radius < 0:
            raise ValueError("inflation_radius must be >= 0")


@dataclass
class PlannedPath:
    waypoints: list[tuple[float, float]]
    total_cost: float
    cells: list[GridIndex] = field(default_factory=list)


def cell_cost(t: float | None, step: float, cfg: PlannerConfig, t_unknown: float = 0.5) -> float:
    """Cost of stepping into a cell; ``math.inf`` means blocked."""
    if t is None:
        t = t_unknown
    if t <= cfg.t_block:
        return math.inf
    return step * (1.0 + cfg.cost_weight * (1.0 - t))


def cost_factors(layer: Layer, cfg: PlannerConfig, t_unknown: float, resolution: float | None = None) -> np.ndarray:
    """Per-cell multiplier on step length, ``inf`` where blocked."""
    t = np.where(layer.known, layer.mean, t_unknown)
    blocked = t <= cfg.t_block
    if cfg.inflation_radius > 0 and resolution and blocked.any():
        r = int(math.ceil(cfg.inflation_radius / resolution))
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        disk = (xx * xx + yy * yy) * resolution**2 <= cfg.inflation_radius**2
        blocked = ndimage.binary_dilation(blocked, structure=disk)
    factor = 1.0 + cfg.cost_weight * (1.0 - t)
    factor[blocked] = math.inf
    return factor


def dijkstra(factor: np.ndarray, start: tuple[int, int], goal: tuple[int, int], resolution: float):
    """8-connected Dijkstra on a grid of entry-cost factors.

    Entering cell n from a neighbor costs ``step * factor[n]`` with step equal
    to the resolution or resolution * sqrt(2).  Heap entries are ordered by
    (cost, flat index), and flat index is row-major, so equal-cost frontier
    cells expand in (row, col) order.  Returns (cost, list of (col, row)).
    """
    rows, cols = factor.shape
    # One-cell border of blocked cells removes all bounds checks; padded flat
    # indices keep row-major order, so tie-breaking is unchanged.
    pcols = cols + 2
    fac = np.pad(factor, 1, constant_values=math.inf).ravel().tolist()
    n = len(fac)
    s = (start[1] + 1) * pcols + start[0] + 1
    g = (goal[1] + 1) * pcols + goal[0] + 1
    dist = [math.inf] * n
    pred = [-1] * n
    dist[s] = 0.0
    heap = [(0.0, s)]
    straight, diag = resolution, resolution * SQRT2
    moves = [(dr * pcols + dc, diag if dr and dc else straight) for dr, dc in NEIGHBORS]
    pop, push = heapq.heappop, heapq.heappush
    reached = False
    while heap:
        d, u = pop(heap)
        if d > dist[u]:
            continue
        if u == g:
            reached = True
            break
        for off, step in moves:
            v = u + off
            nd = d + step * fac[v]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                push(heap, (nd, v))
    if not reached:
        raise NoPath(f"goal {tuple(goal)} unreachable from {tuple(start)}")
    path = [g]
    while path[-1] != s:
        path.append(pred[path[-1]])
    path.reverse()
    return dist[g], [(p % pcols - 1, p // pcols - 1) for p in path]


def plan(
    layer: Layer,
    geom: MapGeometry,
    start: tuple[int, int],
    goal: tuple[int, int],
    cfg: PlannerConfig,
    t_unknown: float = 0.5,
    strict_start: bool = True,
) -> PlannedPath:
    """Minimum-cost 8-connected path between two cells.

    The start cell is never entered, so with ``strict_start=False`` a robot
    already standing on a blocked cell can still plan its way out.
    """
    for name, idx in (("start", start), ("goal", goal)):
        if not geom.contains(*idx):
            raise BlockedEndpoint(f"{name} cell {tuple(idx)} outside the map")
    factor = cost_factors(layer, cfg, t_unknown, geom.resolution)
    if math.isinf(factor[goal[1], goal[0]]):
        raise BlockedEndpoint(f"goal cell {tuple(goal)} is blocked")
    if strict_start and math.isinf(factor[start[1], start[0]]):
        raise BlockedEndpoint(f"start cell {tuple(start)} is blocked")
    cost, cells = dijkstra(factor, start, goal, geom.resolution)
    res, (ox, oy) = geom.resolution, geom.origin
    waypoints = [(ox + (c + 0.5) * res, oy + (r + 0.5) * res) for c, r in cells]
    return PlannedPath(waypoints, cost, [GridIndex(c, r) for c, r in cells])


@dataclass
class FollowResult:
    pose: tuple[float, float, float]
    path: PlannedPath
    goal_reached: bool


def _on_segment(p, a, b, eps=1e-9) -> bool:
    ax, ay = b[0] - a[0], b[1] - a[1]
    seg2 = ax * ax + ay * ay
    if seg2 == 0.0:
        return math.dist(p, a) <= eps
    t = ((p[0] - a[0]) * ax + (p[1] - a[1]) * ay) / seg2
    if t < -eps or t > 1 + eps:
        return False
    qx, qy = a[0] + t * ax, a[1] + t * ay
    return math.hypot(p[0] - qx, p[1] - qy) <= eps


def follow(path: PlannedPath, pose, dt: float, paused: bool, cfg: PlannerConfig) -> FollowResult:
    """Advance the pose along the waypoint polyline by ``speed * dt``.

    Motion is point-robot kinematics with the heading aligned to the last
    motion direction.  If the robot already lies on the first leg of the path
    it does not walk back to the first waypoint.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x, y, heading = pose
    wps = list(path.waypoints)
    if not wps:
        return FollowResult((x, y, heading), path, False)
    final = wps[-1]
    if paused:
        return FollowResult((x, y, heading), path, math.dist((x, y), final) <= cfg.goal_tolerance)

    while len(wps) >= 2 and _on_segment((x, y), wps[0], wps[1]):
        wps.pop(0)
    budget = cfg.speed * dt
    while budget > 0 and wps:
        tx, ty = wps[0]
        d = math.hypot(tx - x, ty - y)
        if d <= budget:
            if d > 0:
                heading = math.atan2(ty - y, tx - x)
            x, y = tx, ty
            budget -= d
            wps.pop(0)
        else:
            heading = math.atan2(ty - y, tx - x)
            x += (tx - x) * budget / d
            y += (ty - y) * budget / d
            budget = 0.0
    reached = math.dist((x, y), final) <= cfg.goal_tolerance
    remaining = PlannedPath(wps, path.total_cost, path.cells[len(path.cells) - len(wps) :] if path.cells else [])
    return FollowResult((x, y, heading), remaining, reached)
