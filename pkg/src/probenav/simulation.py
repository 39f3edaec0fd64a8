"""The fixed-rate sense / map / probe / plan / move loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .collapsibility import ProbeConfig, ProbeEvent
from .geometry import VarianceModel, integrate_hits, slope_roughness_grid
from .gridmap import (
    COLLAPSIBILITY,
    ELEVATION,
    ROUGHNESS,
    Layer,
    SLOPE,
    TRAVERSABILITY,
    LayeredGridMap,
)
from .planner import BlockedEndpoint, NoPath, PlannedPath, PlannerConfig, follow, plan
from .probing import ProbePlannerConfig, ProbingPlanner
from .semantics import SemanticSensorSpec, fuse_semantic, semantic_labels, sense_semantics
from .traversability import FusionConfig, local_traversability_grid, register_global
from .world import DepthSensorSpec, RobotState, RobotStatus, WorldSpec, raycast_depth

logger = logging.getLogger(__name__)

DT = 0.2  # 5 Hz pipeline


@dataclass(frozen=True)
class SimConfig:
    world: WorldSpec
    depth: DepthSensorSpec = DepthSensorSpec()
    variance: VarianceModel = VarianceModel()
    semantic: SemanticSensorSpec = SemanticSensorSpec()
    probe: ProbeConfig = ProbeConfig()
    probing: ProbePlannerConfig = ProbePlannerConfig()
    fusion: FusionConfig = FusionConfig()
    planner: PlannerConfig = PlannerConfig()
    plane_half_width: int = 2
    dt: float = DT
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.plane_half_width < 1:
            raise ValueError("plane_half_width must be >= 1")


@dataclass
class EventRecord:
    tick: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"tick": self.tick, "kind": self.kind, "payload": self.payload}


class Simulation:
    """Owns all mutable run state; call :meth:`step` until :attr:`done`."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.world = cfg.world
        self.geom = cfg.world.geometry
        self.map = LayeredGridMap.create(self.geom)
        self.robot = RobotState(tuple(float(v) for v in cfg.world.start_pose))
        self.rng = np.random.default_rng(cfg.seed)
        self.prober = ProbingPlanner(cfg.probing, cfg.probe, cfg.fusion.sigma_c2)
        self.tick = 0
        self.path: PlannedPath | None = None
        self.verdict: str | None = None
        self.events: list[EventRecord] = []
        self.path_trace: list[dict] = []
        self.trajectory: list[tuple[float, float]] = [self.robot.pose[:2]]
        self.cells_entered: list[tuple[int, int]] = [self._cell_of(self.robot.pose)]
        self.dropped_hits = 0
        self._paused = False
        self.log(0, "start", pose=list(self.robot.pose), goal=list(cfg.world.goal))

    # -- pause/resume handle used by the probing planner --------------------

    @property
    def paused(self) -> bool:
        return self._paused

    def pause(self, tick: int) -> None:
        self._paused = True
        self.robot.status = RobotStatus.PAUSED
        self.log(tick, "pause", pose=list(self.robot.pose))

    def resume(self, tick: int) -> None:
        self._paused = False
        self.robot.status = RobotStatus.RUNNING
        self.log(tick, "resume", pose=list(self.robot.pose))

    # -----------------------------------------------------------------------

    def log(self, tick: int, kind: str, **payload) -> None:
        self.events.append(EventRecord(tick, kind, payload))

    @property
    def done(self) -> bool:
        return self.verdict is not None

    def _cell_of(self, pose) -> tuple[int, int]:
        res = self.geom.resolution
        col = min(max(int(math.floor(pose[0] / res + 1e-9)), 0), self.geom.length_cells - 1)
        row = min(max(int(math.floor(pose[1] / res + 1e-9)), 0), self.geom.width_cells - 1)
        return col, row

    @property
    def probe_events(self) -> list[ProbeEvent]:
        return self.prober.events

    def step(self) -> None:
        if self.done:
            raise RuntimeError("simulation already finished")
        self.tick += 1
        tick = self.tick
        cfg = self.cfg
        pose = self.robot.pose
        gmap = self.map

        # sense: depth into elevation, semantics into class evidence
        scan = raycast_depth(self.world, pose, cfg.depth, self.rng, cfg.variance)
        self.dropped_hits += integrate_hits(scan, gmap[ELEVATION], self.geom, cfg.variance)
        touched = np.zeros(self.geom.shape, dtype=bool)
        if len(scan):
            cols = np.floor(scan.points[:, 0] / self.geom.resolution + 1e-9).astype(np.int64)
            rows = np.floor(scan.points[:, 1] / self.geom.resolution + 1e-9).astype(np.int64)
            ok = (cols >= 0) & (cols < self.geom.length_cells) & (rows >= 0) & (rows < self.geom.width_cells)
            touched[rows[ok], cols[ok]] = True
            w = cfg.plane_half_width
            touched = ndimage.binary_dilation(touched, structure=np.ones((2 * w + 1, 2 * w + 1), dtype=bool))
        if (tick - 1) % cfg.semantic.rate_divisor == 0:
            sem = sense_semantics(self.world, pose, cfg.semantic, self.rng)
            fuse_semantic(gmap, sem, cfg.fusion.sigma_sem2)
            touched[sem.rows, sem.cols] = True

        # geometric analysis over the robot-centric window
        span = 2.0 * max(cfg.depth.max_range, cfg.semantic.max_range) + 4 * self.geom.resolution
        win = gmap.window_slices(pose[:2], span)
        self._update_geometry(win, touched)

        # local traversability on the window, then registration into the global map
        gmap_labels = semantic_labels(gmap.class_counts[win])

        def view(name):
            l = gmap[name]
            return Layer(l.mean[win], l.var[win], l.known[win], l.bounded)

        c_layer = view(COLLAPSIBILITY)
        values, branch = local_traversability_grid(c_layer, gmap_labels, view(ROUGHNESS), view(SLOPE), cfg.fusion)
        mask = touched[win] | c_layer.known
        register_global(values, branch, gmap[TRAVERSABILITY], cfg.fusion, window=win, mask=mask)

        # probing planner
        waypoints = self.path.waypoints if self.path is not None else []
        event = self.prober.tick(tick, self.world, gmap, pose[:2], waypoints, self, self.rng, self.log)

        # replan
        if not self.paused and (event is not None or self.path is None or tick % cfg.planner.replan_every == 0):
            if not self._replan(tick):
                return

        # follow
        if self.path is None:
            return
        result = follow(self.path, pose, cfg.dt, self.paused, cfg.planner)
        self.path = result.path
        self.robot.pose = result.pose
        xy = result.pose[:2]
        if xy != self.trajectory[-1]:
            self.trajectory.append(xy)
        cell = self._cell_of(result.pose)
        if cell != self.cells_entered[-1]:
            self.cells_entered.append(cell)

        # outcome checks
        col, row = cell
        if self.world.bearing_grid[row, col] < self.world.fail_force:
            self.robot.status = RobotStatus.FAILED
            self._finish(tick, "failed", cell=list(cell), bearing=float(self.world.bearing_grid[row, col]))
        elif math.dist(xy, self.world.goal) <= cfg.planner.goal_tolerance:
            self.robot.status = RobotStatus.GOAL_REACHED
            self._finish(tick, "goal_reached")

    def _update_geometry(self, win, touched) -> None:
        w = self.cfg.plane_half_width
        rows, cols = win
        r0, r1 = max(rows.start - w, 0), min(rows.stop + w, self.geom.width_cells)
        c0, c1 = max(cols.start - w, 0), min(cols.stop + w, self.geom.length_cells)
        elev = self.map[ELEVATION]
        slope, rough, valid = slope_roughness_grid(
            elev.mean[r0:r1, c0:c1], elev.known[r0:r1, c0:c1], self.geom.resolution, w, mask=touched[r0:r1, c0:c1]
        )
        inner = (slice(rows.start - r0, rows.stop - r0), slice(cols.start - c0, cols.stop - c0))
        valid = valid[inner]
        var = elev.var[win]
        for name, data in ((SLOPE, slope[inner]), (ROUGHNESS, rough[inner])):
            layer = self.map[name]
            layer.mean[win][valid] = data[valid]
            layer.var[win][valid] = var[valid]
            layer.known[win][valid] = True

    def _replan(self, tick: int) -> bool:
        start = self._cell_of(self.robot.pose)
        goal = self._cell_of(self.world.goal)
        try:
            self.path = plan(
                self.map[TRAVERSABILITY],
                self.geom,
                start,
                goal,
                self.cfg.planner,
                t_unknown=self.cfg.fusion.t_unknown,
                strict_start=False,
            )
        except (NoPath, BlockedEndpoint) as exc:
            self.path = None
            self._finish(tick, "no_path", reason=str(exc))
            return False
        self.path_trace.append(
            {
                "tick": tick,
                "cost": self.path.total_cost,
                "waypoints": [[round(x, 6), round(y, 6)] for x, y in self.path.waypoints],
            }
        )
        return True

    def _finish(self, tick: int, verdict: str, **payload) -> None:
        self.verdict = verdict
        self.log(tick, "terminal", verdict=verdict, pose=list(self.robot.pose), **payload)

    def run(self, max_ticks: int, on_tick=None) -> str:
        while not self.done and self.tick < max_ticks:
            self.step()
            if on_tick is not None:
                on_tick(self)
        if not self.done:
            self.verdict = "tick_limit"
            self.log(self.tick, "terminal", verdict="tick_limit", pose=list(self.robot.pose))
        return self.verdict

    def path_length(self) -> float:
        pts = np.asarray(self.trajectory)
        if len(pts) < 2:
            return 0.0
        return float(np.hypot(*np.diff(pts, axis=0).T).sum())
