"""Questionable-cluster detection, probe-spot selection and the probe protocol."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .collapsibility import (
    ProbeConfig,
    ProbeEvent,
    estimate_collapsibility,
    propagate_to_cluster,
    simulate_probe,
)
from .gridmap import COLLAPSIBILITY, TRAVERSABILITY, GridIndex, LayeredGridMap, MapGeometry, OutOfBounds
from .semantics import QUESTIONABLE, SemanticClass, semantic_labels

logger = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class ProbeFailed(Exception):
    pass


@dataclass
class Cluster:
    id: str
    cls: SemanticClass
    rows: np.ndarray
    cols: np.ndarray
    probed: bool = False

    @property
    def cells(self) -> frozenset[GridIndex]:
        return frozenset(GridIndex(int(c), int(r)) for r, c in zip(self.rows, self.cols))

    @property
    def size(self) -> int:
        return len(self.rows)

    @property
    def anchor(self) -> tuple[int, int]:
        """Smallest (row, col) of the cluster."""
        i = np.lexsort((self.cols, self.rows))[0]
        return int(self.rows[i]), int(self.cols[i])

    @classmethod
    def from_cells(cls, cells, sem_cls: SemanticClass, cluster_id: str | None = None) -> "Cluster":
        cells = sorted(set((int(c), int(r)) for c, r in cells), key=lambda cr: (cr[1], cr[0]))
        cols = np.array([c for c, _ in cells], dtype=np.int64)
        rows = np.array([r for _, r in cells], dtype=np.int64)
        if cluster_id is None:
            cluster_id = f"{sem_cls.label}@{rows[0]},{cols[0]}" if len(rows) else f"{sem_cls.label}@empty"
        return cls(cluster_id, sem_cls, rows, cols)


@dataclass(frozen=True)
class ProbeSpot:
    world_point: tuple[float, float]
    cluster_id: str
    cell: GridIndex


@dataclass(frozen=True)
class ProbePlannerConfig:
    reach: float = 0.7
    downsample_stride: int = 4
    pause_ticks_min: int = 3
    probe_all: bool = False
    enabled: bool = True
    min_cluster_cells: int = 1

    def __post_init__(self):
        if not self.reach > 0:
            raise ValueError("reach must be positive")
        if self.downsample_stride < 1:
            raise ValueError("downsample_stride must be >= 1")
        if self.pause_ticks_min < 0:
            raise ValueError("pause_ticks_min must be >= 0")
        if self.min_cluster_cells < 1:
            raise ValueError("min_cluster_cells must be >= 1")


class DecisionKind(enum.Enum):
    TRIGGER = "trigger"
    PENDING = "pending"
    NONE = "none"


@dataclass(frozen=True)
class SpotDecision:
    kind: DecisionKind
    spot: ProbeSpot | None = None
    distance: float = float("inf")


def _components(mask: np.ndarray):
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    idx = np.flatnonzero(labels.ravel())
    lab = labels.ravel()[idx]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    splits = np.flatnonzero(np.diff(lab)) + 1
    return np.split(idx, splits)


def find_questionable_clusters(labels: np.ndarray, c_known: np.ndarray) -> list[Cluster]:
    """8-connected same-class components of plants/water cells with unknown collapsibility.

    Sorted by each cluster's smallest (row, col).
    """
    cols_n = labels.shape[1]
    clusters = []
    for cls in QUESTIONABLE:
        for flat in _components((labels == cls) & ~c_known):
            rows, cols = np.divmod(flat, cols_n)  # flat is sorted, so rows[0], cols[0] is the anchor
            clusters.append(Cluster(f"{cls.label}@{rows[0]},{cols[0]}", cls, rows, cols))
    clusters.sort(key=lambda c: c.anchor)
    return clusters


def inherit_probed(labels: np.ndarray, c_layer, sigma_c2: float) -> int:
    """Extend probe results to newly labeled cells that touch a probed region.

    Same-class components mixing probed and unprobed cells take the largest
    (most conservative) collapsibility among their probed cells.  Returns the
    number of cells newly assigned.
    """
    total = 0
    cols_n = labels.shape[1]
    for cls in QUESTIONABLE:
        for flat in _components(labels == cls):
            rows, cols = np.divmod(flat, cols_n)
            known = c_layer.known[rows, cols]
            if known.all() or not known.any():
                continue
            value = float(c_layer.mean[rows[known], cols[known]].max())
            todo = ~known
            c_layer.mean[rows[todo], cols[todo]] = value
            c_layer.var[rows[todo], cols[todo]] = sigma_c2
            c_layer.known[rows[todo], cols[todo]] = True
            total += int(todo.sum())
    return total


def candidate_spots(cl: Cluster, stride: int, geom: MapGeometry) -> list[ProbeSpot]:
    """Down-sample a cluster on a stride lattice anchored at its bounding-box minimum."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    r0, c0 = cl.rows.min(), cl.cols.min()
    keep = ((cl.rows - r0) % stride == 0) & ((cl.cols - c0) % stride == 0)
    rows, cols = cl.rows[keep], cl.cols[keep]
    if len(rows) == 0:
        # fall back to the member cell closest to the centroid
        cr, cc = cl.rows.mean(), cl.cols.mean()
        d2 = (cl.rows - cr) ** 2 + (cl.cols - cc) ** 2
        i = int(np.lexsort((cl.cols, cl.rows, d2))[0])
        rows, cols = cl.rows[i : i + 1], cl.cols[i : i + 1]
    res, (ox, oy) = geom.resolution, geom.origin
    return [
        ProbeSpot((ox + (c + 0.5) * res, oy + (r + 0.5) * res), cl.id, GridIndex(int(c), int(r)))
        for r, c in zip(rows, cols)
    ]


def select_spot(spots, robot: tuple[float, float], reach: float) -> SpotDecision:
    """Nearest spot to the robot; trigger a probe once it is within reach."""
    if not spots:
        return SpotDecision(DecisionKind.NONE)
    rx, ry = robot[0], robot[1]

    def key(s):
        x, y = s.world_point
        return (float(np.hypot(x - rx, y - ry)), x, y)

    best = min(spots, key=key)
    d = key(best)[0]
    kind = DecisionKind.TRIGGER if d <= reach else DecisionKind.PENDING
    return SpotDecision(kind, best, d)


def near_path(cl: Cluster, waypoints, geom: MapGeometry, radius: float) -> bool:
    """True if any cluster cell center lies within ``radius`` of a path waypoint."""
    if not waypoints:
        return True
    res, (ox, oy) = geom.resolution, geom.origin
    pts = np.column_stack([ox + (cl.cols + 0.5) * res, oy + (cl.rows + 0.5) * res])
    d, _ = cKDTree(np.asarray(waypoints, dtype=float)).query(pts, k=1, distance_upper_bound=radius)
    return bool(np.isfinite(d).any())


def run_probe_protocol(
    cluster: Cluster,
    spot: ProbeSpot,
    world,
    gmap: LayeredGridMap,
    probe_cfg: ProbeConfig,
    sigma_c2: float,
    handle,
    rng: np.random.Generator,
    tick: int = 0,
) -> ProbeEvent:
    """Probe one spot and broadcast the result over its whole cluster.

    ``handle`` is the path-planner side of the pause/resume protocol: any
    object with ``pause(tick)``, ``resume(tick)`` and a ``paused`` attribute.
    The traversability of every cluster cell is overridden with 1 - C.
    """
    if not handle.paused:
        handle.pause(tick)
    try:
        measurement = simulate_probe(world, spot.world_point, probe_cfg, rng)
    except OutOfBounds as exc:
        handle.resume(tick)
        raise ProbeFailed(str(exc)) from exc
    c_value = estimate_collapsibility(measurement.f_ext, probe_cfg.f_hard)
    cells = list(zip(cluster.cols.tolist(), cluster.rows.tolist()))
    n = propagate_to_cluster(c_value, cells, gmap[COLLAPSIBILITY], sigma_c2)
    trav = gmap[TRAVERSABILITY]
    trav.mean[cluster.rows, cluster.cols] = 1.0 - c_value
    trav.var[cluster.rows, cluster.cols] = sigma_c2
    trav.known[cluster.rows, cluster.cols] = True
    cluster.probed = True
    handle.resume(tick)
    return ProbeEvent(tick, measurement, c_value, cluster.id, n)


@dataclass
class ProbedRecord:
    cluster_id: str
    cls: SemanticClass
    collapsibility: float
    cells: int


@dataclass
class ProbingPlanner:
    """Per-tick probing decisions and the pause/resume bookkeeping."""

    cfg: ProbePlannerConfig
    probe_cfg: ProbeConfig
    sigma_c2: float
    probed: list[ProbedRecord] = field(default_factory=list)
    events: list[ProbeEvent] = field(default_factory=list)
    active: tuple[Cluster, ProbeSpot] | None = None
    pause_ticks: int = 0
    seen_ids: set[str] = field(default_factory=set)

    def clusters(self, gmap: LayeredGridMap) -> list[Cluster]:
        labels = semantic_labels(gmap.class_counts)
        inherit_probed(labels, gmap[COLLAPSIBILITY], self.sigma_c2)
        found = find_questionable_clusters(labels, gmap[COLLAPSIBILITY].known)
        return [c for c in found if c.size >= self.cfg.min_cluster_cells]

    def tick(self, tick: int, world, gmap: LayeredGridMap, robot_xy, waypoints, handle, rng, log=None) -> ProbeEvent | None:
        """Advance the probing state machine by one tick.

        Returns the ProbeEvent if a probe completed this tick.
        """
        log = log or (lambda *a, **k: None)
        if not self.cfg.enabled:
            labels = semantic_labels(gmap.class_counts)
            inherit_probed(labels, gmap[COLLAPSIBILITY], self.sigma_c2)
            return None

        if self.active is not None:
            self.pause_ticks += 1
            if self.pause_ticks < self.cfg.pause_ticks_min:
                return None
            cluster, spot = self.active
            self.active = None
            try:
                event = run_probe_protocol(
                    cluster, spot, world, gmap, self.probe_cfg, self.sigma_c2, handle, rng, tick
                )
            except ProbeFailed as exc:
                log(tick, "probe_failed", cluster_id=cluster.id, reason=str(exc))
                return None
            self.probed.append(ProbedRecord(cluster.id, cluster.cls, event.collapsibility, event.cells_updated))
            self.events.append(event)
            record = event.to_record()
            del record["tick"]
            log(tick, "probe", cls=cluster.cls.label, **record)
            return event

        clusters = self.clusters(gmap)
        for cl in clusters:
            if cl.id not in self.seen_ids:
                self.seen_ids.add(cl.id)
                log(tick, "cluster_detected", cluster_id=cl.id, cls=cl.cls.label, cells=cl.size)
        if not self.cfg.probe_all:
            clusters = [c for c in clusters if near_path(c, waypoints, gmap.geometry, self.cfg.reach)]
        by_id = {c.id: c for c in clusters}
        spots = [s for c in clusters for s in candidate_spots(c, self.cfg.downsample_stride, gmap.geometry)]
        decision = select_spot(spots, robot_xy, self.cfg.reach)
        if decision.kind is DecisionKind.TRIGGER:
            self.active = (by_id[decision.spot.cluster_id], decision.spot)
            self.pause_ticks = 0
            handle.pause(tick)
            log(
                tick,
                "probe_triggered",
                cluster_id=decision.spot.cluster_id,
                spot=list(decision.spot.world_point),
                distance=decision.distance,
            )
            if self.cfg.pause_ticks_min == 0:
                return self.tick(tick, world, gmap, robot_xy, waypoints, handle, rng, log)
        return None
