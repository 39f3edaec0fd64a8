"""Fixed-resolution layered grid maps with per-cell Gaussian estimates.

Storage is row-major: ``row`` indexes the y axis and ``col`` the x axis, so a
layer array has shape ``(width_cells, length_cells)``.  Every layer keeps three
parallel arrays (mean, variance, known) so unobserved cells are an explicit
state instead of a magic number.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

# Snapping tolerance for points that sit on a cell boundary up to rounding.
_EDGE_EPS = 1e-9

ELEVATION = "elevation"
SLOPE = "slope"
ROUGHNESS = "roughness"
SEMANTIC_SCORE = "semantic_score"
COLLAPSIBILITY = "collapsibility"
TRAVERSABILITY = "traversability"

SCALAR_LAYERS = (ELEVATION, SLOPE, ROUGHNESS, SEMANTIC_SCORE, COLLAPSIBILITY, TRAVERSABILITY)
BOUNDED_LAYERS = frozenset({SEMANTIC_SCORE, COLLAPSIBILITY, TRAVERSABILITY})

# Number of semantic classes tracked by the per-cell observation counters.
N_CLASSES = 3


class GridMapError(Exception):
    pass


class OutOfBounds(GridMapError):
    pass


class NonPositiveVariance(GridMapError):
    pass


class EmptyWindow(GridMapError):
    pass


@dataclass(frozen=True)
class MapGeometry:
    origin: tuple[float, float]
    resolution: float
    length_cells: int
    width_cells: int

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.length_cells < 1 or self.width_cells < 1:
            raise ValueError("map must have at least one cell per axis")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width_cells, self.length_cells)

    @property
    def extent(self) -> tuple[float, float]:
        return (self.length_cells * self.resolution, self.width_cells * self.resolution)

    def contains(self, col: int, row: int) -> bool:
        return 0 <= col < self.length_cells and 0 <= row < self.width_cells

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (x, y) arrays of cell-center coordinates, each shaped like a layer."""
        xs = self.origin[0] + (np.arange(self.length_cells) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.width_cells) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)


class GridIndex(NamedTuple):
    col: int
    row: int


@dataclass(frozen=True)
class CellEstimate:
    mean: float = 0.0
    variance: float = 0.0
    known: bool = False

    @classmethod
    def unknown(cls) -> "CellEstimate":
        return cls()


def _axis_index(value: float, origin: float, resolution: float) -> int:
    return math.floor((value - origin) / resolution + _EDGE_EPS)


def world_to_index(p: tuple[float, float], geom: MapGeometry) -> GridIndex:
    """Map a world point to the index of the cell containing it."""
    col = _axis_index(p[0], geom.origin[0], geom.resolution)
    row = _axis_index(p[1], geom.origin[1], geom.resolution)
    if not geom.contains(col, row):
        raise OutOfBounds(f"point {tuple(p)} maps to cell ({col}, {row}) outside the map")
    return GridIndex(col, row)


def index_to_world(i: tuple[int, int], geom: MapGeometry) -> tuple[float, float]:
    """Return the world coordinates of a cell center."""
    col, row = i
    if not geom.contains(col, row):
        raise OutOfBounds(f"cell ({col}, {row}) outside {geom.length_cells}x{geom.width_cells} map")
    return (
        geom.origin[0] + (col + 0.5) * geom.resolution,
        geom.origin[1] + (row + 0.5) * geom.resolution,
    )


def fuse_cell(prior: CellEstimate, meas_value: float, meas_variance: float) -> CellEstimate:
    """Fuse one scalar measurement into a cell with the 1D Kalman update.

    An unknown prior is initialized directly from the measurement.
    """
    if not meas_variance > 0:
        raise NonPositiveVariance(f"measurement variance must be > 0, got {meas_variance}")
    if not prior.known:
        return CellEstimate(float(meas_value), float(meas_variance), True)
    denom = prior.variance + meas_variance
    mean = (meas_variance * prior.mean + prior.variance * meas_value) / denom
    variance = prior.variance * meas_variance / denom
    return CellEstimate(mean, variance, True)


def fuse_arrays(mean, var, known, meas, meas_var):
    """Elementwise ``fuse_cell`` over arrays; returns new (mean, var) arrays.

    ``known`` marks which priors exist; unknown priors take the measurement.
    """
    meas = np.asarray(meas, dtype=float)
    meas_var = np.broadcast_to(np.asarray(meas_var, dtype=float), meas.shape)
    if np.any(~(meas_var > 0)):
        raise NonPositiveVariance("measurement variances must be > 0")
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    denom = np.where(known, var + meas_var, 1.0)
    fused_mean = np.where(known, (meas_var * mean + var * meas) / denom, meas)
    fused_var = np.where(known, var * meas_var / denom, meas_var)
    return fused_mean, fused_var


@dataclass
class Layer:
    """One named grid of Gaussian cell estimates."""

    mean: np.ndarray
    var: np.ndarray
    known: np.ndarray
    bounded: bool = False

    @classmethod
    def empty(cls, shape: tuple[int, int], bounded: bool = False) -> "Layer":
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=bool), bounded)

    def get(self, idx: tuple[int, int]) -> CellEstimate:
        col, row = idx
        if not self.known[row, col]:
            return CellEstimate.unknown()
        return CellEstimate(float(self.mean[row, col]), float(self.var[row, col]), True)

    def set(self, idx: tuple[int, int], est: CellEstimate) -> None:
        col, row = idx
        self.known[row, col] = est.known
        self.mean[row, col] = est.mean if est.known else 0.0
        self.var[row, col] = est.variance if est.known else 0.0

    def fuse(self, idx: tuple[int, int], value: float, variance: float) -> CellEstimate:
        est = fuse_cell(self.get(idx), value, variance)
        if self.bounded:
            est = CellEstimate(min(max(est.mean, 0.0), 1.0), est.variance, True)
        self.set(idx, est)
        return est

    def fuse_masked(self, mask: np.ndarray, values, variance) -> None:
        """Fuse one measurement into every cell selected by ``mask``."""
        if not mask.any():
            return
        values = np.broadcast_to(np.asarray(values, dtype=float), mask.shape)[mask]
        variance = np.broadcast_to(np.asarray(variance, dtype=float), mask.shape)[mask]
        m, v = fuse_arrays(self.mean[mask], self.var[mask], self.known[mask], values, variance)
        if self.bounded:
            m = np.clip(m, 0.0, 1.0)
        self.mean[mask] = m
        self.var[mask] = v
        self.known[mask] = True

    def assign_masked(self, mask: np.ndarray, values, variance) -> None:
        """Overwrite the selected cells with the given estimate."""
        values = np.broadcast_to(np.asarray(values, dtype=float), mask.shape)
        variance = np.broadcast_to(np.asarray(variance, dtype=float), mask.shape)
        self.mean[mask] = np.clip(values[mask], 0.0, 1.0) if self.bounded else values[mask]
        self.var[mask] = variance[mask]
        self.known[mask] = True

    def copy(self) -> "Layer":
        return Layer(self.mean.copy(), self.var.copy(), self.known.copy(), self.bounded)


@dataclass
class LayeredGridMap:
    geometry: MapGeometry
    layers: dict[str, Layer] = field(default_factory=dict)
    # Per-cell observation counts for each semantic class, shape (rows, cols, N_CLASSES).
    class_counts: np.ndarray | None = None

    @classmethod
    def create(cls, geometry: MapGeometry, names: Iterable[str] = SCALAR_LAYERS) -> "LayeredGridMap":
        layers = {n: Layer.empty(geometry.shape, bounded=n in BOUNDED_LAYERS) for n in names}
        counts = np.zeros(geometry.shape + (N_CLASSES,), dtype=np.int64)
        return cls(geometry, layers, counts)

    def __getitem__(self, name: str) -> Layer:
        return self.layers[name]

    def copy(self) -> "LayeredGridMap":
        return copy.deepcopy(self)

    def window_slices(self, center: tuple[float, float], span: float) -> tuple[slice, slice]:
        """Row/col slices of the axis-aligned square window clipped to the map."""
        if not span > 0:
            raise ValueError("window span must be positive")
        g = self.geometry
        half = span / 2.0
        c0 = math.floor((center[0] - half - g.origin[0]) / g.resolution + _EDGE_EPS)
        c1 = math.ceil((center[0] + half - g.origin[0]) / g.resolution - _EDGE_EPS)
        r0 = math.floor((center[1] - half - g.origin[1]) / g.resolution + _EDGE_EPS)
        r1 = math.ceil((center[1] + half - g.origin[1]) / g.resolution - _EDGE_EPS)
        c0, c1 = max(c0, 0), min(c1, g.length_cells)
        r0, r1 = max(r0, 0), min(r1, g.width_cells)
        if c0 >= c1 or r0 >= r1:
            raise EmptyWindow(f"window at {tuple(center)} with span {span} misses the map")
        return slice(r0, r1), slice(c0, c1)


def local_window(global_map: LayeredGridMap, center: tuple[float, float], span: float) -> LayeredGridMap:
    """Copy every layer over a square window around ``center``, clipped to the map."""
    rows, cols = global_map.window_slices(center, span)
    g = global_map.geometry
    geom = MapGeometry(
        origin=(g.origin[0] + cols.start * g.resolution, g.origin[1] + rows.start * g.resolution),
        resolution=g.resolution,
        length_cells=cols.stop - cols.start,
        width_cells=rows.stop - rows.start,
    )
    layers = {
        name: Layer(l.mean[rows, cols].copy(), l.var[rows, cols].copy(), l.known[rows, cols].copy(), l.bounded)
        for name, l in global_map.layers.items()
    }
    counts = None
    if global_map.class_counts is not None:
        counts = global_map.class_counts[rows, cols].copy()
    return LayeredGridMap(geom, layers, counts)


# -- snapshots ---------------------------------------------------------------

def layer_to_gray(layer: Layer, value_range: tuple[float, float] | None = None) -> np.ndarray:
    """Scale a layer to uint8.  Unknown cells are 0; known cells span 1..255."""
    if value_range is None:
        if layer.bounded:
            value_range = (0.0, 1.0)
        elif layer.known.any():
            vals = layer.mean[layer.known]
            value_range = (float(vals.min()), float(vals.max()))
        else:
            value_range = (0.0, 1.0)
    lo, hi = value_range
    scale = hi - lo if hi > lo else 1.0
    norm = np.clip((layer.mean - lo) / scale, 0.0, 1.0)
    gray = (1 + np.rint(norm * 254)).astype(np.uint8)
    gray[~layer.known] = 0
    return gray


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """Write an 8-bit binary PGM (P5).  Row 0 of the array is written first."""
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    rows, cols = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    return np.frombuffer(parts[4], dtype=np.uint8, count=rows * cols).reshape(rows, cols)


def write_layer_csv(path: str | Path, layer: Layer) -> None:
    """Lossless row-major CSV of layer means; unknown cells are empty fields."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for r in range(layer.mean.shape[0]):
            writer.writerow(
                repr(float(m)) if k else "" for m, k in zip(layer.mean[r], layer.known[r])
            )


def read_layer_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_layer_csv`; returns (mean, known)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    known = np.array([[f != "" for f in r] for r in rows], dtype=bool)
    mean = np.array([[float(f) if f else 0.0 for f in r] for r in rows])
    return mean, known


def write_layer_snapshot(directory: str | Path, name: str, layer: Layer) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_pgm(directory / f"{name}.pgm", layer_to_gray(layer))
    write_layer_csv(directory / f"{name}.csv", layer)
