"""Simulated semantic sensing and probabilistic registration of class evidence."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .gridmap import SEMANTIC_SCORE, GridIndex, LayeredGridMap


class SemanticClass(enum.IntEnum):
    # values double as the index into LayeredGridMap.class_counts
    PLANTS = 0
    WATER = 1
    NONE = 2

    @classmethod
    def parse(cls, name: str) -> "SemanticClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown semantic class {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


QUESTIONABLE = (SemanticClass.PLANTS, SemanticClass.WATER)

_CLASS_SCORES = {SemanticClass.PLANTS: 0.8, SemanticClass.WATER: 0.3}

# Lookup by class code; NaN for NONE.
SCORE_TABLE = np.array([0.8, 0.3, np.nan])

# Tie-break priority when counts are equal: lowest score first, NONE last.
_TIE_ORDER = (SemanticClass.WATER, SemanticClass.PLANTS, SemanticClass.NONE)


class NoScoreForNone(ValueError):
    pass


def class_score(c: SemanticClass) -> float:
    """Fixed traversability of a semantic class (plants 0.8, water 0.3)."""
    try:
        return _CLASS_SCORES[SemanticClass(c)]
    except KeyError:
        raise NoScoreForNone("class 'none' has no traversability score") from None


@dataclass(frozen=True)
class SemanticObservation:
    cell: GridIndex
    observed_class: SemanticClass


@dataclass(frozen=True)
class SemanticSensorSpec:
    fov_halfangle: float = 0.759
    max_range: float = 4.0
    misclass_prob: float = 0.0
    rate_divisor: int = 1

    def __post_init__(self):
        if not 0 <= self.misclass_prob < 0.5:
            raise ValueError("misclass_prob must be in [0, 0.5)")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.rate_divisor < 1:
            raise ValueError("rate_divisor must be >= 1")
        if not 0 < self.fov_halfangle <= math.pi:
            raise ValueError("fov_halfangle must be in (0, pi]")


@dataclass
class SemanticScan:
    rows: np.ndarray
    cols: np.ndarray
    classes: np.ndarray  # SemanticClass codes

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[SemanticObservation]:
        for r, c, k in zip(self.rows, self.cols, self.classes):
            yield SemanticObservation(GridIndex(int(c), int(r)), SemanticClass(int(k)))

    @classmethod
    def from_observations(cls, obs) -> "SemanticScan":
        obs = list(obs)
        return cls(
            np.array([o.cell.row for o in obs], dtype=np.int64),
            np.array([o.cell.col for o in obs], dtype=np.int64),
            np.array([int(o.observed_class) for o in obs], dtype=np.int64),
        )


def fov_mask(geom, pose, fov_halfangle: float, max_range: float) -> np.ndarray:
    """Cells whose centers fall inside the forward sensing wedge."""
    x, y, heading = pose
    cx, cy = geom.cell_centers()
    dx, dy = cx - x, cy - y
    dist = np.hypot(dx, dy)
    bearing = np.arctan2(dy, dx) - heading
    bearing = (bearing + np.pi) % (2 * np.pi) - np.pi
    return (dist <= max_range) & (np.abs(bearing) <= fov_halfangle)


def sense_semantics(world, pose, spec: SemanticSensorSpec, rng: np.random.Generator) -> SemanticScan:
    """Observe ground-truth classes inside the sensor wedge, with label noise.

    Every observed cell consumes two random draws regardless of
    ``misclass_prob`` so the stream position only depends on the cell count.
    """
    geom = world.geometry
    mask = fov_mask(geom, pose, spec.fov_halfangle, spec.max_range)
    rows, cols = np.nonzero(mask)
    truth = world.class_grid[rows, cols].astype(np.int64)
    flip = rng.random(len(rows)) < spec.misclass_prob
    shift = rng.integers(1, 3, size=len(rows))
    observed = np.where(flip, (truth + shift) % 3, truth)
    return SemanticScan(rows, cols, observed)


def fuse_semantic(gmap: LayeredGridMap, scan, sigma_sem2: float) -> None:
    """Register semantic observations: score fusion plus per-class counts."""
    if not sigma_sem2 > 0:
        raise ValueError("sigma_sem2 must be positive")
    if not isinstance(scan, SemanticScan):
        scan = SemanticScan.from_observations(scan)
    if len(scan) == 0:
        return
    score_layer = gmap[SEMANTIC_SCORE]
    # Same cell may appear more than once in a hand-built observation list;
    # apply those in order as separate rounds.
    flat = scan.rows * gmap.geometry.length_cells + scan.cols
    _, first = np.unique(flat, return_index=True)
    if len(first) == len(flat):
        _fuse_round(gmap, score_layer, scan.rows, scan.cols, scan.classes, sigma_sem2)
    else:
        for i in range(len(flat)):
            _fuse_round(gmap, score_layer, scan.rows[i : i + 1], scan.cols[i : i + 1], scan.classes[i : i + 1], sigma_sem2)


def _fuse_round(gmap, score_layer, rows, cols, classes, sigma_sem2):
    np.add.at(gmap.class_counts, (rows, cols, classes), 1)
    scored = classes != SemanticClass.NONE
    if scored.any():
        mask = np.zeros(gmap.geometry.shape, dtype=bool)
        values = np.zeros(gmap.geometry.shape)
        mask[rows[scored], cols[scored]] = True
        values[rows[scored], cols[scored]] = SCORE_TABLE[classes[scored]]
        score_layer.fuse_masked(mask, values, sigma_sem2)


def semantic_labels(counts: np.ndarray) -> np.ndarray:
    """Majority class per cell; ties go to the lower-score class.

    Cells never observed get NONE.
    """
    best = np.full(counts.shape[:-1], int(SemanticClass.NONE), dtype=np.int64)
    best_count = np.full(counts.shape[:-1], 0, dtype=counts.dtype)
    for cls in _TIE_ORDER:
        c = counts[..., int(cls)]
        better = c > best_count
        best = np.where(better, int(cls), best)
        best_count = np.where(better, c, best_count)
    return best


def label_at(gmap: LayeredGridMap, idx: tuple[int, int]) -> SemanticClass:
    col, row = idx
    return SemanticClass(int(semantic_labels(gmap.class_counts[row : row + 1, col : col + 1])[0, 0]))
