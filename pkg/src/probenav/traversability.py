"""Hierarchical local traversability and its registration into the global map."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridmap import Layer
from .semantics import SCORE_TABLE, SemanticClass, class_score


@dataclass(frozen=True)
class FusionConfig:
    w1: float = 0.5
    w2: float = 0.5
    c1: float = 0.05
    c2: float = math.radians(30.0)
    t_unknown: float = 0.5
    sigma_trav2: float = 0.04
    sigma_c2: float = 0.0025
    sigma_sem2: float = 0.09

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ValueError("w1, w2 must be non-negative and sum to 1")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("critical values c1, c2 must be positive")
        if not 0.0 <= self.t_unknown <= 1.0:
            raise ValueError("t_unknown must be in [0, 1]")
        for name in ("sigma_trav2", "sigma_c2", "sigma_sem2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class TraversabilityCategory(enum.Enum):
    TRAVERSABLE = "traversable"
    SEMI_TRAVERSABLE = "semi_traversable"
    SEMI_UNTRAVERSABLE = "semi_untraversable"
    UNTRAVERSABLE = "untraversable"


class Branch(enum.IntEnum):
    UNKNOWN = 0
    COLLAPSIBILITY = 1
    SEMANTIC = 2
    GEOMETRIC = 3


def geometric_traversability(roughness, slope, cfg: FusionConfig):
    penalty = cfg.w1 * np.asarray(roughness) / cfg.c1 + cfg.w2 * np.asarray(slope) / cfg.c2
    out = np.clip(1.0 - penalty, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def local_traversability(
    collapsibility: float | None,
    semantic: SemanticClass | None,
    roughness: float | None,
    slope: float | None,
    cfg: FusionConfig,
) -> float | None:
    """Traversability of one cell from whichever evidence is available.

    Probe-derived collapsibility beats semantics, semantics beat geometry.
    ``None`` means unknown.
    """
    if collapsibility is not None:
        return 1.0 - collapsibility
    if semantic is not None and semantic != SemanticClass.NONE:
        return class_score(semantic)
    if roughness is not None and slope is not None:
        return geometric_traversability(roughness, slope, cfg)
    return None


def local_traversability_grid(c_layer: Layer, labels: np.ndarray, rough: Layer, slope: Layer, cfg: FusionConfig):
    """Vectorized :func:`local_traversability` over aligned grids.

    Returns ``(values, branch)``; cells with ``branch == UNKNOWN`` carry 0.
    """
    branch = np.full(labels.shape, int(Branch.UNKNOWN), dtype=np.int8)
    values = np.zeros(labels.shape)

    geo = rough.known & slope.known
    values[geo] = geometric_traversability(rough.mean[geo], slope.mean[geo], cfg)
    branch[geo] = Branch.GEOMETRIC

    sem = labels != SemanticClass.NONE
    values[sem] = SCORE_TABLE[labels[sem]]
    branch[sem] = Branch.SEMANTIC

    col = c_layer.known
    values[col] = 1.0 - c_layer.mean[col]
    branch[col] = Branch.COLLAPSIBILITY
    return values, branch


def register_global(values: np.ndarray, branch: np.ndarray, global_layer: Layer, cfg: FusionConfig, window=None, mask=None) -> None:
    """Write a local traversability window into the global layer.

    Collapsibility-derived values overwrite the global estimate with variance
    ``sigma_c2``; everything else is Kalman-fused with ``sigma_trav2``.
    ``window`` is a (rows, cols) slice pair locating the local grid inside the
    global one; ``mask`` optionally restricts which local cells are registered.
    """
    if window is None:
        window = (slice(0, values.shape[0]), slice(0, values.shape[1]))
    sub = Layer(
        global_layer.mean[window], global_layer.var[window], global_layer.known[window], global_layer.bounded
    )  # views, so writes land in the global arrays
    sel = branch != Branch.UNKNOWN
    if mask is not None:
        sel &= mask
    override = sel & (branch == Branch.COLLAPSIBILITY)
    fused = sel & ~override
    sub.fuse_masked(fused, values, cfg.sigma_trav2)
    if override.any():
        sub.assign_masked(override, values, cfg.sigma_c2)


def classify(t: float) -> TraversabilityCategory:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"traversability {t} outside [0, 1]")
    if t <= 1e-9:
        return TraversabilityCategory.UNTRAVERSABLE
    if t <= 0.5:
        return TraversabilityCategory.SEMI_UNTRAVERSABLE
    if t < 0.95:
        return TraversabilityCategory.SEMI_TRAVERSABLE
    return TraversabilityCategory.TRAVERSABLE


CATEGORY_COLORS = {
    TraversabilityCategory.UNTRAVERSABLE: (200, 30, 30),
    TraversabilityCategory.SEMI_UNTRAVERSABLE: (130, 80, 40),
    TraversabilityCategory.SEMI_TRAVERSABLE: (20, 110, 40),
    TraversabilityCategory.TRAVERSABLE: (90, 220, 90),
}
UNKNOWN_COLOR = (128, 128, 128)


def category_image(layer: Layer) -> np.ndarray:
    """RGB image (rows, cols, 3) of traversability bands; unknown cells gray."""
    t = layer.mean
    img = np.empty(t.shape + (3,), dtype=np.uint8)
    img[...] = UNKNOWN_COLOR
    bands = [
        (t <= 1e-9, TraversabilityCategory.UNTRAVERSABLE),
        ((t > 1e-9) & (t <= 0.5), TraversabilityCategory.SEMI_UNTRAVERSABLE),
        ((t > 0.5) & (t < 0.95), TraversabilityCategory.SEMI_TRAVERSABLE),
        (t >= 0.95, TraversabilityCategory.TRAVERSABLE),
    ]
    for sel, cat in bands:
        img[sel & layer.known] = CATEGORY_COLORS[cat]
    return img


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    rows, cols, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
