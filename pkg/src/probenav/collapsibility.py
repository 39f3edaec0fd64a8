"""Force-based collapsibility estimation and the simulated probe."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .gridmap import Layer


class CollapsibilityError(ValueError):
    pass


class NonPositiveReference(CollapsibilityError):
    pass


class NegativeForce(CollapsibilityError):
    pass


class EmptyCluster(CollapsibilityError):
    pass


@dataclass(frozen=True)
class ProbeConfig:
    f_hard: float = 100.0
    f_apply_max: float = 120.0
    window_len: int = 25
    noise_std: float = 0.0

    def __post_init__(self):
        if not self.f_hard > 0:
            raise ValueError("f_hard must be positive")
        if self.f_apply_max < self.f_hard:
            raise ValueError("f_apply_max must be >= f_hard")
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass(frozen=True)
class ProbeMeasurement:
    spot: tuple[float, float]
    f_ext: float
    samples: tuple[float, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class ProbeEvent:
    tick: int
    measurement: ProbeMeasurement
    collapsibility: float
    cluster_id: str
    cells_updated: int

    def to_record(self) -> dict:
        return {
            "tick": self.tick,
            "spot": [self.measurement.spot[0], self.measurement.spot[1]],
            "f_ext": self.measurement.f_ext,
            "collapsibility": self.collapsibility,
            "cluster_id": self.cluster_id,
            "cells_updated": self.cells_updated,
        }


def estimate_collapsibility(f_ext: float, f_hard: float) -> float:
    """Normalized shortfall of the measured force against the hard-ground reference.

    Returns 1 for no support at all and 0 once the ground resists ``f_hard``.
    """
    if not f_hard > 0:
        raise NonPositiveReference(f"f_hard must be > 0, got {f_hard}")
    if f_ext < 0:
        raise NegativeForce(f"measured force must be >= 0, got {f_ext}")
    return max(f_hard - f_ext, 0.0) / f_hard


def simulate_probe(world, spot: tuple[float, float], cfg: ProbeConfig, rng: np.random.Generator) -> ProbeMeasurement:
    """Push the probe at ``spot`` and return the window-averaged force.

    The probe saturates at ``f_apply_max``; ground weaker than that yields at
    its bearing force.  Noise is drawn even when ``noise_std`` is 0 so the
    random stream advances identically.
    """
    bearing = world.bearing_force(spot)  # raises OutOfBounds
    true_force = min(bearing, cfg.f_apply_max)
    noise = rng.standard_normal(cfg.window_len) * cfg.noise_std
    samples = np.maximum(true_force + noise, 0.0)
    return ProbeMeasurement((float(spot[0]), float(spot[1])), float(samples.mean()), tuple(float(s) for s in samples))


def propagate_to_cluster(c_value: float, cluster_cells: Iterable[tuple[int, int]], layer: Layer, sigma_c2: float) -> int:
    """Assign one probe result to every cell of a cluster; returns the cell count."""
    if not 0.0 <= c_value <= 1.0:
        raise CollapsibilityError(f"collapsibility must be in [0, 1], got {c_value}")
    cells = list(cluster_cells)
    if not cells:
        raise EmptyCluster("cluster has no cells")
    cols = np.fromiter((c[0] for c in cells), dtype=np.int64, count=len(cells))
    rows = np.fromiter((c[1] for c in cells), dtype=np.int64, count=len(cells))
    layer.mean[rows, cols] = c_value
    layer.var[rows, cols] = sigma_c2
    layer.known[rows, cols] = True
    return len(cells)
