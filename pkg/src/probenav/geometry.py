"""Elevation integration from depth hits and plane-fit slope / roughness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .gridmap import Layer, MapGeometry, fuse_arrays


class GeometryError(Exception):
    pass


class NegativeRange(GeometryError):
    pass


class InsufficientData(GeometryError):
    pass


@dataclass(frozen=True)
class DepthHit:
    world_point: tuple[float, float, float]
    ray_length: float


@dataclass
class DepthScan:
    """Columnar batch of depth hits as produced by the ray caster."""

    points: np.ndarray  # (n, 3)
    ranges: np.ndarray  # (n,)

    @classmethod
    def from_hits(cls, hits: Sequence[DepthHit]) -> "DepthScan":
        if not hits:
            return cls(np.zeros((0, 3)), np.zeros(0))
        pts = np.array([h.world_point for h in hits], dtype=float)
        rng = np.array([h.ray_length for h in hits], dtype=float)
        return cls(pts, rng)

    def __len__(self) -> int:
        return len(self.ranges)

    def __iter__(self) -> Iterator[DepthHit]:
        for p, r in zip(self.points, self.ranges):
            yield DepthHit((float(p[0]), float(p[1]), float(p[2])), float(r))


@dataclass(frozen=True)
class VarianceModel:
    base_var: float = 1e-4
    range_coeff: float = 2.5e-4

    def __post_init__(self):
        if not self.base_var > 0:
            raise ValueError("base_var must be positive")
        if self.range_coeff < 0:
            raise ValueError("range_coeff must be non-negative")


@dataclass(frozen=True)
class PlaneFit:
    unit_normal: tuple[float, float, float]
    residual_std: float
    sample_count: int


def ray_variance(r, vm: VarianceModel):
    """Depth measurement variance as a quadratic in ray length."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise NegativeRange(f"ray length must be >= 0, got {r}")
    out = vm.base_var + vm.range_coeff * r_arr * r_arr
    return float(out) if out.ndim == 0 else out


def integrate_hits(hits, elevation: Layer, geom: MapGeometry, vm: VarianceModel) -> int:
    """Fuse depth hits into the elevation layer, returning the number dropped.

    Hits that share a cell are fused one after another in input order; the
    loop runs over "rounds" (k-th hit of every cell) so each round is a single
    vectorized update.
    """
    scan = hits if isinstance(hits, DepthScan) else DepthScan.from_hits(list(hits))
    if len(scan) == 0:
        return 0
    cols = np.floor((scan.points[:, 0] - geom.origin[0]) / geom.resolution + 1e-9).astype(np.int64)
    rows = np.floor((scan.points[:, 1] - geom.origin[1]) / geom.resolution + 1e-9).astype(np.int64)
    inside = (cols >= 0) & (cols < geom.length_cells) & (rows >= 0) & (rows < geom.width_cells)
    dropped = int((~inside).sum())
    if not inside.any():
        return dropped
    flat = rows[inside] * geom.length_cells + cols[inside]
    z = scan.points[inside, 2]
    var = ray_variance(scan.ranges[inside], vm)
    var = np.atleast_1d(var)

    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    starts = np.r_[0, np.flatnonzero(np.diff(flat_sorted)) + 1]
    # rank of each hit within its cell, in input order
    rank = np.arange(len(flat_sorted)) - np.repeat(starts, np.diff(np.r_[starts, len(flat_sorted)]))

    mean_f = elevation.mean.reshape(-1)
    var_f = elevation.var.reshape(-1)
    known_f = elevation.known.reshape(-1)
    for k in range(int(rank.max()) + 1):
        sel = order[rank == k]
        cells = flat[sel]
        m, v = fuse_arrays(mean_f[cells], var_f[cells], known_f[cells], z[sel], var[sel])
        mean_f[cells] = m
        var_f[cells] = v
        known_f[cells] = True
    return dropped


def fit_plane(points) -> PlaneFit:
    """Least-squares plane z = a*x + b*y + c through (x, y, z) samples."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise InsufficientData(f"need at least 3 cells, got {len(pts)}")
    # Centering both xy and z keeps a constant window at an exact zero gradient.
    xy = pts[:, :2] - pts[:, :2].mean(axis=0)
    z = pts[:, 2] - pts[:, 2].mean()
    if np.linalg.matrix_rank(xy) < 2:
        raise InsufficientData("samples are collinear")
    design = np.column_stack([xy, np.ones(len(pts))])
    coef, *_ = np.linalg.lstsq(design, z, rcond=None)
    resid = z - design @ coef
    normal = np.array([-coef[0], -coef[1], 1.0])
    normal /= np.linalg.norm(normal)
    return PlaneFit(tuple(float(c) for c in normal), float(np.sqrt(np.mean(resid**2))), len(pts))


def fit_window(heights, known, resolution: float) -> PlaneFit:
    """Plane fit over a square neighborhood of grid heights (row = y, col = x)."""
    heights = np.asarray(heights, dtype=float)
    known = np.asarray(known, dtype=bool)
    rows, cols = np.nonzero(known)
    pts = np.column_stack([(cols + 0.5) * resolution, (rows + 0.5) * resolution, heights[known]])
    return fit_plane(pts)


def slope_at(fit: PlaneFit) -> float:
    nx, ny, nz = fit.unit_normal
    # same angle as arccos(nz) for a unit normal, without the loss of precision near 0
    return float(np.arctan2(np.hypot(nx, ny), nz))


def roughness_at(fit: PlaneFit) -> float:
    return fit.residual_std


def slope_roughness_grid(mean: np.ndarray, known: np.ndarray, resolution: float, half_width: int = 2, mask=None):
    """Per-cell plane fit over a (2w+1)^2 neighborhood for a whole grid.

    Returns ``(slope, roughness, valid)`` arrays shaped like ``mean``.  A cell
    is valid when its neighborhood holds >= 3 known, non-collinear cells.
    ``mask`` limits which cells are evaluated; the rest come back invalid.
    """
    w = int(half_width)
    k = 2 * w + 1
    zpad = np.pad(np.where(known, mean, 0.0), w)
    mpad = np.pad(known.astype(float), w)
    if mask is None:
        mask = np.ones(mean.shape, dtype=bool)
    sel_r, sel_c = np.nonzero(mask)
    Z = sliding_window_view(zpad, (k, k))[sel_r, sel_c]
    M = sliding_window_view(mpad, (k, k))[sel_r, sel_c]

    # Offsets in cell units keep the normal matrix integral, so collinear
    # neighborhoods give an exactly zero determinant.
    off = np.arange(-w, w + 1, dtype=float)
    dy, dx = np.meshgrid(off, off, indexing="ij")
    n = M.sum(axis=(-2, -1))
    sx = (M * dx).sum(axis=(-2, -1))
    sy = (M * dy).sum(axis=(-2, -1))
    sxx = (M * dx * dx).sum(axis=(-2, -1))
    syy = (M * dy * dy).sum(axis=(-2, -1))
    sxy = (M * dx * dy).sum(axis=(-2, -1))

    # Center heights per window so a constant offset cancels before the solve.
    zref = np.where(n > 0, (M * Z).sum(axis=(-2, -1)) / np.maximum(n, 1), 0.0)
    Zc = (Z - zref[..., None, None]) * M
    sz = Zc.sum(axis=(-2, -1))
    sxz = (Zc * dx).sum(axis=(-2, -1))
    syz = (Zc * dy).sum(axis=(-2, -1))

    A = np.stack(
        [np.stack([sxx, sxy, sx], -1), np.stack([sxy, syy, sy], -1), np.stack([sx, sy, n], -1)], -2
    )
    ok = (n >= 3) & (np.abs(np.linalg.det(A)) > 0.5) if len(n) else np.zeros(0, dtype=bool)
    slope = np.zeros(mean.shape)
    rough = np.zeros(mean.shape)
    valid = np.zeros(mean.shape, dtype=bool)
    if ok.any():
        b = np.stack([sxz, syz, sz], -1)[ok]
        coef = np.linalg.solve(A[ok], b[..., None])[..., 0]
        ga, gb, c = coef[:, 0], coef[:, 1], coef[:, 2]
        fitted = ga[:, None, None] * dx + gb[:, None, None] * dy + c[:, None, None]
        resid = (Zc[ok] - fitted) * M[ok]
        rr, cc = sel_r[ok], sel_c[ok]
        rough[rr, cc] = np.sqrt((resid**2).sum(axis=(-2, -1)) / n[ok])
        slope[rr, cc] = np.arctan(np.hypot(ga, gb) / resolution)
        valid[rr, cc] = True
    return slope, rough, valid
