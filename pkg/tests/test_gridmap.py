import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probenav.gridmap import (
    ELEVATION,
    TRAVERSABILITY,
    CellEstimate,
    EmptyWindow,
    GridIndex,
    Layer,
    LayeredGridMap,
    MapGeometry,
    NonPositiveVariance,
    OutOfBounds,
    fuse_arrays,
    fuse_cell,
    index_to_world,
    layer_to_gray,
    local_window,
    read_layer_csv,
    read_pgm,
    world_to_index,
    write_layer_snapshot,
)

GEOM10 = MapGeometry((0.0, 0.0), 0.05, 10, 10)


def fuse_seq(prior, meas):
    est = prior
    for v, s2 in meas:
        est = fuse_cell(est, v, s2)
    return est


# -- indexing ------------------------------------------------------------------

def test_world_to_index_examples():
    assert world_to_index((0.0, 0.0), GEOM10) == GridIndex(0, 0)
    assert world_to_index((0.12, 0.07), GEOM10) == GridIndex(2, 1)
    with pytest.raises(OutOfBounds):
        world_to_index((1.0, 0.0), GEOM10)
    with pytest.raises(OutOfBounds):
        world_to_index((-0.01, 0.0), GEOM10)


def test_index_to_world_examples():
    assert index_to_world((0, 0), GEOM10) == pytest.approx((0.025, 0.025), abs=1e-12)
    assert index_to_world((2, 1), GEOM10) == pytest.approx((0.125, 0.075), abs=1e-12)
    with pytest.raises(OutOfBounds):
        index_to_world((10, 0), GEOM10)


def test_geometry_validation():
    with pytest.raises(ValueError):
        MapGeometry((0.0, 0.0), 0.0, 10, 10)
    with pytest.raises(ValueError):
        MapGeometry((0.0, 0.0), 0.05, 0, 10)


@given(
    col=st.integers(0, 39),
    row=st.integers(0, 29),
    ox=st.floats(-50, 50),
    oy=st.floats(-50, 50),
    res=st.sampled_from([0.05, 0.1, 0.25, 1.0]),
)
def test_index_round_trip(col, row, ox, oy, res):
    geom = MapGeometry((ox, oy), res, 40, 30)
    assert world_to_index(index_to_world((col, row), geom), geom) == (col, row)


@given(fx=st.floats(0, 0.999999), fy=st.floats(0, 0.999999))
def test_point_maps_to_own_cell_center(fx, fy):
    geom = MapGeometry((1.0, -2.0), 0.05, 20, 20)
    p = (1.0 + fx * 1.0, -2.0 + fy * 1.0)
    idx = world_to_index(p, geom)
    cx, cy = index_to_world(idx, geom)
    assert abs(cx - p[0]) <= 0.025 + 1e-9 and abs(cy - p[1]) <= 0.025 + 1e-9


# -- fusion --------------------------------------------------------------------

def test_fuse_cell_examples():
    out = fuse_cell(CellEstimate(0.8, 0.04, True), 0.4, 0.04)
    assert out.mean == pytest.approx(0.6, abs=1e-12) and out.variance == pytest.approx(0.02, abs=1e-12)
    out = fuse_cell(CellEstimate(0.5, 0.09, True), 0.9, 0.03)
    assert out.mean == pytest.approx(0.8, abs=1e-12) and out.variance == pytest.approx(0.0225, abs=1e-12)
    out = fuse_cell(CellEstimate(0.7, 0.01, True), 0.0, 1e12)
    assert abs(out.mean - 0.7) < 1e-9


def test_fuse_unknown_prior_initializes():
    out = fuse_cell(CellEstimate.unknown(), 0.3, 0.01)
    assert out == CellEstimate(0.3, 0.01, True)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_fuse_rejects_bad_variance(bad):
    with pytest.raises(NonPositiveVariance):
        fuse_cell(CellEstimate(0.5, 0.1, True), 0.2, bad)


@pytest.mark.parametrize("n", range(1, 17))
def test_equal_variance_updates_give_sigma2_over_n(n):
    s2 = 0.04
    est = fuse_seq(CellEstimate.unknown(), [(0.5, s2)] * n)
    assert abs(est.variance - s2 / n) <= 1e-12


def test_permutation_invariance_100_shuffles():
    rng = np.random.default_rng(1234)
    meas = list(zip(rng.uniform(0, 1, 12), rng.uniform(0.01, 0.2, 12)))
    prior = CellEstimate(0.4, 0.05, True)
    ref = fuse_seq(prior, meas)
    for _ in range(100):
        order = rng.permutation(len(meas))
        out = fuse_seq(prior, [meas[i] for i in order])
        assert abs(out.mean - ref.mean) <= 1e-9
        assert abs(out.variance - ref.variance) <= 1e-9


def test_convergence_to_true_value():
    good = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        est = fuse_seq(CellEstimate.unknown(), [(0.7 + 0.1 * z, 0.01) for z in rng.standard_normal(200)])
        good += abs(est.mean - 0.7) < 0.03
    assert good >= 95


finite = st.floats(-100, 100, allow_nan=False)
pos = st.floats(1e-6, 100, allow_nan=False)


@given(pm=finite, pv=pos, m=finite, mv=pos)
def test_fused_mean_between_prior_and_measurement(pm, pv, m, mv):
    out = fuse_cell(CellEstimate(pm, pv, True), m, mv)
    lo, hi = min(pm, m), max(pm, m)
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    assert lo - tol <= out.mean <= hi + tol
    assert 0 < out.variance < pv


@given(pv=pos, seq=st.lists(st.tuples(finite, pos), min_size=1, max_size=10))
def test_variance_strictly_decreasing(pv, seq):
    est = CellEstimate(0.0, pv, True)
    for m, mv in seq:
        nxt = fuse_cell(est, m, mv)
        assert nxt.variance < est.variance or nxt.variance == est.variance == 0
        est = nxt


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(1e-3, 1), st.booleans()), min_size=1, max_size=30))
def test_fuse_arrays_matches_scalar(cells):
    mean = np.array([0.3] * len(cells))
    var = np.array([0.05] * len(cells))
    known = np.array([k for _, _, k in cells])
    meas = np.array([m for m, _, _ in cells])
    mv = np.array([v for _, v, _ in cells])
    m_out, v_out = fuse_arrays(mean, var, known, meas, mv)
    for i, (m, v, k) in enumerate(cells):
        ref = fuse_cell(CellEstimate(0.3, 0.05, k) if k else CellEstimate.unknown(), m, v)
        assert m_out[i] == pytest.approx(ref.mean, abs=1e-12)
        assert v_out[i] == pytest.approx(ref.variance, abs=1e-15)


def test_bounded_layer_clamps():
    layer = Layer.empty((2, 2), bounded=True)
    mask = np.ones((2, 2), dtype=bool)
    layer.fuse_masked(mask, 1.7, 0.1)
    assert (layer.mean == 1.0).all()
    layer.assign_masked(mask, -0.5, 0.1)
    assert (layer.mean == 0.0).all()
    est = layer.fuse((1, 0), 3.0, 0.1)
    assert est.mean == 1.0


# -- windows -------------------------------------------------------------------

def _filled_map(geom):
    gmap = LayeredGridMap.create(geom)
    rng = np.random.default_rng(0)
    lay = gmap[ELEVATION]
    lay.mean[...] = rng.normal(size=geom.shape)
    lay.var[...] = 0.1
    lay.known[...] = rng.random(geom.shape) < 0.7
    return gmap


def test_local_window_identity():
    geom = MapGeometry((0.0, 0.0), 0.05, 40, 40)
    gmap = _filled_map(geom)
    win = local_window(gmap, (1.0, 1.0), 2.0)
    assert win.geometry == geom
    for name in gmap.layers:
        np.testing.assert_array_equal(win[name].mean, gmap[name].mean)
        np.testing.assert_array_equal(win[name].known, gmap[name].known)


def test_local_window_corner_clip():
    geom = MapGeometry((0.0, 0.0), 0.05, 200, 200)
    gmap = _filled_map(geom)
    win = local_window(gmap, (0.0, 0.0), 2.0)
    # 1 m x 1 m survives the clip
    assert win.geometry.shape == (20, 20)
    assert win.geometry.origin == (0.0, 0.0)
    np.testing.assert_array_equal(win[ELEVATION].mean, gmap[ELEVATION].mean[:20, :20])
    win = local_window(gmap, (10.0, 5.0), 2.0)
    assert win.geometry.shape == (40, 20)
    assert win.geometry.origin == pytest.approx((9.0, 4.0))


def test_local_window_is_a_copy():
    geom = MapGeometry((0.0, 0.0), 0.05, 20, 20)
    gmap = _filled_map(geom)
    win = local_window(gmap, (0.5, 0.5), 0.4)
    win[ELEVATION].mean[...] = 99.0
    assert not (gmap[ELEVATION].mean == 99.0).any()


def test_local_window_outside_map():
    gmap = LayeredGridMap.create(MapGeometry((0.0, 0.0), 0.05, 20, 20))
    with pytest.raises(EmptyWindow):
        local_window(gmap, (100.0, 100.0), 2.0)


# -- snapshots -----------------------------------------------------------------

def test_snapshot_round_trip(tmp_path):
    geom = MapGeometry((0.0, 0.0), 0.05, 13, 7)
    gmap = _filled_map(geom)
    write_layer_snapshot(tmp_path, "elevation", gmap[ELEVATION])
    mean, known = read_layer_csv(tmp_path / "elevation.csv")
    np.testing.assert_array_equal(known, gmap[ELEVATION].known)
    np.testing.assert_array_equal(mean[known], gmap[ELEVATION].mean[known])
    gray = read_pgm(tmp_path / "elevation.pgm")
    assert gray.shape == (7, 13)
    assert (gray[~known] == 0).all() and (gray[known] >= 1).all()


def test_gray_scaling_bounded_layer():
    layer = Layer.empty((1, 3), bounded=True)
    layer.mean[0] = [0.0, 0.5, 1.0]
    layer.known[0] = [True, True, True]
    assert layer_to_gray(layer).tolist() == [[1, 128, 255]]
    layer.known[0, 1] = False
    assert layer_to_gray(layer)[0, 1] == 0
    assert math.isclose(float(layer_to_gray(layer)[0, 2]), 255)
    assert LayeredGridMap.create(GEOM10)[TRAVERSABILITY].bounded
