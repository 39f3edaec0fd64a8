import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probenav.gridmap import SEMANTIC_SCORE, GridIndex, LayeredGridMap
from probenav.semantics import (
    NoScoreForNone,
    SemanticClass,
    SemanticObservation,
    SemanticSensorSpec,
    class_score,
    fuse_semantic,
    label_at,
    semantic_labels,
    sense_semantics,
)
from probenav.world import Rect, SemanticRegion, WorldSpec

P, W, N = SemanticClass.PLANTS, SemanticClass.WATER, SemanticClass.NONE


def plant_world():
    return WorldSpec(
        extent=(6.0, 6.0),
        semantic_regions=(SemanticRegion(Rect(2.0, 2.0, 3.0, 4.0), P),),
        start_pose=(1.0, 3.0, 0.0),
        goal=(5.0, 3.0),
    )


def test_class_scores():
    assert class_score(P) == 0.8
    assert class_score(W) == 0.3
    with pytest.raises(NoScoreForNone):
        class_score(N)


def test_class_parse():
    assert SemanticClass.parse("Plants") is P
    with pytest.raises(ValueError):
        SemanticClass.parse("rock")


def test_sensor_spec_validation():
    with pytest.raises(ValueError):
        SemanticSensorSpec(misclass_prob=0.5)
    with pytest.raises(ValueError):
        SemanticSensorSpec(rate_divisor=0)


def test_noiseless_sensing_sees_whole_region():
    world = plant_world()
    # from x = 0.5 the whole rectangle sits inside the wedge
    scan = sense_semantics(world, (0.5, 3.0, 0.0), SemanticSensorSpec(), np.random.default_rng(0))
    truth = world.class_grid
    seen_plants = {(r, c) for r, c, k in zip(scan.rows, scan.cols, scan.classes) if k == P}
    all_plants = set(zip(*np.nonzero(truth == P)))
    assert seen_plants == all_plants
    assert all(k == truth[r, c] for r, c, k in zip(scan.rows, scan.cols, scan.classes))


def test_region_behind_robot_not_observed():
    world = plant_world()
    scan = sense_semantics(world, (5.0, 3.0, 0.0), SemanticSensorSpec(), np.random.default_rng(0))
    assert not (scan.classes == P).any()


def test_misclassification_rate_binomial():
    world = plant_world()
    spec = SemanticSensorSpec(misclass_prob=0.1, max_range=1.5)
    rng = np.random.default_rng(42)
    wrong = total = 0
    while total < 1000:
        scan = sense_semantics(world, (1.0, 3.0, 0.0), spec, rng)
        truth = world.class_grid[scan.rows, scan.cols]
        wrong += int((scan.classes != truth).sum())
        total += len(scan)
    sd = math.sqrt(total * 0.1 * 0.9)
    assert abs(wrong - 0.1 * total) <= 3 * sd


def test_sensing_is_deterministic():
    world = plant_world()
    spec = SemanticSensorSpec(misclass_prob=0.2)
    a = sense_semantics(world, (1.0, 3.0, 0.0), spec, np.random.default_rng(5))
    b = sense_semantics(world, (1.0, 3.0, 0.0), spec, np.random.default_rng(5))
    np.testing.assert_array_equal(a.classes, b.classes)


def test_fuse_fresh_cell():
    world = plant_world()
    gmap = LayeredGridMap.create(world.geometry)
    fuse_semantic(gmap, [SemanticObservation(GridIndex(3, 4), P)], 0.09)
    est = gmap[SEMANTIC_SCORE].get((3, 4))
    assert est.mean == 0.8 and est.variance == 0.09
    assert label_at(gmap, (3, 4)) is P
    assert label_at(gmap, (0, 0)) is N


def test_fuse_three_plants_then_water():
    gmap = LayeredGridMap.create(plant_world().geometry)
    obs = [SemanticObservation(GridIndex(1, 1), c) for c in (P, P, P, W)]
    fuse_semantic(gmap, obs, 0.09)
    assert label_at(gmap, (1, 1)) is P
    m = gmap[SEMANTIC_SCORE].mean[1, 1]
    assert 0.3 < m < 0.8
    # hand-evaluated: three equal-variance 0.8 updates then one 0.3 update
    assert m == pytest.approx((3 * 0.8 + 0.3) / 4, abs=1e-12)


def test_tie_goes_to_water():
    gmap = LayeredGridMap.create(plant_world().geometry)
    fuse_semantic(gmap, [SemanticObservation(GridIndex(2, 2), c) for c in (P, W)], 0.09)
    assert label_at(gmap, (2, 2)) is W


def test_none_observations_leave_score_unknown():
    gmap = LayeredGridMap.create(plant_world().geometry)
    fuse_semantic(gmap, [SemanticObservation(GridIndex(2, 2), N)], 0.09)
    assert not gmap[SEMANTIC_SCORE].known[2, 2]
    assert gmap.class_counts[2, 2, N] == 1


@given(st.lists(st.sampled_from([P, W, N]), min_size=1, max_size=40))
def test_score_in_class_hull(seq):
    gmap = LayeredGridMap.create(plant_world().geometry)
    for c in seq:
        fuse_semantic(gmap, [SemanticObservation(GridIndex(0, 0), c)], 0.09)
    layer = gmap[SEMANTIC_SCORE]
    if layer.known[0, 0]:
        assert 0.3 - 1e-12 <= layer.mean[0, 0] <= 0.8 + 1e-12


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.sampled_from([P, W, N])), max_size=30, unique_by=lambda t: (t[0], t[1])))
def test_single_observation_order_independent(obs):
    geom = plant_world().geometry
    a, b = LayeredGridMap.create(geom), LayeredGridMap.create(geom)
    items = [SemanticObservation(GridIndex(c, r), k) for c, r, k in obs]
    fuse_semantic(a, items, 0.09)
    fuse_semantic(b, list(reversed(items)), 0.09)
    np.testing.assert_array_equal(a.class_counts, b.class_counts)
    np.testing.assert_array_equal(a[SEMANTIC_SCORE].mean, b[SEMANTIC_SCORE].mean)


def test_labels_converge_under_noise():
    world = plant_world()
    gmap = LayeredGridMap.create(world.geometry)
    spec = SemanticSensorSpec(misclass_prob=0.2)
    rng = np.random.default_rng(2024)
    for _ in range(50):
        fuse_semantic(gmap, sense_semantics(world, (0.5, 3.0, 0.0), spec, rng), 0.09)
    region = world.class_grid == P
    labels = semantic_labels(gmap.class_counts)
    assert (labels[region] == P).mean() >= 0.99
