import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probenav.collapsibility import (
    EmptyCluster,
    NegativeForce,
    NonPositiveReference,
    ProbeConfig,
    estimate_collapsibility,
    propagate_to_cluster,
    simulate_probe,
)
from probenav.gridmap import Layer, OutOfBounds
from probenav.world import BearingRegion, Rect, WorldSpec


def probe_world():
    return WorldSpec(
        extent=(4.0, 4.0),
        bearing_regions=(
            BearingRegion(Rect(1.0, 1.0, 2.0, 2.0), 40.0),
            BearingRegion(Rect(2.0, 2.0, 3.0, 3.0), 0.0),
        ),
        start_pose=(0.5, 0.5, 0.0),
        goal=(3.5, 3.5),
    )


@pytest.mark.parametrize("f_ext, expected", [(0, 1.0), (100, 0.0), (150, 0.0), (50, 0.5)])
def test_collapsibility_examples(f_ext, expected):
    assert estimate_collapsibility(f_ext, 100) == expected


def test_collapsibility_errors():
    with pytest.raises(NonPositiveReference):
        estimate_collapsibility(10, 0)
    with pytest.raises(NegativeForce):
        estimate_collapsibility(-1, 100)


def test_random_monotone_and_lipschitz():
    rng = np.random.default_rng(0)
    f_hard = rng.uniform(1, 500, 10_000)
    a = rng.uniform(0, 2, 10_000) * f_hard
    b = rng.uniform(0, 2, 10_000) * f_hard
    for fh, x, y in zip(f_hard, a, b):
        cx, cy = estimate_collapsibility(x, fh), estimate_collapsibility(y, fh)
        assert 0.0 <= cx <= 1.0
        if x <= y:
            assert cx >= cy
        assert abs(cx - cy) <= abs(x - y) / fh + 1e-12


@given(st.floats(1e-3, 1e4), st.floats(0, 10))
def test_zero_beyond_reference(f_hard, ratio):
    c = estimate_collapsibility(f_hard * (1 + ratio), f_hard)
    assert c == 0.0
    assert estimate_collapsibility(0.0, f_hard) == 1.0


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(f_hard=100, f_apply_max=90)
    with pytest.raises(ValueError):
        ProbeConfig(window_len=0)


@pytest.mark.parametrize("spot, f_ext, c", [((0.5, 0.5), 120.0, 0.0), ((2.5, 2.5), 0.0, 1.0), ((1.5, 1.5), 40.0, 0.6)])
def test_simulate_probe_noiseless(spot, f_ext, c):
    m = simulate_probe(probe_world(), spot, ProbeConfig(), np.random.default_rng(0))
    assert m.f_ext == f_ext and len(m.samples) == 25
    assert estimate_collapsibility(m.f_ext, 100.0) == pytest.approx(c, abs=1e-12)


def test_simulate_probe_is_pure_without_noise():
    a = simulate_probe(probe_world(), (1.5, 1.5), ProbeConfig(), np.random.default_rng(1))
    b = simulate_probe(probe_world(), (1.5, 1.5), ProbeConfig(), np.random.default_rng(99))
    assert a == b


def test_simulate_probe_out_of_bounds():
    with pytest.raises(OutOfBounds):
        simulate_probe(probe_world(), (9.0, 0.0), ProbeConfig(), np.random.default_rng(0))


def test_window_average_noise():
    cfg = ProbeConfig(noise_std=5.0, window_len=25)
    rng = np.random.default_rng(7)
    vals = [simulate_probe(probe_world(), (1.5, 1.5), cfg, rng).f_ext for _ in range(1000)]
    assert abs(np.std(vals) - 1.0) <= 0.3


def test_samples_clamped_at_zero():
    m = simulate_probe(probe_world(), (2.5, 2.5), ProbeConfig(noise_std=5.0), np.random.default_rng(3))
    assert min(m.samples) >= 0.0 and m.f_ext >= 0.0


def test_propagate_to_cluster():
    layer = Layer.empty((10, 10), bounded=True)
    cells = [(c, r) for r in range(5) for c in range(8)]
    assert propagate_to_cluster(0.9, cells, layer, 0.0025) == 40
    assert layer.known.sum() == 40
    assert (layer.mean[layer.known] == 0.9).all() and (layer.var[layer.known] == 0.0025).all()
    propagate_to_cluster(0.0, [(9, 9)], layer, 0.0025)
    assert layer.known[9, 9] and layer.mean[9, 9] == 0.0
    with pytest.raises(EmptyCluster):
        propagate_to_cluster(0.5, [], layer, 0.0025)
