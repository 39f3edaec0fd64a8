import math

import numpy as np
import pytest

from probenav.gridmap import OutOfBounds
from probenav.semantics import SemanticClass
from probenav.simulation import SimConfig, Simulation
from probenav.world import (
    BearingRegion,
    DepthSensorSpec,
    HeightPrimitive,
    Rect,
    RobotStatus,
    SemanticRegion,
    WorldSpec,
    raycast_depth,
)


def world(**kw):
    base = dict(extent=(6.0, 4.0), start_pose=(0.5, 2.0, 0.0), goal=(5.5, 2.0))
    base.update(kw)
    return WorldSpec(**base)


def test_bearing_force_lookup():
    w = world(
        bearing_regions=(
            BearingRegion(Rect(1.0, 1.0, 3.0, 3.0), 40.0),
            BearingRegion(Rect(4.0, 0.0, 6.0, 4.0), 500.0),
            BearingRegion(Rect(4.5, 1.5, 5.0, 2.5), 0.0),
        )
    )
    assert w.bearing_force((0.2, 0.2)) == 500.0
    assert w.bearing_force((2.0, 2.0)) == 40.0
    assert w.bearing_force((4.7, 2.0)) == 0.0
    with pytest.raises(OutOfBounds):
        w.bearing_force((7.0, 0.0))
    assert w.bearing_grid[40, 94] == 0.0


def test_world_validation():
    with pytest.raises(ValueError):
        world(goal=(7.0, 1.0))
    with pytest.raises(ValueError):
        world(semantic_regions=(SemanticRegion(Rect(5.0, 0.0, 7.0, 1.0), SemanticClass.WATER),))
    with pytest.raises(ValueError):
        BearingRegion(Rect(0, 0, 1, 1), -1.0)
    with pytest.raises(ValueError):
        Rect(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        DepthSensorSpec(horizontal_fov=4.0)


def test_height_primitives_override_in_order():
    w = world(
        heights=(
            HeightPrimitive("plane", 0.1),
            HeightPrimitive("box", 1.0, Rect(1.0, 1.0, 2.0, 2.0)),
            HeightPrimitive("ramp", 0.0, Rect(1.5, 0.0, 3.0, 4.0), (0.5, 0.0)),
        )
    )
    assert w.height_at(0.5, 0.5) == pytest.approx(0.1)
    assert w.height_at(1.2, 1.5) == pytest.approx(1.0)
    assert w.height_at(2.5, 1.5) == pytest.approx(0.5)
    assert w.height_at(1.7, 1.5) == pytest.approx(0.1)


def test_depth_scan_flat_ground_heights():
    w = world(extent=(10.0, 10.0))
    spec = DepthSensorSpec(rays_per_scan=9, scan_lines=5)
    scan = raycast_depth(w, (2.0, 5.0, 0.0), spec)
    assert len(scan) == 45
    assert np.abs(scan.points[:, 2]).max() < 1e-9
    horiz = np.hypot(scan.points[:, 0] - 2.0, scan.points[:, 1] - 5.0)
    np.testing.assert_allclose(scan.ranges, np.hypot(horiz, 0.5), atol=1e-9)
    assert scan.ranges.max() <= spec.max_range


def garden(**kw):
    return world(
        semantic_regions=(SemanticRegion(Rect(2.5, 1.0, 3.0, 3.0), SemanticClass.PLANTS),),
        bearing_regions=(BearingRegion(Rect(2.5, 1.0, 3.0, 3.0), 40.0),),
        **kw,
    )


def test_step_failure_on_soft_ground():
    from probenav.probing import ProbePlannerConfig

    sim = Simulation(SimConfig(world=garden(), probing=ProbePlannerConfig(enabled=False)))
    verdict = sim.run(200)
    assert verdict == "failed" and sim.robot.status is RobotStatus.FAILED
    col, row = sim.cells_entered[-1]
    assert sim.world.bearing_grid[row, col] < 100


def test_goal_reached_and_safe_with_probing():
    sim = Simulation(SimConfig(world=garden(), seed=3))
    assert sim.run(300) == "goal_reached"
    assert sim.robot.status is RobotStatus.GOAL_REACHED
    assert math.dist(sim.robot.pose[:2], sim.world.goal) <= 0.1
    assert len(sim.probe_events) == 1
    assert all(sim.world.bearing_grid[r, c] >= 100 for c, r in sim.cells_entered)


def test_per_tick_displacement_and_pause():
    sim = Simulation(SimConfig(world=garden(), seed=3))
    prev = sim.robot.pose
    paused_ticks = 0
    while not sim.done and sim.tick < 300:
        was_paused = sim.paused
        sim.step()
        pose = sim.robot.pose
        assert math.dist(pose[:2], prev[:2]) <= sim.cfg.planner.speed * sim.cfg.dt + 1e-12
        if was_paused and sim.paused:
            paused_ticks += 1
            assert math.dist(pose[:2], prev[:2]) < 1e-12
        prev = pose
    assert paused_ticks >= 1


def test_determinism():
    def run():
        sim = Simulation(SimConfig(world=garden(), seed=11))
        sim.run(300)
        return [e.to_dict() for e in sim.events], sim.map

    ev1, m1 = run()
    ev2, m2 = run()
    assert ev1 == ev2
    for name in m1.layers:
        assert np.array_equal(m1[name].mean, m2[name].mean)
        assert np.array_equal(m1[name].known, m2[name].known)


def test_ground_truth_not_mutated():
    w = garden()
    before = (w.bearing_grid.copy(), w.class_grid.copy())
    Simulation(SimConfig(world=w)).run(20)
    assert np.array_equal(before[0], w.bearing_grid)
    assert np.array_equal(before[1], w.class_grid)


def test_step_after_finish_raises():
    sim = Simulation(SimConfig(world=garden()))
    sim.run(1)
    assert sim.verdict == "tick_limit" and sim.done
    with pytest.raises(RuntimeError):
        sim.step()
