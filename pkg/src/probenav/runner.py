"""Run orchestration and artifact emission."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gridmap import SCALAR_LAYERS, TRAVERSABILITY, LayeredGridMap, write_layer_snapshot
from .scenario import Scenario, dump_scenario, scenario_to_dict
from .semantics import semantic_labels, SemanticClass
from .simulation import Simulation
from .traversability import category_image, write_ppm

logger = logging.getLogger(__name__)

VERDICTS = ("goal_reached", "failed", "no_path", "tick_limit")


class IoError(OSError):
    pass


@dataclass
class RunReport:
    verdict: str
    ticks_used: int
    probe_events: list[dict]
    path_length_m: float
    cells_entered: list[list[int]]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "ticks_used": self.ticks_used,
            "probe_events": self.probe_events,
            "path_length_m": self.path_length_m,
            "cells_entered": self.cells_entered,
            "config": self.config,
        }


def _json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"


def write_snapshot(directory: Path, gmap: LayeredGridMap) -> None:
    """All scalar layers as PGM + CSV, the class map as CSV, categories as PPM."""
    for name in SCALAR_LAYERS:
        write_layer_snapshot(directory, name, gmap[name])
    labels = semantic_labels(gmap.class_counts)
    seen = gmap.class_counts.sum(axis=-1) > 0
    with open(directory / "semantic_class.csv", "w") as fh:
        for r in range(labels.shape[0]):
            fh.write(",".join(SemanticClass(v).label if s else "" for v, s in zip(labels[r], seen[r])) + "\n")
    write_ppm(directory / "traversability_classes.ppm", category_image(gmap[TRAVERSABILITY]))


class _Emitter:
    """Streams events and path traces to disk as the run progresses."""

    def __init__(self, out: Path, snapshot_every: int):
        self.out = out
        self.snapshot_every = snapshot_every
        self.events_fh = open(out / "events.jsonl", "w")
        self.trace_fh = open(out / "path_trace.jsonl", "w")
        self.n_events = 0
        self.n_trace = 0
        self.n_probes = 0

    def flush_records(self, sim: Simulation) -> None:
        for ev in sim.events[self.n_events :]:
            self.events_fh.write(_json_line(ev.to_dict()))
        self.n_events = len(sim.events)
        for tr in sim.path_trace[self.n_trace :]:
            self.trace_fh.write(_json_line(tr))
        self.n_trace = len(sim.path_trace)

    def __call__(self, sim: Simulation) -> None:
        self.flush_records(sim)
        probe_now = len(sim.probe_events) > self.n_probes
        self.n_probes = len(sim.probe_events)
        periodic = self.snapshot_every > 0 and sim.tick % self.snapshot_every == 0
        if probe_now or periodic:
            write_snapshot(self.out / "snapshots" / f"tick_{sim.tick:05d}", sim.map)

    def close(self) -> None:
        self.events_fh.close()
        self.trace_fh.close()


def run(scenario: Scenario, output_dir: str | Path, quiet: bool = True) -> RunReport:
    """Simulate a scenario to a terminal verdict and write all artifacts."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(dump_scenario(scenario))
        emitter = _Emitter(out, scenario.snapshot_every)
    except OSError as exc:
        raise IoError(f"cannot write to {out}: {exc}") from exc

    sim = Simulation(scenario.sim)

    def on_tick(s: Simulation) -> None:
        emitter(s)
        if not quiet and s.tick % 25 == 0:
            x, y, _ = s.robot.pose
            print(f"tick {s.tick:5d}  pose ({x:.2f}, {y:.2f})  probes {len(s.probe_events)}")

    try:
        verdict = sim.run(scenario.max_ticks, on_tick=on_tick)
        emitter.flush_records(sim)
    finally:
        emitter.close()

    report = RunReport(
        verdict=verdict,
        ticks_used=sim.tick,
        probe_events=[e.to_record() for e in sim.probe_events],
        path_length_m=sim.path_length(),
        cells_entered=[list(c) for c in sim.cells_entered],
        config=scenario_to_dict(scenario),
    )
    try:
        write_snapshot(out / "final", sim.map)
        np.savetxt(out / "trajectory.csv", np.asarray(sim.trajectory), delimiter=",", fmt="%.9g", header="x,y", comments="")
        with open(out / "report.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write to {out}: {exc}") from exc
    if not quiet:
        print(f"verdict {verdict} after {sim.tick} ticks, {len(sim.probe_events)} probes, path {report.path_length_m:.2f} m")
    return report
