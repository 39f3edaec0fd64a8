"""Probing-aware traversability mapping and navigation in a 2.5D simulator."""

from .scenario import ParseError, Scenario, ValidationError, parse_scenario
from .runner import RunReport, run
from .simulation import SimConfig, Simulation

__version__ = "0.1.0"

__all__ = ["ParseError", "RunReport", "Scenario", "SimConfig", "Simulation", "ValidationError", "parse_scenario", "run"]
