"""Simulator for mobile AR offloading to an edge server backed by a cloud."""

from .models import SchemeKind
from .scenario import ARWorkload, SimConfig, build_scenario, default_config

__all__ = ["ARWorkload", "SchemeKind", "SimConfig", "build_scenario", "default_config"]
__version__ = "0.1.0"
