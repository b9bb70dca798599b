"""Simulation toolkit for SDN control-plane optimisation.

Modules: ``netmodel`` (topologies, paths, loads), ``traffic`` (demand
streams), ``admission`` (online accept/reject deciders), ``experts``
(meta-algorithms over deciders), ``routing`` (re-optimisation, LP bounds,
deployment policies), ``monitoring`` (sampling and matrix completion),
``engine`` (the simulation loop) and ``cli``.
"""

from .config import ConfigError, RunConfig
from .engine import InvariantViolation, Metrics, run, sweep
from .netmodel import Topology, geant, k_shortest_paths, load_topology, read_topology

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "InvariantViolation", "Metrics", "RunConfig", "Topology",
    "geant", "k_shortest_paths", "load_topology", "read_topology", "run", "sweep",
]
