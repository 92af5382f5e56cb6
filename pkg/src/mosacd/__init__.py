"""Seeded constraint-based causal discovery with confidence-ordered propagation."""

from mosacd.graph import Dag, Pdag, cpdag_of, d_separated, meek_closure
from mosacd.estimator import MosaCD

__all__ = ["Dag", "Pdag", "cpdag_of", "d_separated", "meek_closure", "MosaCD"]

__version__ = "0.1.0"
