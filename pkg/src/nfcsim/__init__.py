"""Deterministic simulator for in-network function computation.

Networks of source, atomic, and destination nodes carry function
evaluations instead of raw data: random linear network coding for data
recovery, sum/count decompositions for consensus averaging, logistic
units for tree-distributed neural training, plus solvability analysis
and communication-cost accounting against a raw-forwarding baseline.
"""

__version__ = "0.1.0"

from nfcsim.field import FieldSpec
from nfcsim.graph import NfcGraph, NodeRole, TopologyConfig, build_graph

__all__ = [
    "FieldSpec",
    "NfcGraph",
    "NodeRole",
    "TopologyConfig",
    "build_graph",
    "__version__",
]
