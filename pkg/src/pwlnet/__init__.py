"""Exact analysis of piecewise-linear networks over 2D input polygons."""

from .analysis import classify, strongest_post, weakest_pre
from .bmc import AffineDynamics, BMCProblem, Box, run_bmc
from .dnn import (
    DenseLayer,
    HardTanhLayer,
    MaskingNetwork,
    MaxPoolLayer,
    Network,
    ReluLayer,
    WeightId,
    load_network,
    to_masking,
)
from .estimators import DecisionRegions, NetworkPatcher, PiecewiseLinearDecomposition, WeakestPrecondition
from .geom2d import HalfspaceSet, PlanePolytope, box_polygon, make_plane_polytope
from .patch import PatchSpec, build_key_points, greedy_patch, sweep_max, verify_patch
from .symbolic import SymbolicRep, fhat

__version__ = "0.1.0"

__all__ = [
    "AffineDynamics",
    "BMCProblem",
    "Box",
    "DecisionRegions",
    "DenseLayer",
    "HalfspaceSet",
    "HardTanhLayer",
    "MaskingNetwork",
    "MaxPoolLayer",
    "Network",
    "NetworkPatcher",
    "PatchSpec",
    "PiecewiseLinearDecomposition",
    "PlanePolytope",
    "ReluLayer",
    "SymbolicRep",
    "WeakestPrecondition",
    "WeightId",
    "box_polygon",
    "build_key_points",
    "classify",
    "fhat",
    "greedy_patch",
    "load_network",
    "make_plane_polytope",
    "run_bmc",
    "strongest_post",
    "sweep_max",
    "to_masking",
    "verify_patch",
    "weakest_pre",
]
