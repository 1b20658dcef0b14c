"""Input coercion shared by the estimator wrappers."""

from __future__ import annotations

import json
import os

import numpy as np
from sklearn.utils.validation import check_array

from . import dnn
from .geom2d import HalfspaceSet, PlanePolytope, make_plane_polytope, polytope_from_json


def check_network(net, allow_masking: bool = False):
    """Accept a Network, its JSON dict, or a path to a JSON file."""
    if isinstance(net, dnn.Network):
        return net
    if isinstance(net, dnn.MaskingNetwork):
        if allow_masking:
            return net
        raise TypeError("a plain Network is required here")
    if isinstance(net, (str, os.PathLike)):
        return dnn.load_network(net)
    if isinstance(net, dict):
        return dnn.network_from_json(net)
    raise TypeError(f"cannot interpret {type(net).__name__} as a network")


def check_domain(X) -> PlanePolytope:
    """Accept a PlanePolytope, polytope JSON, or an array of ambient vertices."""
    if isinstance(X, PlanePolytope):
        return X
    if isinstance(X, dict):
        return polytope_from_json(X)
    if isinstance(X, (str, os.PathLike)):
        with open(X) as fh:
            return polytope_from_json(json.load(fh))
    pts = check_array(X, ensure_min_samples=3, ensure_min_features=2)
    return make_plane_polytope(pts)


def check_plane_points(U) -> np.ndarray:
    U = check_array(U, ensure_min_features=2)
    if U.shape[1] != 2:
        raise ValueError(f"expected plane coordinates with 2 columns, got {U.shape[1]}")
    return U


def check_halfspaces(Y, out_dim: int) -> HalfspaceSet:
    """Accept a HalfspaceSet, an argmax class index, or an (A, b) pair."""
    if isinstance(Y, HalfspaceSet):
        hs = Y
    elif isinstance(Y, (int, np.integer)):
        hs = HalfspaceSet.argmax_region(int(Y), out_dim)
    elif isinstance(Y, tuple) and len(Y) == 2:
        hs = HalfspaceSet(np.atleast_2d(Y[0]), np.atleast_1d(Y[1]))
    else:
        raise TypeError(f"cannot interpret {type(Y).__name__} as an output constraint")
    if hs.dim != out_dim and len(hs):
        raise ValueError(f"constraint has dimension {hs.dim}, network output is {out_dim}")
    return hs
