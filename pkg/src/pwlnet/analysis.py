"""Preconditions, decision regions and postconditions on top of a SymbolicRep."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .errors import DimMismatchError
from .geom2d import (
    Embedding,
    HalfspaceSet,
    PlanePolytope,
    contains_points,
    convex_hull_2d,
    split_arrays,
)
from .symbolic import (
    DEFAULT_MAX_PARTITIONS,
    LinearPartition,
    SymbolicRep,
    _canonical_items,
    _mixed,
    _refine,
    _tol_for,
    partition_map,
)

__all__ = [
    "LabeledRegion",
    "PostPolytope",
    "weakest_pre",
    "weakest_pre_partitions",
    "classify",
    "strongest_post",
    "post_contains",
    "preimage",
    "region_area_by_label",
]


@dataclass(frozen=True, eq=False)
class LabeledRegion:
    poly: PlanePolytope
    label: int
    post: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class PostPolytope:
    """Image of one partition: the vertex images and, for 2D outputs, their hull.

    ``degenerate`` marks a 2D hull that collapsed to a segment or point.
    """

    vertices: np.ndarray
    hull_2d: Optional[PlanePolytope] = None
    degenerate: bool = False
    source: int = -1

    @property
    def hull_vertices(self) -> np.ndarray:
        if self.hull_2d is not None:
            return self.hull_2d.vertices
        return self.vertices


def _check_dim(rep: SymbolicRep, dim: int):
    if dim != rep.out_dim:
        raise DimMismatchError(f"constraint dimension {dim} != network output {rep.out_dim}")


def weakest_pre_partitions(rep: SymbolicRep, Y: HalfspaceSet) -> list[LinearPartition]:
    """Pieces of every partition whose image lies in ``Y``, with their vertex values."""
    _check_dim(rep, Y.dim)
    out = []
    for part in rep.partitions:
        verts, post = part.poly.vertices, part.post
        alive = True
        for a, b in zip(Y.A, Y.b):
            neg, _ = split_arrays(verts, post @ a - b, post)
            if neg is None:
                alive = False
                break
            verts, post = neg
        if alive:
            out.append((verts, post))
    emb = rep.embedding
    return [LinearPartition(PlanePolytope(emb, v), p) for v, p in _canonical_items(out)]


def weakest_pre(rep: SymbolicRep, Y: HalfspaceSet) -> list[PlanePolytope]:
    """Polygons whose union is exactly ``{x in X : f(x) in Y}``."""
    return [p.poly for p in weakest_pre_partitions(rep, Y)]


def classify(
    rep: SymbolicRep,
    num_classes: Optional[int] = None,
    max_partitions: int = DEFAULT_MAX_PARTITIONS,
) -> list[LabeledRegion]:
    """Refine partitions until the argmax output is constant on each one.

    Ties between outputs resolve to the lowest index.
    """
    m = rep.out_dim if num_classes is None else num_classes
    _check_dim(rep, m)

    def pick(item):
        post = item[1]
        tol = _tol_for(post)
        best = int(np.argmax(post.mean(axis=0)))
        diffs = post - post[:, [best]]
        if (diffs <= tol).all():
            return None
        mixed = _mixed(diffs, tol)
        if not mixed.any():
            return None
        strength = np.where(mixed, np.minimum(diffs.max(axis=0), -diffs.min(axis=0)), -np.inf)
        j = int(np.argmax(strength))
        return diffs[:, j], tol

    items = _refine(
        [(p.poly.vertices, p.post) for p in rep.partitions], pick, lambda it: it, max_partitions
    )
    emb = rep.embedding
    regions = []
    for v, post in _canonical_items(items):
        label = int(np.argmax(post.mean(axis=0)))
        regions.append(LabeledRegion(PlanePolytope(emb, v), label, post))
    return regions


def strongest_post(rep: SymbolicRep) -> list[PostPolytope]:
    """One image polytope per partition; their union is exactly ``f(X)``."""
    out = []
    two_d = rep.out_dim == 2
    for i, part in enumerate(rep.partitions):
        verts = part.post
        if two_d:
            hull, degenerate = convex_hull_2d(verts)
            poly = None if degenerate else PlanePolytope(Embedding.identity(), hull)
            out.append(PostPolytope(verts, poly, degenerate, i))
        else:
            out.append(PostPolytope(verts, None, False, i))
    return out


def _in_hull_lsq(vertices: np.ndarray, y: np.ndarray, tol: float) -> bool:
    A = np.vstack([vertices.T, np.ones(len(vertices))])
    rhs = np.append(y, 1.0)
    _, resid = nnls(A, rhs)
    return resid <= tol


def post_contains(posts: list[PostPolytope], y, tol: Optional[float] = None) -> bool:
    """Whether output point ``y`` lies in the union of the image polytopes."""
    y = np.asarray(y, dtype=np.float64)
    scale = 1.0 + float(np.abs(y).max())
    if tol is None:
        tol = 1e-6 * scale
    for post in posts:
        v = post.vertices
        if ((y < v.min(axis=0) - tol) | (y > v.max(axis=0) + tol)).any():
            continue
        if post.hull_2d is not None:
            if contains_points(post.hull_2d.vertices, y.reshape(1, 2), tol=tol)[0]:
                return True
            continue
        if _in_hull_lsq(v, y, tol):
            return True
    return False


def preimage(rep: SymbolicRep, i: int, y):
    """Least-squares plane point mapped to ``y`` by partition ``i``'s affine map.

    Returns ``(u, residual)``.
    """
    J, c = partition_map(rep, i)
    u, *_ = np.linalg.lstsq(J, np.asarray(y, dtype=np.float64) - c, rcond=None)
    residual = float(np.abs(J @ u + c - y).max())
    return u, residual


def region_area_by_label(regions: list[LabeledRegion], num_classes: int) -> np.ndarray:
    areas = np.zeros(num_classes)
    for r in regions:
        areas[r.label] += r.poly.area
    return areas
