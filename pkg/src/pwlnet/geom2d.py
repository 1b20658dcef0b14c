"""Convex polygons living on a 2D plane inside R^n.

All polygon arithmetic is done in plane coordinates; the :class:`Embedding`
carried next to each polygon maps plane coordinates back to the ambient
space. Polygons are stored in V-representation (counterclockwise vertex
lists).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateError,
    LengthMismatchError,
    NonPlanarError,
    TooFewVerticesError,
)

__all__ = [
    "TOL",
    "Tolerances",
    "set_tolerances",
    "Embedding",
    "PlanePolytope",
    "HalfspaceSet",
    "make_plane_polytope",
    "plane_polygon",
    "box_polygon",
    "split_by_values",
    "split_arrays",
    "polygon_area",
    "area",
    "centroid",
    "contains",
    "contains_points",
    "convex_hull_2d",
    "polytope_to_json",
    "polytope_from_json",
]


@dataclass
class Tolerances:
    """Global numeric tolerances.

    ``geo`` is used for geometric predicates (planarity, containment,
    collinearity, sliver areas). ``split`` is the sign-test threshold for
    split values, relative to the largest magnitude being tested.
    """

    geo: float = 1e-7
    split: float = 1e-10


TOL = Tolerances()


def set_tolerances(geo: Optional[float] = None, split: Optional[float] = None) -> Tolerances:
    """Update the global tolerances in place and return them."""
    if geo is not None:
        if not geo > 0:
            raise ValueError("geo tolerance must be positive")
        TOL.geo = float(geo)
    if split is not None:
        if not split >= 0:
            raise ValueError("split tolerance must be non-negative")
        TOL.split = float(split)
    return TOL


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Embedding:
    """Affine injection ``u -> origin + u[0] * basis[0] + u[1] * basis[1]``."""

    origin: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        origin = _frozen(self.origin)
        basis = _frozen(self.basis)
        if origin.ndim != 1 or basis.shape != (2, origin.shape[0]):
            raise ValueError(f"basis must have shape (2, {origin.shape[0]}), got {basis.shape}")
        gram = basis @ basis.T
        if not np.allclose(gram, np.eye(2), atol=TOL.geo):
            raise ValueError("embedding basis must be orthonormal")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "basis", basis)

    @property
    def n(self) -> int:
        return self.origin.shape[0]

    @classmethod
    def identity(cls) -> "Embedding":
        return cls(np.zeros(2), np.eye(2))

    @property
    def is_identity(self) -> bool:
        return self.n == 2 and np.array_equal(self.basis, np.eye(2)) and not self.origin.any()

    def embed(self, u) -> np.ndarray:
        """Map plane coordinates, shape (2,) or (k, 2), into R^n."""
        u = np.asarray(u, dtype=np.float64)
        return self.origin + u @ self.basis

    def project(self, x) -> np.ndarray:
        """Orthogonal projection of ambient points onto plane coordinates."""
        x = np.asarray(x, dtype=np.float64)
        return (x - self.origin) @ self.basis.T

    def same_as(self, other: "Embedding") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.basis, other.basis)
        )


@dataclass(frozen=True, eq=False)
class PlanePolytope:
    """Convex polygon in plane coordinates plus the embedding of its plane.

    ``vertices`` is a (k, 2) array in counterclockwise order. The constructor
    does not re-validate convexity (splits produce thousands of these); call
    :meth:`validate` when the input is untrusted.
    """

    embedding: Embedding
    vertices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices).reshape(-1, 2))

    def __len__(self) -> int:
        return self.vertices.shape[0]

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @property
    def ambient_vertices(self) -> np.ndarray:
        return self.embedding.embed(self.vertices)

    def contains(self, u) -> bool:
        return bool(contains_points(self.vertices, np.asarray(u, dtype=np.float64).reshape(1, 2))[0])

    def with_vertices(self, vertices) -> "PlanePolytope":
        return PlanePolytope(self.embedding, vertices)

    def validate(self) -> "PlanePolytope":
        v = self.vertices
        if len(v) < 3:
            raise TooFewVerticesError(f"polygon has {len(v)} vertices")
        if polygon_area(v) <= TOL.geo:
            raise DegenerateError("polygon area is not positive")
        edges = np.roll(v, -1, axis=0) - v
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if (cross < -TOL.geo).any():
            raise DegenerateError("polygon is not convex and counterclockwise")
        return self


@dataclass(frozen=True, eq=False)
class HalfspaceSet:
    """Conjunction of closed halfspaces ``A @ y <= b``."""

    A: np.ndarray
    b: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        A = _frozen(self.A)
        b = _frozen(self.b).reshape(-1)
        if A.ndim == 1:
            A = _frozen(A.reshape(1, -1) if A.size else np.zeros((0, 0)))
        if A.shape[0] != b.shape[0]:
            raise LengthMismatchError(f"{A.shape[0]} normals but {b.shape[0]} offsets")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("halfspaces must be finite")
        if A.shape[0] and (np.abs(A).max(axis=1) == 0).any():
            raise ValueError("halfspace normal is all zero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def everything(cls, dim: int) -> "HalfspaceSet":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def argmax_region(cls, label: int, num_classes: int, margin: float = 0.0) -> "HalfspaceSet":
        """Outputs whose coordinate ``label`` beats every other one by ``margin``."""
        if not 0 <= label < num_classes:
            raise ValueError(f"label {label} out of range for {num_classes} classes")
        rows = []
        for j in range(num_classes):
            if j == label:
                continue
            a = np.zeros(num_classes)
            a[j] = 1.0
            a[label] = -1.0
            rows.append(a)
        A = np.array(rows).reshape(-1, num_classes)
        return cls(A, np.full(len(rows), -float(margin)))

    def __len__(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def satisfied(self, y, tol: Optional[float] = None) -> np.ndarray:
        """Boolean mask of which outputs (shape (d,) or (k, d)) lie in the set."""
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if len(self) == 0:
            return np.ones(y.shape[0], dtype=bool)
        lhs = y @ self.A.T
        if tol is None:
            tol = satisfaction_tol(self, y)
        return (lhs <= self.b + tol).all(axis=1)

    def to_json(self) -> list:
        return [{"a": a.tolist(), "b": float(b)} for a, b in zip(self.A, self.b)]


def satisfaction_tol(Y: HalfspaceSet, y: np.ndarray) -> np.ndarray:
    """Per-(point, row) slack used when checking ``a.y <= b`` in floating point."""
    y = np.atleast_2d(y)
    scale = 1.0 + np.abs(Y.b)[None, :] + np.abs(y) @ np.abs(Y.A).T
    return 1e-9 * scale


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area, positive for counterclockwise vertex order."""
    v = vertices
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area(poly: PlanePolytope) -> float:
    return poly.area


def centroid(poly: PlanePolytope) -> np.ndarray:
    """Vertex mean; always interior for a convex polygon."""
    return poly.centroid


def contains(poly: PlanePolytope, u) -> bool:
    """Closed containment test: boundary points count as inside."""
    return poly.contains(u)


def contains_points(vertices: np.ndarray, points: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Vectorized closed containment of (m, 2) points in a convex CCW polygon."""
    if tol is None:
        tol = TOL.geo
    v = vertices
    e = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    lengths[lengths == 0] = 1.0
    d = points[:, None, :] - v[None, :, :]
    # signed distance to each edge line, positive on the inner side
    dist = (e[None, :, 0] * d[..., 1] - e[None, :, 1] * d[..., 0]) / lengths[None, :]
    return (dist >= -tol).all(axis=1)


def max_violation(vertices: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Largest outward edge distance of each point (<= 0 means inside)."""
    v = vertices
    e = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    lengths[lengths == 0] = 1.0
    d = points[:, None, :] - v[None, :, :]
    dist = (e[None, :, 0] * d[..., 1] - e[None, :, 1] * d[..., 0]) / lengths[None, :]
    return -dist.min(axis=1)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> tuple[np.ndarray, bool]:
    """Counterclockwise convex hull via Andrew's monotone chain.

    Collinear boundary points are dropped. Returns ``(vertices, degenerate)``
    where a degenerate hull (single point or segment) has 1 or 2 vertices.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("convex hull of no points")
    extent = float(np.abs(pts - pts[0]).max()) if len(pts) > 1 else 0.0
    tol = TOL.geo * max(1.0, extent)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                ob = np.hypot(p[0] - o[0], p[1] - o[1])
                if _cross(o, a, p) <= tol * max(ob, tol):
                    out.pop()
                else:
                    break
            if out and np.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) <= tol:
                continue
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        far = pts[-1]
        if np.hypot(*(far - pts[0])) <= tol:
            return _frozen(pts[:1]), True
        return _frozen(np.array([pts[0], far])), True
    hull = np.array(hull)
    if polygon_area(hull) <= tol * max(extent, tol):
        ends = np.array([pts[0], pts[-1]])
        return _frozen(ends), True
    return _frozen(hull), False


def make_plane_polytope(ambient_vertices) -> PlanePolytope:
    """Build a polygon from points in R^n that span a 2D plane.

    The plane basis comes from Gram-Schmidt on the first two independent
    edge vectors; the result holds the convex hull of the input points in
    counterclockwise plane coordinates.
    """
    pts = np.asarray(ambient_vertices, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise TooFewVerticesError("need at least 3 vertices")
    if pts.shape[1] < 2:
        raise NonPlanarError("ambient dimension must be at least 2")
    if not np.isfinite(pts).all():
        raise ValueError("vertices must be finite")
    origin = pts[0]
    scale = max(1.0, float(np.abs(pts - origin).max()))
    tol = TOL.geo * scale
    edges = np.roll(pts, -1, axis=0) - pts
    e1 = None
    e2 = None
    for e in edges:
        if e1 is None:
            if np.linalg.norm(e) > tol:
                e1 = e / np.linalg.norm(e)
            continue
        r = e - (e @ e1) * e1
        if np.linalg.norm(r) > tol:
            e2 = r / np.linalg.norm(r)
            break
    if e1 is None or e2 is None:
        raise DegenerateError("vertices are collinear")
    basis = np.vstack([e1, e2])
    u = (pts - origin) @ basis.T
    resid = (pts - origin) - u @ basis
    if np.linalg.norm(resid, axis=1).max() > tol:
        raise NonPlanarError("vertices do not lie on a common plane")
    hull, degenerate = convex_hull_2d(u)
    if degenerate or polygon_area(hull) <= TOL.geo:
        raise DegenerateError("polygon encloses no area")
    return PlanePolytope(Embedding(origin, basis), hull)


def plane_polygon(vertices_2d, embedding: Optional[Embedding] = None) -> PlanePolytope:
    """Polygon from plane coordinates (reordered counterclockwise)."""
    hull, degenerate = convex_hull_2d(vertices_2d)
    if degenerate or polygon_area(hull) <= TOL.geo:
        raise DegenerateError("polygon encloses no area")
    return PlanePolytope(embedding or Embedding.identity(), hull)


def box_polygon(lo: Sequence[float], hi: Sequence[float]) -> PlanePolytope:
    """Axis-aligned rectangle in R^2 with the identity embedding."""
    (x0, y0), (x1, y1) = lo, hi
    if not (x1 > x0 and y1 > y0):
        raise DegenerateError("box must have positive extent")
    return PlanePolytope(Embedding.identity(), [[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def split_arrays(
    vertices: np.ndarray,
    values: np.ndarray,
    attrs: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    drop_area: Optional[float] = None,
):
    """Split a convex polygon by the zero set of an affine scalar field.

    ``values`` are the field's values at the vertices. ``attrs`` are optional
    per-vertex vectors (e.g. layer outputs) interpolated alongside the new
    crossing points. Returns ``(neg, pos)`` where each side is ``None`` or a
    ``(vertices, attrs)`` tuple. Vertices whose value is within ``tol`` of
    zero go to both sides; sides whose area is at most ``drop_area`` are
    dropped.
    """
    values = np.asarray(values, dtype=np.float64)
    k = len(vertices)
    if values.shape != (k,):
        raise LengthMismatchError(f"{values.shape[0] if values.ndim else 1} values for {k} vertices")
    if tol is None:
        tol = TOL.split * (float(np.abs(values).max()) if k else 0.0)
    pos_mask = values > tol
    neg_mask = values < -tol
    whole = (vertices, attrs)
    if not pos_mask.any():
        return whole, None
    if not neg_mask.any():
        return None, whole
    sgn = pos_mask.astype(np.int8) - neg_mask.astype(np.int8)
    nv, pv, na, pa = [], [], [], []
    for i in range(k):
        j = i + 1 if i + 1 < k else 0
        si = sgn[i]
        if si <= 0:
            nv.append(vertices[i])
            if attrs is not None:
                na.append(attrs[i])
        if si >= 0:
            pv.append(vertices[i])
            if attrs is not None:
                pa.append(attrs[i])
        if si * sgn[j] < 0:
            t = values[i] / (values[i] - values[j])
            p = vertices[i] + t * (vertices[j] - vertices[i])
            nv.append(p)
            pv.append(p)
            if attrs is not None:
                a = attrs[i] + t * (attrs[j] - attrs[i])
                na.append(a)
                pa.append(a)
    nv = np.array(nv)
    pv = np.array(pv)
    na = np.array(na) if attrs is not None else None
    pa = np.array(pa) if attrs is not None else None
    if drop_area is None:
        drop_area = TOL.geo * polygon_area(vertices)
    neg = (nv, na) if polygon_area(nv) > drop_area else None
    pos = (pv, pa) if polygon_area(pv) > drop_area else None
    return neg, pos


def split_by_values(poly: PlanePolytope, values) -> tuple[Optional[PlanePolytope], Optional[PlanePolytope]]:
    """Split ``poly`` into the parts where an affine field is <= 0 and >= 0."""
    neg, pos = split_arrays(poly.vertices, values)
    return (
        poly.with_vertices(neg[0]) if neg is not None else None,
        poly.with_vertices(pos[0]) if pos is not None else None,
    )


def polytope_to_json(poly: PlanePolytope) -> dict:
    emb = poly.embedding
    return {
        "ambient_dim": emb.n,
        "origin": emb.origin.tolist(),
        "basis": emb.basis.tolist(),
        "vertices_2d": poly.vertices.tolist(),
    }


def polytope_from_json(obj) -> PlanePolytope:
    """Read either the embedded schema or ``{"vertices": [[...], ...]}`` ambient points."""
    if isinstance(obj, list):
        return make_plane_polytope(obj)
    if "vertices_2d" in obj:
        emb = Embedding(obj["origin"], obj["basis"])
        if len(obj["origin"]) != obj.get("ambient_dim", len(obj["origin"])):
            raise ValueError("ambient_dim does not match origin")
        return PlanePolytope(emb, obj["vertices_2d"]).validate()
    if "vertices" in obj:
        return make_plane_polytope(obj["vertices"])
    if "box" in obj:
        lo, hi = obj["box"]
        return box_polygon(lo, hi)
    raise ValueError("unrecognised polytope JSON")
