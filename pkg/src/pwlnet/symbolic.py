"""Exact piecewise-affine decomposition of a network over a 2D input polygon.

A :class:`SymbolicRep` is a list of convex polygons (in plane coordinates of
the input domain) together with the layer-output values at each polygon's
vertices. On every polygon the network prefix processed so far is affine, so
the vertex values determine it completely; :func:`partition_map` recovers the
explicit affine map when needed.

Layers are folded in one at a time. Affine layers only transform vertex
values. Piecewise-linear layers run a worklist: a polygon that straddles one
of the layer's switching hyperplanes is split along it and both halves are
re-queued; a polygon on one side of every hyperplane gets the layer's affine
piece applied to its vertex values.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dnn
from .errors import (
    DegeneratePartitionError,
    DimMismatchError,
    InvariantError,
    OutsideDomainError,
    PartitionCapExceeded,
    UnsupportedLayerError,
)
from .geom2d import (
    TOL,
    Embedding,
    PlanePolytope,
    contains_points,
    max_violation,
    polygon_area,
    split_arrays,
)

__all__ = [
    "DEFAULT_MAX_PARTITIONS",
    "LinearPartition",
    "SymbolicRep",
    "init_rep",
    "extend_affine",
    "extend_relu",
    "extend_hardtanh",
    "extend_maxpool",
    "extend_layer",
    "fhat",
    "fhat_masking",
    "locate",
    "locate_many",
    "partition_map",
    "evaluate",
    "dump",
]

DEFAULT_MAX_PARTITIONS = 2_000_000


@dataclass(frozen=True, eq=False)
class LinearPartition:
    """One polygon and the current layer's output at each of its vertices.

    ``act`` is only set for masking networks: it holds the activation-path
    values, while ``post`` holds the value path.
    """

    poly: PlanePolytope
    post: np.ndarray
    act: Optional[np.ndarray] = None

    @property
    def vertices(self) -> np.ndarray:
        return self.poly.vertices

    def __post_init__(self):
        post = np.asarray(self.post, dtype=np.float64)
        if post.ndim != 2 or post.shape[0] != len(self.poly):
            raise InvariantError("post values must align with polygon vertices")
        post.setflags(write=False)
        object.__setattr__(self, "post", post)


@dataclass(frozen=True, eq=False)
class SymbolicRep:
    domain: PlanePolytope
    partitions: tuple
    layer_cursor: int = 0
    masked: bool = False
    _maps: dict = field(default_factory=dict, repr=False)

    @property
    def embedding(self) -> Embedding:
        return self.domain.embedding

    @property
    def out_dim(self) -> int:
        return self.partitions[0].post.shape[1]

    def __len__(self) -> int:
        return len(self.partitions)

    def __iter__(self):
        return iter(self.partitions)

    def __getitem__(self, i) -> LinearPartition:
        return self.partitions[i]

    def total_area(self) -> float:
        return float(sum(p.poly.area for p in self.partitions))

    def evaluate(self, points) -> np.ndarray:
        return evaluate(self, points)


# construction


def init_rep(X: PlanePolytope) -> SymbolicRep:
    """Single partition carrying the identity map (through the embedding)."""
    post = X.embedding.embed(X.vertices)
    return SymbolicRep(X, (LinearPartition(X, post),), 0)


def init_masked_rep(X: PlanePolytope) -> SymbolicRep:
    post = X.embedding.embed(X.vertices)
    return SymbolicRep(X, (LinearPartition(X, post, post.copy()),), 0, masked=True)


def _canonical_items(items):
    """Rotate each polygon to start at its lexicographically smallest vertex
    and sort the polygons by vertex list."""
    out = []
    for item in items:
        v = item[0]
        start = int(np.lexsort((v[:, 1], v[:, 0]))[0])
        if start:
            item = tuple(np.roll(a, -start, axis=0) if a is not None else None for a in item)
        out.append(item)
    out.sort(key=lambda it: tuple(it[0].ravel().tolist()))
    return out


def _rebuild(rep: SymbolicRep, items, step: int = 1) -> SymbolicRep:
    emb = rep.embedding
    parts = []
    for item in _canonical_items(items):
        v, post = item[0], item[1]
        act = item[2] if len(item) > 2 else None
        parts.append(LinearPartition(PlanePolytope(emb, v), post, act))
    return SymbolicRep(rep.domain, tuple(parts), rep.layer_cursor + step, rep.masked)


def _items(rep: SymbolicRep):
    if rep.masked:
        return [(p.poly.vertices, p.post, p.act) for p in rep.partitions]
    return [(p.poly.vertices, p.post) for p in rep.partitions]


def _refine(items, pick: Callable, emit: Callable, cap: int):
    """FIFO worklist shared by every piecewise-linear extend step.

    ``pick(item)`` returns ``None`` when the polygon lies on one side of every
    switching hyperplane, else ``(values, tol)`` for one hyperplane to split
    along. ``emit(item)`` applies the affine piece for a settled polygon.
    Every per-vertex array in an item is interpolated through splits.
    """
    queue = deque(items)
    done = []
    while queue:
        item = queue.popleft()
        choice = pick(item)
        if choice is None:
            done.append(emit(item))
            continue
        values, tol = choice
        verts = item[0]
        attrs = np.hstack([a for a in item[1:]])
        widths = [a.shape[1] for a in item[1:]]
        for side in split_arrays(verts, values, attrs, tol=tol):
            if side is None:
                continue
            sv, sa = side
            cuts = np.cumsum(widths)[:-1]
            queue.append((sv, *np.split(sa, cuts, axis=1)))
        if len(queue) + len(done) > cap:
            raise PartitionCapExceeded(f"more than {cap} partitions")
    return done


def _mixed(vals: np.ndarray, tol: float) -> np.ndarray:
    """Columns of ``vals`` with vertices strictly on both sides of zero."""
    return (vals > tol).any(axis=0) & (vals < -tol).any(axis=0)


def _best_column(vals: np.ndarray, mixed: np.ndarray) -> int:
    # most balanced crossing: keeps interpolation ratios away from 0 and 1
    strength = np.minimum(vals.max(axis=0), -vals.min(axis=0))
    strength = np.where(mixed, strength, -np.inf)
    return int(np.argmax(strength))


def _tol_for(vals: np.ndarray, floor: float = 0.0) -> float:
    return TOL.split * max(float(np.abs(vals).max()) if vals.size else 0.0, floor)


def _relu_pick(act):
    tol = _tol_for(act)
    mixed = _mixed(act, tol)
    if not mixed.any():
        return None
    k = _best_column(act, mixed)
    return act[:, k], tol


def _relu_keep(act) -> np.ndarray:
    # a coordinate is zeroed iff every vertex value is <= tol
    return (act > _tol_for(act)).any(axis=0)


def _hardtanh_pick(act):
    tol = _tol_for(act, 1.0)
    hi = act - 1.0
    lo = act + 1.0
    m_hi = _mixed(hi, tol)
    m_lo = _mixed(lo, tol)
    if not (m_hi.any() or m_lo.any()):
        return None
    s_hi = np.where(m_hi, np.minimum(hi.max(axis=0), -hi.min(axis=0)), -np.inf)
    s_lo = np.where(m_lo, np.minimum(lo.max(axis=0), -lo.min(axis=0)), -np.inf)
    if s_hi.max() >= s_lo.max():
        return hi[:, int(np.argmax(s_hi))], tol
    return lo[:, int(np.argmax(s_lo))], tol


def _hardtanh_regions(act) -> np.ndarray:
    """-1 clamp low, +1 clamp high, 0 identity, per coordinate."""
    tol = _tol_for(act, 1.0)
    low = (act <= -1.0 + tol).all(axis=0)
    high = (act >= 1.0 - tol).all(axis=0)
    return np.where(low, -1, np.where(high, 1, 0))


def _apply_hardtanh(vals, regions) -> np.ndarray:
    return np.where(regions == 0, vals, regions.astype(np.float64))


def _maxpool_pick(groups):
    pairs = [(g[a], g[b]) for g in groups for a in range(len(g)) for b in range(a + 1, len(g))]
    if not pairs:
        return lambda item: None
    left = np.array([p[0] for p in pairs])
    right = np.array([p[1] for p in pairs])

    def pick(item):
        post = item[1]
        diffs = post[:, left] - post[:, right]
        tol = _tol_for(post)
        mixed = _mixed(diffs, tol)
        if not mixed.any():
            return None
        k = _best_column(diffs, mixed)
        return diffs[:, k], tol

    return pick


def _maxpool_winners(post, groups) -> list[int]:
    # post is affine over the polygon, so the vertex mean is the centroid value;
    # np.argmax breaks ties toward the lowest index
    mean = post.mean(axis=0)
    return [g[int(np.argmax(mean[list(g)]))] for g in groups]


# extend steps


def extend_affine(rep: SymbolicRep, W, b) -> SymbolicRep:
    """Apply ``y = W x + b`` to every vertex value."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.shape[1] != rep.out_dim:
        raise DimMismatchError(f"affine layer expects {W.shape[1]} inputs, rep has {rep.out_dim}")
    parts = tuple(
        LinearPartition(p.poly, p.post @ W.T + b, p.act) for p in rep.partitions
    )
    return SymbolicRep(rep.domain, parts, rep.layer_cursor + 1, rep.masked)


def _extend_masked_affine(rep: SymbolicRep, layer: dnn.MaskedDense) -> SymbolicRep:
    if layer.in_dim != rep.out_dim:
        raise DimMismatchError(f"affine layer expects {layer.in_dim} inputs, rep has {rep.out_dim}")
    parts = tuple(
        LinearPartition(p.poly, layer.theta_v(p.post), layer.theta_a(p.act))
        for p in rep.partitions
    )
    return SymbolicRep(rep.domain, parts, rep.layer_cursor + 1, True)


def extend_relu(rep: SymbolicRep, max_partitions: int = DEFAULT_MAX_PARTITIONS) -> SymbolicRep:
    """Split every partition until it lies in one orthant, then zero the
    non-positive coordinates."""
    if rep.masked:
        def pick(item):
            return _relu_pick(item[2])

        def emit(item):
            keep = _relu_keep(item[2])
            return item[0], item[1] * keep, item[2] * keep
    else:
        def pick(item):
            return _relu_pick(item[1])

        def emit(item):
            return item[0], item[1] * _relu_keep(item[1])

    return _rebuild(rep, _refine(_items(rep), pick, emit, max_partitions))


def extend_hardtanh(rep: SymbolicRep, max_partitions: int = DEFAULT_MAX_PARTITIONS) -> SymbolicRep:
    """Split on ``x = -1`` and ``x = 1`` per coordinate, then clamp."""
    if rep.masked:
        def pick(item):
            return _hardtanh_pick(item[2])

        def emit(item):
            regions = _hardtanh_regions(item[2])
            return item[0], _apply_hardtanh(item[1], regions), _apply_hardtanh(item[2], regions)
    else:
        def pick(item):
            return _hardtanh_pick(item[1])

        def emit(item):
            return item[0], _apply_hardtanh(item[1], _hardtanh_regions(item[1]))

    return _rebuild(rep, _refine(_items(rep), pick, emit, max_partitions))


def extend_maxpool(rep: SymbolicRep, groups, max_partitions: int = DEFAULT_MAX_PARTITIONS) -> SymbolicRep:
    """Split until each group's argmax is constant, then select the winners."""
    if rep.masked:
        raise UnsupportedLayerError("maxpool is not supported in masking networks")
    groups = [tuple(g) for g in groups]
    width = sum(len(g) for g in groups)
    if width != rep.out_dim:
        raise DimMismatchError(f"maxpool covers {width} inputs, rep has {rep.out_dim}")

    def emit(item):
        return item[0], item[1][:, _maxpool_winners(item[1], groups)]

    return _rebuild(rep, _refine(_items(rep), _maxpool_pick(groups), emit, max_partitions))


def extend_layer(rep: SymbolicRep, layer, max_partitions: int = DEFAULT_MAX_PARTITIONS) -> SymbolicRep:
    if isinstance(layer, dnn.DenseLayer):
        return extend_affine(rep, layer.weights, layer.bias)
    if isinstance(layer, dnn.MaskedDense):
        return _extend_masked_affine(rep, layer)
    if isinstance(layer, dnn.ReluLayer):
        return extend_relu(rep, max_partitions)
    if isinstance(layer, dnn.HardTanhLayer):
        return extend_hardtanh(rep, max_partitions)
    if isinstance(layer, dnn.MaxPoolLayer):
        return extend_maxpool(rep, layer.groups, max_partitions)
    raise UnsupportedLayerError(f"no exact extend step for {type(layer).__name__}")


def fhat(net, X: PlanePolytope, max_partitions: int = DEFAULT_MAX_PARTITIONS) -> SymbolicRep:
    """Decompose ``net`` over the input polygon ``X``.

    A :class:`~pwlnet.dnn.MaskingNetwork` is decomposed with
    :func:`fhat_masking`.
    """
    if isinstance(net, dnn.MaskingNetwork):
        return fhat_masking(net, X, max_partitions)
    if X.embedding.n != net.input_dim:
        raise DimMismatchError(f"domain lives in R^{X.embedding.n}, network expects {net.input_dim}")
    rep = init_rep(X)
    for layer in net.layers:
        rep = extend_layer(rep, layer, max_partitions)
    return rep


def fhat_masking(mnet, X: PlanePolytope, max_partitions: int = DEFAULT_MAX_PARTITIONS) -> SymbolicRep:
    """Decompose a masking network: polygons follow the activation path, vertex
    values follow the value path (``post``), activation values kept in ``act``."""
    if X.embedding.n != mnet.input_dim:
        raise DimMismatchError(f"domain lives in R^{X.embedding.n}, network expects {mnet.input_dim}")
    rep = init_masked_rep(X)
    for layer in mnet.layers:
        rep = extend_layer(rep, layer, max_partitions)
    return rep


# queries


def partition_map(rep: SymbolicRep, i: int, which: str = "post"):
    """Affine map ``u -> J @ u + c`` (plane coordinates) of partition ``i``."""
    cached = rep._maps.get((i, which))
    if cached is not None:
        return cached
    part = rep.partitions[i]
    v = part.poly.vertices
    vals = part.post if which == "post" else part.act
    if len(v) < 3 or polygon_area(v) <= TOL.geo * TOL.geo:
        raise DegeneratePartitionError(f"partition {i} has no area")
    A = np.hstack([v, np.ones((len(v), 1))])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = float(np.abs(A @ coef - vals).max())
    scale = 1.0 + float(np.abs(vals).max())
    if resid > 1e-6 * scale:
        raise InvariantError(f"partition {i} vertex values are not affine (residual {resid:.3g})")
    J = coef[:2].T
    c = coef[2]
    rep._maps[(i, which)] = (J, c)
    return J, c


def locate_many(rep: SymbolicRep, points) -> np.ndarray:
    """Partition index for each plane point; boundary ties go to the lowest index."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    result = np.full(len(pts), -1, dtype=np.int64)
    todo = np.arange(len(pts))
    for i, part in enumerate(rep.partitions):
        if not len(todo):
            break
        v = part.poly.vertices
        lo = v.min(axis=0) - TOL.geo
        hi = v.max(axis=0) + TOL.geo
        cand = todo[((pts[todo] >= lo) & (pts[todo] <= hi)).all(axis=1)]
        if not len(cand):
            continue
        hit = cand[contains_points(v, pts[cand])]
        if len(hit):
            result[hit] = i
            todo = np.setdiff1d(todo, hit, assume_unique=True)
    if len(todo):
        inside = contains_points(rep.domain.vertices, pts[todo])
        if not inside.all():
            bad = pts[todo[~inside][0]]
            raise OutsideDomainError(f"point {bad.tolist()} lies outside the domain")
        # numerically between partitions (dropped sliver): nearest polygon
        viol = np.stack([max_violation(p.poly.vertices, pts[todo]) for p in rep.partitions])
        result[todo] = np.argmin(viol, axis=0)
    return result


def locate(rep: SymbolicRep, u) -> int:
    return int(locate_many(rep, np.asarray(u, dtype=np.float64).reshape(1, 2))[0])


def evaluate(rep: SymbolicRep, points) -> np.ndarray:
    """Interpolated output of the representation at plane points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    idx = locate_many(rep, pts)
    out = np.empty((len(pts), rep.out_dim))
    for i in np.unique(idx):
        J, c = partition_map(rep, int(i))
        sel = idx == i
        out[sel] = pts[sel] @ J.T + c
    return out


def dump(rep: SymbolicRep) -> list:
    return [
        {"vertices_2d": p.poly.vertices.tolist(), "post_vertices": p.post.tolist()}
        for p in rep.partitions
    ]
