"""Values-only repair of masking networks against polytope specifications.

Only value parameters change, so the activation pattern (and therefore the
partitioning of every input polytope) stays fixed. A polytope constraint then
holds on a whole input polygon iff it holds at every vertex of every
partition of that polygon, each evaluated with its own partition's affine
map. Those vertices are the key points.

Perturbing a single value weight by ``delta`` moves every key point's output
along a line, so each key point is satisfied on an interval of ``delta``.
The best single-weight change maximizes how many intervals it stabs; the
greedy loop repeats that choice weight by weight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .dnn import MaskingNetwork, WeightId, apply_patch, delta_response, eval_masking
from .errors import ActivationChangedError, EmptyIntervalError, InvalidWeightIdError
from .geom2d import TOL, HalfspaceSet, PlanePolytope, polytope_from_json, satisfaction_tol
from .symbolic import DEFAULT_MAX_PARTITIONS, fhat, fhat_masking

__all__ = [
    "PatchSpec",
    "KeyPoint",
    "DeltaInterval",
    "PatchResult",
    "build_key_points",
    "count_satisfied",
    "weight_intervals",
    "sweep_max",
    "choose_delta",
    "greedy_patch",
    "verify_patch",
    "load_patch_spec",
]


@dataclass(frozen=True, eq=False)
class PatchSpec:
    """Pairs of (input polygon, output halfspace set)."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((X, Y) for X, Y in self.pairs)
        for X, Y in pairs:
            if not isinstance(X, PlanePolytope) or not isinstance(Y, HalfspaceSet):
                raise TypeError("spec pairs must be (PlanePolytope, HalfspaceSet)")
            if len(Y) == 0:
                raise ValueError("each output set needs at least one halfspace")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True, eq=False)
class KeyPoint:
    """A partition vertex in input space plus the activation pattern of the
    partition it belongs to."""

    x: np.ndarray
    spec_index: int
    masks: tuple = ()

    @property
    def pattern(self) -> bytes:
        return b"".join(np.asarray(m, dtype=np.int8).tobytes() for m in self.masks)


@dataclass(frozen=True)
class DeltaInterval:
    lo: float = -math.inf
    hi: float = math.inf
    empty: bool = False

    def __post_init__(self):
        if not self.empty and self.lo > self.hi:
            object.__setattr__(self, "empty", True)

    @classmethod
    def full(cls) -> "DeltaInterval":
        return cls()

    @classmethod
    def none(cls) -> "DeltaInterval":
        return cls(math.inf, -math.inf, True)

    @property
    def is_full(self) -> bool:
        return not self.empty and self.lo == -math.inf and self.hi == math.inf

    def __contains__(self, delta: float) -> bool:
        return not self.empty and self.lo <= delta <= self.hi

    def intersect(self, other: "DeltaInterval") -> "DeltaInterval":
        if self.empty or other.empty:
            return DeltaInterval.none()
        return DeltaInterval(max(self.lo, other.lo), min(self.hi, other.hi))


@dataclass
class PatchResult:
    applied: list = field(default_factory=list)
    history: list = field(default_factory=list)
    network: Optional[MaskingNetwork] = None
    key_points: list = field(default_factory=list)

    @property
    def satisfied_history(self) -> list[int]:
        return [h["satisfied"] for h in self.history]


# key points


def _partition_vertices(mnet: MaskingNetwork, X: PlanePolytope, rep):
    """Yield (ambient vertex, masks, value-path output) per partition vertex,
    deduplicated per activation pattern."""
    emb = X.embedding
    kept: dict[bytes, list] = {}
    for part in rep.partitions:
        masks = tuple(eval_masking(mnet, emb.embed(part.poly.centroid))[1])
        key = b"".join(m.tobytes() for m in masks)
        seen = kept.setdefault(key, [])
        for u, y in zip(part.poly.vertices, part.post):
            if any(np.hypot(*(u - s)) <= TOL.geo for s in seen):
                continue
            seen.append(u)
            yield emb.embed(u), masks, y


def build_key_points(
    mnet: MaskingNetwork, spec: PatchSpec, max_partitions: int = DEFAULT_MAX_PARTITIONS
) -> list[KeyPoint]:
    act_net = mnet.activation_network()
    out = []
    for i, (X, _) in enumerate(spec):
        rep = fhat(act_net, X, max_partitions)
        for x, masks, _ in _partition_vertices(mnet, X, rep):
            out.append(KeyPoint(x, i, masks))
    return out


def key_point_outputs(mnet: MaskingNetwork, key_points: Sequence[KeyPoint]) -> np.ndarray:
    return np.array([eval_masking(mnet, kp.x, kp.masks)[0] for kp in key_points])


def count_satisfied(mnet: MaskingNetwork, key_points: Sequence[KeyPoint], spec: PatchSpec) -> int:
    if not key_points:
        return 0
    ys = key_point_outputs(mnet, key_points)
    ok = 0
    for kp, y in zip(key_points, ys):
        ok += bool(spec.pairs[kp.spec_index][1].satisfied(y)[0])
    return ok


# intervals


def weight_intervals(
    mnet: MaskingNetwork, key_points: Sequence[KeyPoint], spec: PatchSpec, w: WeightId
) -> list[DeltaInterval]:
    """Feasible ``delta`` range for each key point when only ``w`` changes."""
    out = []
    for kp in key_points:
        Y = spec.pairs[kp.spec_index][1]
        y0, g = delta_response(mnet, kp.x, w, kp.masks)
        slack = satisfaction_tol(Y, y0)[0]
        iv = DeltaInterval.full()
        for a, b, tol in zip(Y.A, Y.b, slack):
            ag = float(a @ g)
            r = float(b - a @ y0)
            if abs(ag) <= TOL.split * float(np.abs(a).sum() * max(np.abs(g).max(), 1.0)):
                if r < -tol:
                    iv = DeltaInterval.none()
            elif ag > 0:
                iv = iv.intersect(DeltaInterval(-math.inf, r / ag))
            else:
                iv = iv.intersect(DeltaInterval(r / ag, math.inf))
            if iv.empty:
                break
        out.append(iv)
    return out


def sweep_max(intervals: Iterable[DeltaInterval]) -> tuple[DeltaInterval, int]:
    """Closed interval stabbed by the most input intervals, and that count.

    Sort endpoints (starts before ends at equal coordinates) and sweep once.
    """
    full = 0
    events = []
    for iv in intervals:
        if iv.empty:
            continue
        if iv.is_full:
            full += 1
            continue
        events.append((iv.lo, 0))
        events.append((iv.hi, 1))
    if not events:
        return DeltaInterval.full(), full
    events.sort()
    cur = best = 0
    best_lo, best_hi = -math.inf, math.inf
    open_best = False
    for x, kind in events:
        if kind == 0:
            cur += 1
            if cur > best:
                best, best_lo, open_best = cur, x, True
        else:
            if open_best:
                best_hi, open_best = x, False
            cur -= 1
    return DeltaInterval(best_lo, best_hi), best + full


def choose_delta(best: DeltaInterval) -> float:
    """Smallest-magnitude point of the interval."""
    if best.empty:
        raise EmptyIntervalError("no feasible delta")
    if best.lo <= 0.0 <= best.hi:
        return 0.0
    return best.lo if best.lo > 0 else best.hi


# greedy repair


def _record(iteration, w, delta, satisfied, total):
    return {
        "iteration": iteration,
        "weight_id": "" if w is None else str(w),
        "delta": float(delta),
        "satisfied": int(satisfied),
        "total": int(total),
        "percent": 100.0 * satisfied / total if total else 100.0,
    }


def greedy_patch(
    mnet: MaskingNetwork,
    spec: PatchSpec,
    candidates: Sequence[WeightId],
    iterations: int = 10,
    key_points: Optional[list[KeyPoint]] = None,
    max_partitions: int = DEFAULT_MAX_PARTITIONS,
) -> PatchResult:
    """Repeatedly apply the single-weight change that satisfies the most key points.

    Ties prefer the smaller ``|delta|``, then the lower weight id. Stops when
    everything is satisfied or no change strictly improves the count.
    """
    candidates = sorted(set(candidates), key=WeightId.sort_key)
    if not candidates:
        raise InvalidWeightIdError("no candidate weights")
    if key_points is None:
        key_points = build_key_points(mnet, spec, max_partitions)
    total = len(key_points)
    current = count_satisfied(mnet, key_points, spec)
    result = PatchResult(history=[_record(0, None, 0.0, current, total)], key_points=key_points)
    net = mnet
    for it in range(1, iterations + 1):
        if current == total:
            break
        choice = None
        for w in candidates:
            best, count = sweep_max(weight_intervals(net, key_points, spec, w))
            if count <= current:
                continue
            delta = choose_delta(best)
            key = (-count, abs(delta), w.sort_key())
            if choice is None or key < choice[0]:
                choice = (key, w, delta)
        if choice is None:
            break
        _, w, delta = choice
        net = apply_patch(net, w, delta)
        current = count_satisfied(net, key_points, spec)
        result.applied.append((w, delta))
        result.history.append(_record(it, w, delta, current, total))
    result.network = net
    return result


def verify_patch(
    mnet_patched: MaskingNetwork,
    spec: PatchSpec,
    original: Optional[MaskingNetwork] = None,
    max_partitions: int = DEFAULT_MAX_PARTITIONS,
) -> dict:
    """Recompute each input polygon's decomposition on the patched network and
    check every partition vertex against its output set."""
    if original is not None and not original.same_activation(mnet_patched):
        raise ActivationChangedError("activation parameters differ from the original network")
    pairs = []
    for i, (X, Y) in enumerate(spec):
        rep = fhat_masking(mnet_patched, X, max_partitions)
        sat = viol = 0
        for _, _, y in _partition_vertices(mnet_patched, X, rep):
            if Y.satisfied(y)[0]:
                sat += 1
            else:
                viol += 1
        pairs.append({"index": i, "satisfied": sat, "violated": viol, "total": sat + viol})
    satisfied = sum(p["satisfied"] for p in pairs)
    total = sum(p["total"] for p in pairs)
    return {
        "pairs": pairs,
        "satisfied": satisfied,
        "total": total,
        "all_satisfied": satisfied == total,
    }


# spec files


def halfspaces_from_json(obj, out_dim: Optional[int] = None) -> HalfspaceSet:
    if isinstance(obj, dict) and "argmax_class" in obj:
        m = int(obj.get("num_classes", out_dim or 0))
        return HalfspaceSet.argmax_region(int(obj["argmax_class"]), m, float(obj.get("margin", 0.0)))
    rows = obj["halfspaces"] if isinstance(obj, dict) else obj
    A = np.array([r["a"] for r in rows], dtype=np.float64)
    b = np.array([r["b"] for r in rows], dtype=np.float64)
    return HalfspaceSet(A, b)


def patch_spec_from_json(obj, out_dim: Optional[int] = None) -> PatchSpec:
    items = obj["pairs"] if isinstance(obj, dict) else obj
    pairs = []
    for item in items:
        X = polytope_from_json(item["input_polytope"])
        Y = halfspaces_from_json(item["output_halfspaces"], out_dim)
        pairs.append((X, Y))
    return PatchSpec(pairs)


def load_patch_spec(path, out_dim: Optional[int] = None) -> PatchSpec:
    with open(path) as fh:
        return patch_spec_from_json(json.load(fh), out_dim)
