"""Bounded model checking of a 2D-state neural controller in a closed loop.

The loop is ``x' = A x + B f(x) + c``. On every partition of the
controller's decomposition the transition is affine, so the image of a
frontier polygon is the union of the hulls of its transformed partition
vertices: the reachable sets computed here are exact, not over-approximated.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import PostPolytope
from .dnn import Network
from .errors import DegenerateFrontierError, DimMismatchError, PartitionCapExceeded
from .geom2d import Embedding, PlanePolytope, box_polygon, convex_hull_2d
from .symbolic import DEFAULT_MAX_PARTITIONS, fhat

__all__ = [
    "AffineDynamics",
    "Box",
    "BMCProblem",
    "BMCResult",
    "transition",
    "post_step",
    "run_bmc",
]

log = logging.getLogger(__name__)

DEFAULT_MAX_FRONTIER = 100_000


@dataclass(frozen=True, eq=False)
class AffineDynamics:
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        if B.ndim == 1:
            B = B.reshape(2, -1)
        if A.shape != (2, 2) or B.shape[0] != 2 or c.shape != (2,):
            raise DimMismatchError("dynamics need A: 2x2, B: 2xm, c: 2")
        if not (np.isfinite(A).all() and np.isfinite(B).all() and np.isfinite(c).all()):
            raise ValueError("dynamics must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)

    def __call__(self, x, u):
        return x @ self.A.T + u @ self.B.T + self.c


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 2 or len(hi) != 2 or not all(h > l for l, h in zip(lo, hi)):
            raise ValueError("box must be 2D with positive extent")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((pts >= np.array(self.lo) - tol) & (pts <= np.array(self.hi) + tol)).all(axis=1)

    def violation(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        below = np.array(self.lo) - pts
        above = pts - np.array(self.hi)
        return np.maximum(below, above).max(axis=1)

    def polygon(self) -> PlanePolytope:
        return box_polygon(self.lo, self.hi)

    def corners(self) -> np.ndarray:
        (x0, y0), (x1, y1) = self.lo, self.hi
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def contains_box(self, other: "Box") -> bool:
        return all(a <= b for a, b in zip(self.lo, other.lo)) and all(
            a >= b for a, b in zip(self.hi, other.hi)
        )


@dataclass
class BMCProblem:
    controller: Network
    dynamics: AffineDynamics
    initial: Box
    safe: Box
    steps: int
    max_partitions: int = DEFAULT_MAX_PARTITIONS
    max_frontier: int = DEFAULT_MAX_FRONTIER
    tol: float = 1e-9

    def __post_init__(self):
        if self.controller.input_dim != 2:
            raise DimMismatchError("controller must take the 2D state as input")
        if self.controller.output_dim != self.dynamics.B.shape[1]:
            raise DimMismatchError(
                f"controller outputs {self.controller.output_dim} actions, B expects {self.dynamics.B.shape[1]}"
            )
        if self.steps < 0 or self.max_partitions <= 0 or self.max_frontier <= 0:
            raise ValueError("steps must be >= 0 and caps positive")


@dataclass
class BMCResult:
    """``status`` is one of ``"verified"``, ``"violated"`` or ``"cap_exceeded"``.

    ``inductive`` is set when verification holds for every horizon because the
    frontier was subsumed by the initial set.
    """

    status: str
    step: int
    witness: Optional[np.ndarray] = None
    inductive: bool = False
    frontier_sizes: list = field(default_factory=list)
    step_seconds: list = field(default_factory=list)
    frontiers: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "step": self.step,
            "inductive": self.inductive,
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "frontier_sizes": list(self.frontier_sizes),
        }


def transition(problem: BMCProblem, x) -> np.ndarray:
    """One concrete closed-loop step, for simulation."""
    x = np.asarray(x, dtype=np.float64)
    return problem.dynamics(x, problem.controller(x))


def post_step(problem: BMCProblem, frontier: list[PlanePolytope]) -> list[PostPolytope]:
    """Exact image of every frontier polygon under one closed-loop step."""
    dyn = problem.dynamics
    out = []
    for poly in frontier:
        if poly.embedding.n != 2:
            raise DimMismatchError("frontier polygons must live in the 2D state space")
        rep = fhat(problem.controller, poly, problem.max_partitions)
        for part in rep.partitions:
            states = poly.embedding.embed(part.poly.vertices)
            images = dyn(states, part.post)
            hull, degenerate = convex_hull_2d(images)
            hull_poly = None if degenerate else PlanePolytope(Embedding.identity(), hull)
            out.append(PostPolytope(images, hull_poly, degenerate))
    return out


def _worst_vertex(box: Box, pts: np.ndarray) -> np.ndarray:
    viol = box.violation(pts)
    worst = viol.max()
    cands = pts[viol >= worst - 1e-12 * (1.0 + abs(worst))]
    # ties: lexicographically greatest point
    order = np.lexsort((cands[:, 1], cands[:, 0]))
    return cands[order[-1]]


def run_bmc(problem: BMCProblem, keep_frontiers: bool = False) -> BMCResult:
    """Propagate the initial box for up to ``problem.steps`` steps.

    Each step checks every reachable polygon against the safe box (all
    vertices inside suffices by convexity) and drops polygons already inside
    the initial box, since their futures are covered by earlier steps.
    """
    S_I, S_S, tol = problem.initial, problem.safe, problem.tol
    result = BMCResult("verified", 0)
    corners = S_I.corners()
    if not S_S.contains(corners, tol).all():
        result.status = "violated"
        result.witness = _worst_vertex(S_S, corners)
        return result

    frontier = [S_I.polygon()]
    for step in range(1, problem.steps + 1):
        t0 = time.perf_counter()
        try:
            posts = post_step(problem, frontier)
        except PartitionCapExceeded:
            result.status = "cap_exceeded"
            result.step = step
            return result
        bad = [p.vertices for p in posts if not S_S.contains(p.vertices, tol).all()]
        if bad:
            result.status = "violated"
            result.step = step
            result.witness = _worst_vertex(S_S, np.vstack(bad))
            result.step_seconds.append(time.perf_counter() - t0)
            return result
        nxt = []
        for p in posts:
            if S_I.contains(p.vertices, tol).all():
                continue
            if p.hull_2d is None:
                raise DegenerateFrontierError(
                    f"step {step}: reachable piece collapsed to {len(p.hull_vertices)} point(s) outside the initial set"
                )
            nxt.append(p.hull_2d)
        frontier = nxt
        result.step = step
        result.frontier_sizes.append(len(frontier))
        result.step_seconds.append(time.perf_counter() - t0)
        if keep_frontiers:
            result.frontiers.append(list(frontier))
        log.debug("step %d: %d polygons, %.3fs", step, len(frontier), result.step_seconds[-1])
        if not frontier:
            result.inductive = True
            return result
        if len(frontier) > problem.max_frontier:
            result.status = "cap_exceeded"
            return result
    return result
