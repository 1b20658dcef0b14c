"""Independent oracles and generators for the test-suite.

Nothing here calls into the code paths it is used to check: hulls are
brute-forced, clipping goes through shapely, network evaluation is a plain
Python loop.
"""

import itertools
import math

import numpy as np
from shapely.geometry import Polygon, box

from pwlnet import dnn
from pwlnet.geom2d import Embedding, PlanePolytope


def golden_network():
    return dnn.Network(
        [
            dnn.DenseLayer([[-1.0, 1.0], [1.0, 0.0], [0.0, 1.0]], [-0.5, 0.0, 0.0]),
            dnn.ReluLayer(3),
            dnn.DenseLayer([[1.0, 1.0, 1.0], [0.0, -1.0, -1.0]], [0.0, 1.0]),
        ]
    )


def random_network(rng, input_dim, widths, activations=("relu", "hard_tanh"), scale=1.0):
    """Dense layers of the given widths with a random PWL activation between them."""
    layers = []
    d = input_dim
    for i, w in enumerate(widths):
        layers.append(dnn.DenseLayer(scale * rng.normal(size=(w, d)), scale * rng.normal(size=w)))
        if i < len(widths) - 1:
            kind = activations[rng.integers(len(activations))]
            layers.append(dnn.ReluLayer(w) if kind == "relu" else dnn.HardTanhLayer(w))
        d = w
    return dnn.Network(layers)


def random_convex_polygon(rng, n_points=None, radius=1.0, center=(0.0, 0.0)):
    """Vertices (CCW) of the hull of random points on a circle."""
    n_points = n_points or int(rng.integers(3, 9))
    ang = np.sort(rng.uniform(0, 2 * np.pi, size=n_points))
    r = radius * rng.uniform(0.5, 1.0, size=n_points)
    pts = np.column_stack([r * np.cos(ang), r * np.sin(ang)]) + np.asarray(center)
    return brute_force_hull(pts)


def random_plane_domain(rng, n, radius=(0.5, 3.0)):
    """Random convex polygon on a random 2D plane in R^n."""
    q, _ = np.linalg.qr(rng.normal(size=(n, 2)))
    emb = Embedding(rng.normal(size=n), q.T)
    verts = random_convex_polygon(rng, radius=rng.uniform(*radius))
    while abs(shoelace(verts)) < 0.05:
        verts = random_convex_polygon(rng, radius=rng.uniform(*radius))
    return PlanePolytope(emb, verts)


def shoelace(v):
    v = np.asarray(v)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * sum(x[i] * y[(i + 1) % len(v)] - x[(i + 1) % len(v)] * y[i] for i in range(len(v)))


def sample_polygon(rng, vertices, n):
    """Uniform samples in a convex polygon via area-weighted triangle fan."""
    v = np.asarray(vertices)
    tris = [(v[0], v[i], v[i + 1]) for i in range(1, len(v) - 1)]
    areas = np.array([abs((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0]) / 2 for a, b, c in tris])
    idx = rng.choice(len(tris), size=n, p=areas / areas.sum())
    r1 = rng.uniform(size=n)
    r2 = rng.uniform(size=n)
    flip = r1 + r2 > 1
    r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
    a = np.array([tris[i][0] for i in idx])
    b = np.array([tris[i][1] for i in idx])
    c = np.array([tris[i][2] for i in idx])
    return a + r1[:, None] * (b - a) + r2[:, None] * (c - a)


def brute_force_hull(points, eps=1e-12):
    """O(n^3) hull: a pair (i, j) is a hull edge if every other point is on
    its left. Returns the CCW vertex cycle without collinear points."""
    pts = [tuple(p) for p in np.unique(np.asarray(points, dtype=float), axis=0)]
    if len(pts) <= 2:
        return np.array(pts)
    succ = {}
    for i, j in itertools.permutations(range(len(pts)), 2):
        a, b = pts[i], pts[j]
        ok = True
        for k, c in enumerate(pts):
            if k in (i, j):
                continue
            cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cr < -eps:
                ok = False
                break
            if abs(cr) <= eps:
                # collinear point strictly between a and b: edge a->b is not minimal
                t = ((c[0] - a[0]) * (b[0] - a[0]) + (c[1] - a[1]) * (b[1] - a[1])) / (
                    (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2
                )
                if t < 0 or t > 1:
                    ok = False
                    break
        if ok:
            # keep the longest edge from a (drops collinear middle points)
            prev = succ.get(i)
            if prev is None or math.dist(a, pts[prev]) < math.dist(a, b):
                succ[i] = j
    start = min(succ)
    cycle = [start]
    while True:
        nxt = succ[cycle[-1]]
        if nxt == start:
            break
        cycle.append(nxt)
    return np.array([pts[i] for i in cycle])


def brute_force_sweep(intervals):
    """Max number of closed intervals sharing a point, over all endpoints."""
    cands = {0.0}
    for iv in intervals:
        if iv.empty:
            continue
        for x in (iv.lo, iv.hi):
            if math.isfinite(x):
                cands.add(x)
    return max(sum(1 for iv in intervals if c in iv) for c in cands)


def straight_line_eval(net, x):
    """Layer-by-layer forward pass in plain Python lists."""
    x = [float(v) for v in x]
    for layer in net.layers:
        if isinstance(layer, dnn.DenseLayer):
            W = layer.weights.tolist()
            b = layer.bias.tolist()
            x = [sum(wij * xj for wij, xj in zip(row, x)) + bi for row, bi in zip(W, b)]
        elif isinstance(layer, dnn.ReluLayer):
            x = [v if v > 0 else 0.0 for v in x]
        elif isinstance(layer, dnn.HardTanhLayer):
            x = [min(max(v, -1.0), 1.0) for v in x]
        elif isinstance(layer, dnn.MaxPoolLayer):
            x = [max(x[i] for i in g) for g in layer.groups]
    return x


def shapely_halfplane_clip(vertices, a, b, sense="le", big=1e4):
    """Polygon intersected with {u : a.u + b <= 0} (or >= 0) using shapely."""
    poly = Polygon(vertices)
    a = np.asarray(a, dtype=float)
    n = a / np.linalg.norm(a)
    p0 = -b * a / (a @ a)
    t = np.array([-n[1], n[0]])
    side = -n if sense == "le" else n
    half = Polygon([p0 - big * t, p0 + big * t, p0 + big * t + big * side, p0 - big * t + big * side])
    return poly.intersection(half)


def sign_regions(box_lo, box_hi, hyperplanes):
    """Nonempty cells of an arrangement of lines {(a, b): a.u + b = 0} inside a box.

    Returns the shapely polygons with positive area, one per sign vector.
    """
    cells = []
    for signs in itertools.product((-1, 1), repeat=len(hyperplanes)):
        region = box(box_lo[0], box_lo[1], box_hi[0], box_hi[1])
        for s, (a, b) in zip(signs, hyperplanes):
            if region.area <= 1e-12:
                break
            region = shapely_halfplane_clip(list(region.exterior.coords), a, b, "le" if s < 0 else "ge")
        if region.area > 1e-12:
            cells.append((signs, region))
    return cells


def simulate_grid(controller, A, B, c, lo, hi, safe_lo, safe_hi, steps, n=200):
    """Closed-loop simulation from an n x n grid of seeds over the initial box.

    Returns (first violating step or None, the most-violating state at that
    step with ties broken towards the lexicographically greatest point).
    """
    g0 = np.linspace(lo[0], hi[0], n)
    g1 = np.linspace(lo[1], hi[1], n)
    x = np.array([[a, b] for a in g0 for b in g1])
    A, B, c = np.asarray(A, float), np.asarray(B, float), np.asarray(c, float)
    safe_lo, safe_hi = np.asarray(safe_lo, float), np.asarray(safe_hi, float)
    for step in range(1, steps + 1):
        x = x @ A.T + controller(x) @ B.T + c
        viol = np.maximum(safe_lo - x, x - safe_hi).max(axis=1)
        if (viol > 0).any():
            worst = viol.max()
            cands = x[viol >= worst - 1e-12]
            return step, cands[np.lexsort((cands[:, 1], cands[:, 0]))[-1]]
    return None, None
