"""Command line entry point.

Exit codes: 0 success, 1 bad input, 2 cap exceeded, 3 internal invariant
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, bmc, dnn, patch, svg, symbolic
from .errors import PWLNetError
from .geom2d import (
    TOL,
    contains_points,
    plane_polygon,
    polytope_from_json,
    polytope_to_json,
    set_tolerances,
)

log = logging.getLogger("pwlnet")

HISTORY_FIELDS = ["iteration", "weight_id", "delta", "satisfied", "total", "percent"]


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_config(path):
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib

        with open(path, "rb") as fh:
            return tomllib.load(fh)
    return _read_json(path)


def _load_domain(path):
    return polytope_from_json(_read_json(path))


def _max_error_report(net, rep, X, n, seed):
    if n <= 0:
        return None
    rng = np.random.default_rng(seed)
    v = X.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    pts = []
    while sum(len(p) for p in pts) < n:
        cand = rng.uniform(lo, hi, size=(4 * n, 2))
        pts.append(cand[contains_points(v, cand)])
    u = np.vstack(pts)[:n]
    err = np.abs(rep.evaluate(u) - net(X.embedding.embed(u))).max()
    return {"samples": n, "seed": seed, "max_abs_error": float(err)}


def cmd_partitions(args):
    net = dnn.load_network(args.net)
    X = _load_domain(args.domain)
    rep = symbolic.fhat(net, X, args.max_partitions)
    report = {
        "domain": polytope_to_json(X),
        "num_partitions": len(rep),
        "partitions": symbolic.dump(rep),
    }
    check = _max_error_report(net, rep, X, args.check_samples, args.seed)
    if check is not None:
        report["exactness_check"] = check
    _write_json(args.out_dir / "partitions.json", report)
    svg.partitions_figure([p.vertices for p in rep]).save(args.out_dir / "partitions.svg")
    print(f"{len(rep)} partitions")


def cmd_classify(args):
    net = dnn.load_network(args.net)
    X = _load_domain(args.domain)
    rep = symbolic.fhat(net, X, args.max_partitions)
    regions = analysis.classify(rep, args.num_classes, args.max_partitions)
    m = rep.out_dim
    areas = analysis.region_area_by_label(regions, m)
    _write_json(
        args.out_dir / "regions.json",
        {
            "num_classes": m,
            "area_by_class": areas.tolist(),
            "regions": [{**polytope_to_json(r.poly), "label": r.label} for r in regions],
        },
    )
    fig = svg.labeled_figure(
        [r.poly.vertices for r in regions],
        [r.label for r in regions],
        m,
        outlines=[p.vertices for p in rep] if args.outlines else None,
    )
    fig.save(args.out_dir / "classify.svg")
    print(f"{len(regions)} regions over {len(rep)} partitions")


def _load_halfspaces(path, out_dim):
    return patch.halfspaces_from_json(_read_json(path), out_dim)


def cmd_precond(args):
    net = dnn.load_network(args.net)
    X = _load_domain(args.domain)
    Y = _load_halfspaces(args.spec, net.output_dim)
    rep = symbolic.fhat(net, X, args.max_partitions)
    polys = analysis.weakest_pre(rep, Y)
    total = float(sum(p.area for p in polys))
    _write_json(
        args.out_dir / "precond.json",
        {
            "domain_area": X.area,
            "precondition_area": total,
            "polygons": [polytope_to_json(p) for p in polys],
        },
    )
    fig = svg.Figure(svg.bounds_of([X.vertices]))
    fig.polygon(X.vertices, fill="#dddddd", stroke="#000000")
    for p in polys:
        fig.polygon(p.vertices, fill=svg.PALETTE[0], stroke=svg.PALETTE[0], stroke_width=0.5)
    fig.save(args.out_dir / "precond.svg")
    print(f"{len(polys)} polygons, area {total:.9g} of {X.area:.9g}")


def _box(obj):
    if isinstance(obj, dict):
        return bmc.Box(obj["lo"], obj["hi"])
    return bmc.Box(obj[0], obj[1])


def load_bmc_problem(config_path, net_path=None, steps=None, max_partitions=None, max_frontier=None):
    cfg = _read_config(config_path)
    base = Path(config_path).parent
    controller = net_path or cfg.get("controller")
    if controller is None:
        raise ValueError("no controller network given (config 'controller' or --net)")
    if net_path is None:
        controller = base / controller
    net = dnn.load_network(controller)
    m = net.output_dim
    dyn = bmc.AffineDynamics(cfg["A"], cfg.get("B", np.zeros((2, m))), cfg.get("c", [0.0, 0.0]))
    return bmc.BMCProblem(
        controller=net,
        dynamics=dyn,
        initial=_box(cfg["initial"]),
        safe=_box(cfg["safe"]),
        steps=int(steps if steps is not None else cfg.get("steps", 10)),
        max_partitions=int(max_partitions or cfg.get("max_partitions", symbolic.DEFAULT_MAX_PARTITIONS)),
        max_frontier=int(max_frontier or cfg.get("max_frontier", bmc.DEFAULT_MAX_FRONTIER)),
    )


def cmd_bmc(args):
    problem = load_bmc_problem(args.dynamics, args.net, args.steps, args.max_partitions, args.max_frontier)
    result = bmc.run_bmc(problem, keep_frontiers=args.svg)
    _write_json(args.out_dir / "bmc.json", result.to_json())
    for i, secs in enumerate(result.step_seconds, 1):
        log.info("step %d: %.4fs", i, secs)
    if args.svg:
        for i, frontier in enumerate(result.frontiers, 1):
            polys = [p.vertices for p in frontier] + [problem.safe.corners()]
            fig = svg.Figure(svg.bounds_of(polys))
            fig.polygon(problem.safe.corners(), fill="none", stroke="#d95f02", stroke_width=1.5)
            fig.polygon(problem.initial.corners(), fill="none", stroke="#1b9e77", stroke_width=1.5)
            for p in frontier:
                fig.polygon(p.vertices, fill="#7570b3", stroke="#ffffff", stroke_width=0.5, opacity=0.6)
            fig.save(args.out_dir / f"frontier_{i:03d}.svg")
    msg = result.status
    if result.status == "violated":
        msg += f" at step {result.step}, witness {result.witness.tolist()}"
    elif result.status == "verified":
        msg += " (inductive)" if result.inductive else f" for {result.step} steps"
    print(msg)
    return 2 if result.status == "cap_exceeded" else 0


def _spec_domain(spec):
    pts = np.vstack([X.vertices for X, _ in spec])
    emb = spec.pairs[0][0].embedding
    if not all(X.embedding.same_as(emb) for X, _ in spec):
        return spec.pairs[0][0]
    return plane_polygon(pts, emb)


def cmd_patch(args):
    net = dnn.load_network(args.net)
    spec = patch.load_patch_spec(args.spec, net.output_dim)
    mnet = dnn.to_masking(net)
    layer = args.layer if args.layer is not None else mnet.affine_layer_indices()[-1]
    candidates = mnet.weight_ids(layer)
    result = patch.greedy_patch(mnet, spec, candidates, args.iterations, max_partitions=args.max_partitions)
    report = patch.verify_patch(result.network, spec, mnet, args.max_partitions)

    # keeps theta_a alongside theta_v; a plain network would move the partitions
    dnn.save_network(result.network, args.out_dir / "patched_network.json", which="both")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=HISTORY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in result.history:
        writer.writerow({**row, "delta": repr(row["delta"]), "percent": "%.6f" % row["percent"]})
    (args.out_dir / "history.csv").write_text(buf.getvalue())
    _write_json(
        args.out_dir / "patch_report.json",
        {
            "layer": layer,
            "applied": [{"weight_id": str(w), "delta": d} for w, d in result.applied],
            "history": result.history,
            "verification": report,
        },
    )
    domain = _load_domain(args.domain) if args.domain else _spec_domain(spec)
    m = net.output_dim
    for name, model in (("before", mnet), ("after", result.network)):
        rep = symbolic.fhat(model, domain, args.max_partitions)
        regions = analysis.classify(rep, m, args.max_partitions)
        fig = svg.labeled_figure(
            [r.poly.vertices for r in regions], [r.label for r in regions], m,
            outlines=[p.vertices for p in rep],
        )
        for X, _ in spec:
            if X.embedding.same_as(domain.embedding):
                fig.polygon(X.vertices, fill="none", stroke="#000000", stroke_width=1.5)
        fig.save(args.out_dir / f"classify_{name}.svg")
    first, last = result.history[0], result.history[-1]
    print(f"satisfied {first['satisfied']}/{first['total']} -> {last['satisfied']}/{last['total']}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", type=Path, default=Path("."), help="directory for outputs")
    common.add_argument("--max-partitions", type=int, default=symbolic.DEFAULT_MAX_PARTITIONS)
    common.add_argument("--tol", type=float, default=None, help="geometric tolerance (default 1e-7)")
    common.add_argument("--split-tol", type=float, default=None, help="relative sign tolerance (default 1e-10)")
    common.add_argument("--seed", type=int, default=0, help="seed for sampling-based reports")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="pwlnet", description="Exact analysis of piecewise-linear networks over 2D input polygons."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partitions", parents=[common], help="dump the linear partitions of a network over a domain")
    p.add_argument("--net", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--check-samples", type=int, default=0, help="sampled exactness check to include in the JSON")
    p.set_defaults(func=cmd_partitions)

    p = sub.add_parser("classify", parents=[common], help="argmax decision regions over a domain")
    p.add_argument("--net", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--outlines", action="store_true", help="overlay partition borders")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("precond", parents=[common], help="weakest precondition of an output halfspace set")
    p.add_argument("--net", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--spec", required=True, help="halfspace JSON for the output set")
    p.set_defaults(func=cmd_precond)

    for name in ("bmc", "postcond"):
        p = sub.add_parser(name, parents=[common], help="bounded model checking of a closed-loop controller")
        p.add_argument("--dynamics", required=True, help="problem config (JSON or TOML)")
        p.add_argument("--net", default=None, help="controller network, overrides the config")
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--max-frontier", type=int, default=None)
        p.add_argument("--svg", action="store_true", help="write one frontier SVG per step")
        p.set_defaults(func=cmd_bmc)

    p = sub.add_parser("patch", parents=[common], help="greedy single-weight repair against a patch spec")
    p.add_argument("--net", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--layer", type=int, default=None, help="layer index to patch (default: last affine layer)")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--domain", default=None, help="domain for the before/after figures")
    p.set_defaults(func=cmd_patch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    saved = (TOL.geo, TOL.split)
    try:
        if args.max_partitions <= 0:
            raise ValueError("--max-partitions must be positive")
        set_tolerances(args.tol, args.split_tol)
        os.makedirs(args.out_dir, exist_ok=True)
        return args.func(args) or 0
    except PWLNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        set_tolerances(*saved)


if __name__ == "__main__":
    sys.exit(main())
