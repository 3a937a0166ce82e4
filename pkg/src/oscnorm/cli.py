"""Command-line interface: norms, decompositions, grids, corpora, verification.

Arrays travel as CSV (row-major cell values), structured data as JSON.
The ``verify`` subcommand writes JSON + CSV reports and exits nonzero iff
any asserted inequality fails, so it can gate continuous integration runs
directly.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .gauge import Gauge, IdentityGauge, PowerGauge, gauge_from_spec
from .grid import (
    CellMeasure,
    GridDomain,
    GridError,
    GridFunction,
    RealInterval,
    Rect,
    build_mu_dyadic_tree,
    load_cell_array,
)
from .decomposition import DecompositionError, bcz_2d, cz_dyadic, rising_sun_1d
from .oscillation import MODES, OscError, RegionFamily, norm_sup
from . import verify as verify_mod
from .sht import Ball, FiniteSHT, bmo_sht, check_radius_lemma, validate_sht, vitali_select


def _load_function(path: str) -> GridFunction:
    vals = load_cell_array(path)
    return GridFunction(GridDomain(dim=vals.ndim, cells_per_side=vals.shape[0]), vals)


def _load_measure(spec: str, domain: GridDomain) -> CellMeasure:
    if spec == "uniform":
        return CellMeasure.uniform(domain)
    w = load_cell_array(spec)
    return CellMeasure(domain, w)


def _gauge(spec: str | None) -> Gauge | None:
    if spec is None:
        return None
    if Path(spec).suffix == ".json" and Path(spec).exists():
        with open(spec) as fh:
            return gauge_from_spec(json.load(fh))
    return gauge_from_spec(spec)


def _emit(payload: dict, args) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) if args.json else _pretty(payload)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def _pretty(payload: dict, indent: int = 0) -> str:
    lines = []
    pad = "  " * indent
    for k, v in payload.items():
        if isinstance(v, dict):
            lines.append(f"{pad}{k}:")
            lines.append(_pretty(v, indent + 1))
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            lines.append(f"{pad}{k}: [{len(v)} entries]")
        else:
            lines.append(f"{pad}{k}: {v}")
    return "\n".join(lines)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--seed", type=int, default=7, help="seed for anything random")
    p.add_argument("--tol", type=float, default=None, help="override report tolerance")
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for compatibility; results are schedule-independent")
    p.add_argument("--out", type=str, default=None, help="output file (default stdout)")


def cmd_norm(args) -> int:
    f = _load_function(args.func)
    m = _load_measure(args.measure, f.domain)
    g = _gauge(args.gauge)
    mode = args.mode.replace("-", "_")
    if mode in ("gauge_infc", "cz_center", "k_phi") and g is None:
        print("error: this mode needs --gauge", file=sys.stderr)
        return 2
    fam = RegionFamily(args.family, f.domain)
    rep = norm_sup(f, fam, g, m, mode)
    _emit(rep.to_json(), args)
    return 0


def cmd_cz(args) -> int:
    f = _load_function(args.func)
    m = _load_measure(args.measure, f.domain)
    tree = None
    if args.mu_tree:
        dom = f.domain
        tree = build_mu_dyadic_tree(
            (dom.origin[0], dom.origin[0] + dom.side), m, depth=args.depth or dom.levels
        )
    res = cz_dyadic(f, None, args.L, m, tree=tree)
    if args.mask_out:
        np.savetxt(args.mask_out, res.good_mask.astype(int), fmt="%d", delimiter=",")
    _emit(res.to_json(), args)
    return 0


def cmd_sun(args) -> int:
    f = _load_function(args.func)
    m = _load_measure(args.measure, f.domain)
    res = rising_sun_1d(f, None, args.lam, m)
    if args.mask_out:
        np.savetxt(args.mask_out, res.good_mask.astype(int), fmt="%d", delimiter=",")
    _emit(res.to_json(), args)
    return 0


def cmd_bcz(args) -> int:
    f = _load_function(args.func)
    m = _load_measure(args.measure, f.domain)
    res, fams = bcz_2d(f, None, args.L, m, b_bound=args.b_bound)
    if args.mask_out:
        np.savetxt(args.mask_out, res.good_mask.astype(int), fmt="%d", delimiter=",")
    payload = res.to_json()
    payload["families"] = fams.to_json()
    _emit(payload, args)
    return 0


def cmd_grid(args) -> int:
    w = load_cell_array(args.measure)
    dom = GridDomain(dim=1, cells_per_side=w.shape[0])
    m = CellMeasure(dom, w)
    tree = build_mu_dyadic_tree((dom.origin[0], dom.origin[0] + dom.side), m, depth=args.depth)
    _emit(tree.to_json(), args)
    return 0


def cmd_sht(args) -> int:
    with open(args.input) as fh:
        doc = json.load(fh)
    if args.action == "validate":
        rep = validate_sht(np.asarray(doc["dist"], dtype=float), float(doc["kappa"]),
                           np.asarray(doc["weights"], dtype=float))
        _emit({"ok": rep.ok, "kappa_min": rep.kappa_min, "failures": list(rep.failures)}, args)
        return 0 if rep.ok else 1
    s = FiniteSHT.from_json(doc)
    if args.action == "norm":
        g = _gauge(args.gauge)
        mode = args.mode.replace("-", "_")
        rep = bmo_sht(np.asarray(doc["values"], dtype=float), s, g, mode)
        _emit(rep.to_json(), args)
        return 0
    if args.action == "vitali":
        balls = [Ball(int(c), float(r)) for c, r in doc["balls"]]
        sel = vitali_select(balls, s)
        _emit(sel.to_json(), args)
        return 0
    if args.action == "radius":
        center = int(np.argmax(s.weights))
        radius = float(np.median(s.dist[center][s.dist[center] > 0]))
        rep = check_radius_lemma(s, Ball(center, radius), args.eps)
        _emit(rep.to_json(), args)
        return 0
    print(f"error: unknown sht action {args.action}", file=sys.stderr)
    return 2


_SUITES = ("main", "general", "sht", "nondoubling1d", "rect", "decomp")


def _run_suite(name: str, args) -> verify_mod.TheoremReport:
    seed = args.seed
    quick = args.scale == "quick"
    g = _gauge(args.gauge) if args.gauge else PowerGauge(0.5)
    if name == "main":
        corpus = verify_mod.standard_corpus(
            seed,
            cells_1d=256 if quick else 1024,
            cells_2d=16 if quick else 64,
            n_1d=6 if quick else 42,
            n_2d=2 if quick else 8,
            small_diag=2 if quick else 4,
        )
        return verify_mod.verify_thm_main(corpus, g)
    if name == "general":
        from .gauge import GaugeProbe

        probe = GaugeProbe(lambda t: t * (1 + 0.5 * np.sin(t)), t_max=40.0, sample_count=10_000)
        corpus = verify_mod.standard_corpus(
            seed, cells_1d=128, cells_2d=16, n_1d=4 if quick else 8, n_2d=0, small_diag=0
        )
        return verify_mod.verify_thm_general(probe, corpus)
    if name == "sht":
        instances = verify_mod.make_sht_instances(6 if quick else 30, seed)
        return verify_mod.verify_sht(instances, g)
    if name == "nondoubling1d":
        corpus = verify_mod.standard_corpus(
            seed,
            cells_1d=256 if quick else 1024,
            n_1d=6 if quick else 50,
            n_2d=0,
            small_diag=0,
            measure="nondoubling",
        )
        return verify_mod.verify_thm_nondoubling_1d(corpus, g)
    if name == "rect":
        corpus = verify_mod.standard_corpus(
            seed,
            cells_2d=16,
            n_1d=0,
            n_2d=4 if quick else 19,
            small_diag=0,
            measure="nondoubling",
        )
        if not quick:
            big = verify_mod.standard_corpus(
                seed + 1, cells_2d=32, n_1d=0, n_2d=1, small_diag=0, measure="nondoubling"
            )
            corpus = verify_mod.Corpus(corpus.instances + big.instances)
        return verify_mod.verify_thm_rect(corpus, g)
    if name == "decomp":
        c1 = verify_mod.standard_corpus(
            seed, cells_1d=64, n_1d=4 if quick else 12, n_2d=0, small_diag=0
        )
        c2 = verify_mod.standard_corpus(
            seed + 1, cells_2d=16, n_1d=0, n_2d=2 if quick else 6, small_diag=0
        )
        return verify_mod.verify_decompositions(
            c1, c2, sun_instances=60 if quick else 500, bcz_instances=6 if quick else 24, seed=seed
        )
    raise ValueError(f"unknown suite {name!r}")


def cmd_verify(args) -> int:
    suites = _SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in suites:
        rep = _run_suite(name, args)
        prefix = args.out or "report"
        Path(f"{prefix}-{name}.json").write_text(rep.to_json() + "\n")
        Path(f"{prefix}-{name}.csv").write_text(rep.to_csv())
        status = "pass" if rep.all_pass else "FAIL"
        print(f"suite {name}: {status} ({len(rep.asserted_rows)} asserts, "
              f"{len(rep.violations)} violations)")
        ok &= rep.all_pass
    return 0 if ok else 1


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    dom = GridDomain(dim=args.dim, cells_per_side=args.cells)
    if args.generator == "weights-nondoubling":
        vals = verify_mod.gen_weights_nondoubling(dom, rng, args.range)
    else:
        gen = verify_mod.GENERATORS.get(args.generator)
        if gen is None:
            print(f"error: unknown generator {args.generator!r}", file=sys.stderr)
            return 2
        vals = gen(dom, rng)
    out = args.out or f"{args.generator}-{args.cells}.csv"
    np.savetxt(out, np.atleast_2d(vals) if args.dim == 2 else vals, delimiter=",")
    manifest = {
        "generator": args.generator,
        "seed": args.seed,
        "cells": args.cells,
        "dim": args.dim,
        "file": out,
    }
    if args.generator == "weights-nondoubling":
        manifest["range"] = args.range
    Path(out).with_suffix(".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    if not args.json:
        print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="oscnorm",
        description="Oscillation norms, decompositions, and theorem certification "
                    "on weighted grids and finite quasi-metric spaces.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norm", help="compute an oscillation norm over a region family")
    p.add_argument("--func", required=True, help="CSV of cell values")
    p.add_argument("--measure", default="uniform", help="'uniform' or CSV of cell weights")
    p.add_argument("--gauge", default=None, help="id | power:P | log1p:A | JSON spec/file")
    p.add_argument("--family", default="dyadic", choices=("dyadic", "cubes", "rects"))
    p.add_argument("--mode", default="infc",
                   choices=[m.replace("_", "-") for m in MODES])
    _add_common(p)
    p.set_defaults(fn=cmd_norm)

    p = sub.add_parser("cz", help="dyadic Calderon-Zygmund decomposition")
    p.add_argument("--func", required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--measure", default="uniform")
    p.add_argument("--mu-tree", action="store_true", help="use the mu-dyadic grid")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--mask-out", default=None, help="write the good-set mask CSV here")
    _add_common(p)
    p.set_defaults(fn=cmd_cz)

    p = sub.add_parser("sun", help="rising-sun decomposition at an exact level")
    p.add_argument("--func", required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--measure", default="uniform")
    p.add_argument("--mask-out", default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_sun)

    p = sub.add_parser("bcz", help="Besicovitch-Calderon-Zygmund decomposition (2-D)")
    p.add_argument("--func", required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--measure", default="uniform")
    p.add_argument("--b-bound", type=int, default=20)
    p.add_argument("--mask-out", default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_bcz)

    p = sub.add_parser("grid", help="build and dump a mu-dyadic tree")
    p.add_argument("--measure", required=True, help="CSV of cell weights (1-D)")
    p.add_argument("--depth", type=int, default=4)
    _add_common(p)
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("sht", help="finite space of homogeneous type operations")
    p.add_argument("--input", required=True, help="JSON instance")
    p.add_argument("--action", default="validate",
                   choices=("validate", "norm", "vitali", "radius"))
    p.add_argument("--gauge", default=None)
    p.add_argument("--mode", default="infc")
    p.add_argument("--eps", type=float, default=0.2)
    _add_common(p)
    p.set_defaults(fn=cmd_sht)

    p = sub.add_parser("verify", help="run a certification suite")
    p.add_argument("--suite", default="all", choices=_SUITES + ("all",))
    p.add_argument("--gauge", default=None)
    p.add_argument("--scale", default="quick", choices=("quick", "full"))
    _add_common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("gen", help="generate corpus files")
    p.add_argument("generator",
                   choices=("logcusp", "stepdyadic", "randbounded", "checkerrect",
                            "weights-nondoubling"))
    p.add_argument("--cells", type=int, default=256)
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--range", type=float, default=1e6)
    _add_common(p)
    p.set_defaults(fn=cmd_gen)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (GridError, OscError, DecompositionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
