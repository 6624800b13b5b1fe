"""Command line front end.

Subcommands: gen, bounds, brute-force, lower, eval, study-random, growth,
compare-cnn.  Exit codes: 0 ok, 2 usage, 3 input, 4 cap exceeded, 5 internal
invariant violation.  Reports are CSV (default) or JSON with the fixed
columns model,norm,approach,bound,value,time_ms,terms; time_ms stays empty
unless --timings is given so identical runs produce identical bytes.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import benchgen, bounds_conv, bounds_dense, lowering, netmodel
from .errors import (
    DegenerateSeries,
    DepthTooLarge,
    LipcertError,
    ParseError,
    ShapeMismatch,
    TooManyNeurons,
    UnknownLayerKind,
    UnsupportedLayer,
    WidthTooLarge,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CAP = 4
EXIT_INVARIANT = 5

NORMS = ("l1", "linf", "l2")


class InvariantViolation(LipcertError):
    pass


def _fmt(v) -> str:
    return f"{v:.17g}"


def _write(path, text):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_net(args) -> netmodel.NetworkSpec:
    if getattr(args, "net", None):
        try:
            with open(args.net) as fh:
                return netmodel.load(fh.read())
        except OSError as exc:
            raise ParseError(f"cannot read {args.net}: {exc}") from exc
    if getattr(args, "gen", None):
        return _generate(args)
    raise ParseError("one of --net or --gen is required")


def _generate(args) -> netmodel.NetworkSpec:
    kind = args.gen
    if kind == "x2":
        return benchgen.build_x2_net(args.depth, args.variant or "symmetric")
    if kind == "xy":
        return benchgen.build_xy_net(args.terms, args.variant or "hata")
    if kind == "random":
        dims = [int(d) for d in args.dims.split(",")]
        return benchgen.build_random_net(dims, seed=args.seed)
    if kind == "mnist-cnn":
        return benchgen.build_mnist_cnn(args.model or "A", seed=args.seed)
    raise ParseError(f"unknown generator {kind!r}")


def _add_gen_args(p):
    p.add_argument("--net", help="interchange JSON file")
    p.add_argument("--gen", choices=["x2", "xy", "random", "mnist-cnn"],
                   help="generate a benchmark net instead of loading one")
    p.add_argument("--depth", type=int, default=3, help="x2 depth")
    p.add_argument("--terms", type=int, default=1, help="xy series terms")
    p.add_argument("--variant", help="x2: symmetric|asymmetric; xy: hata|hatb")
    p.add_argument("--dims", default="8,10,6,3", help="random net layer sizes")
    p.add_argument("--model", help="mnist-cnn model A|B|C")
    p.add_argument("--seed", type=int, default=0)


def _add_report_args(p):
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--timings", action="store_true", help="fill the time_ms column")


HEADER = "model,norm,approach,bound,value,time_ms,terms\n"


def _report_rows(name, approach, report, timings):
    rows = []
    for bound, value in report.values.items():
        ms = _fmt(report.timings.get(bound, 0.0) * 1000.0) if timings else ""
        rows.append(
            {
                "model": name,
                "norm": report.norm,
                "approach": approach,
                "bound": bound,
                "value": value,
                "time_ms": ms,
                "terms": report.term_count,
            }
        )
    return rows


def _emit_rows(rows, args):
    if args.format == "json":
        doc = [dict(r, value=float(r["value"])) for r in rows]
        _write(args.out, json.dumps(doc, indent=1) + "\n")
    else:
        lines = [HEADER]
        for r in rows:
            lines.append(
                f"{r['model']},{r['norm']},{r['approach']},{r['bound']},"
                f"{_fmt(r['value'])},{r['time_ms']},{r['terms']}\n"
            )
        _write(args.out, "".join(lines))


def _is_dense(net) -> bool:
    return all(isinstance(l, (netmodel.Dense, netmodel.Activation)) for l in net.layers)


def _dense_report_rows(net, norms, args, include_brute):
    rows = []
    for norm in norms:
        rep = bounds_dense.bound_report(net, norm, include_brute=include_brute)
        for bound, reason in rep.skipped.items():
            print(f"note: {net.name} {norm}: {bound} skipped: {reason}", file=sys.stderr)
        bad = rep.check_ordering()
        if bad:
            raise InvariantViolation(f"ordering violated: {bad}")
        rows += _report_rows(net.name, "dense", rep, args.timings)
    return rows


def _conv_report_rows(net, norms, approaches, args, include_brute=False):
    rows = []
    for approach in approaches:
        plan = lowering.lower_network(net, approach)
        pp = bounds_conv.PlanProducts(plan)
        for norm in norms:
            if norm == "l2":
                raise UnsupportedLayer("l2 bounds are not defined for conv plans")
            rep = bounds_conv.conv_bounds(plan, norm, products=pp, include_brute=include_brute)
            bad = rep.check_ordering()
            if bad:
                raise InvariantViolation(f"ordering violated: {bad}")
            rows += _report_rows(net.name, approach, rep, args.timings)
    return rows


def cmd_bounds(args) -> int:
    net = _load_net(args)
    norms = args.norm or ["linf"]
    if _is_dense(net):
        rows = _dense_report_rows(net, norms, args, include_brute=args.brute)
    else:
        approaches = (
            ["explicit", "implicit"] if args.approach == "both" else [args.approach]
        )
        rows = _conv_report_rows(net, norms, approaches, args, include_brute=args.brute)
    _emit_rows(rows, args)
    return EXIT_OK


def cmd_brute_force(args) -> int:
    net = _load_net(args)
    norms = args.norm or ["linf"]
    rows = []
    for norm in norms:
        if _is_dense(net):
            value = bounds_dense.brute_force_k(net, norm, neuron_cap=args.neuron_cap)
            rows.append({"model": net.name, "norm": norm, "approach": "dense",
                         "bound": "K", "value": value, "time_ms": "", "terms": 0})
        else:
            for approach in ["explicit", "implicit"]:
                plan = lowering.lower_network(net, approach)
                value = bounds_conv.brute_force_k_conv(plan, norm, cap=args.neuron_cap)
                rows.append({"model": net.name, "norm": norm, "approach": approach,
                             "bound": "K", "value": value, "time_ms": "", "terms": 0})
    _emit_rows(rows, args)
    return EXIT_OK


def cmd_lower(args) -> int:
    net = _load_net(args)
    plan = lowering.lower_network(net, args.approach)
    _write(args.out, lowering.plan_to_json(plan) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = _load_net(args)
    try:
        with open(args.inputs) as fh:
            inputs = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {args.inputs}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad inputs file: {exc}") from exc
    outputs = [netmodel.forward(net, np.asarray(x, dtype=float)).tolist() for x in inputs]
    _write(args.out, json.dumps(outputs) + "\n")
    return EXIT_OK


def _study_one(packed):
    seed, dims, norm = packed
    net = benchgen.build_random_net(dims, seed=seed)
    ks = bounds_dense.k_star(net, norm)
    vals = {
        "K": bounds_dense.brute_force_k(net, norm),
        "K1": bounds_dense.k1(net, norm),
        "K2": bounds_dense.k2(net, norm),
        "K3": bounds_dense.k3(net, norm),
        "K4": bounds_dense.k4(net, norm),
    }
    if not (vals["K"] <= vals["K4"] * (1 + 1e-9) + 1e-9 and vals["K4"] <= min(vals["K1"], vals["K3"]) * (1 + 1e-9) + 1e-9):
        raise InvariantViolation(f"ordering violated for seed {seed}")
    return seed, [vals[k] / ks for k in ("K", "K1", "K2", "K3", "K4")]


def cmd_study_random(args) -> int:
    dims = [int(d) for d in args.dims.split(",")]
    norm = args.norm[0] if args.norm else "linf"
    seeds = list(range(args.seed, args.seed + args.n))
    work = [(s, dims, norm) for s in seeds]
    threads = int(os.environ.get("LIPCERT_THREADS", "1"))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_study_one, work, chunksize=16))
    else:
        results = [_study_one(w) for w in work]
    results.sort(key=lambda r: r[0])
    table = np.array([r[1] for r in results])
    cols = ["K_over_Kstar", "K1_over_Kstar", "K2_over_Kstar", "K3_over_Kstar", "K4_over_Kstar"]
    lines = ["seed," + ",".join(cols) + "\n"]
    for (seed, ratios) in results:
        lines.append(f"{seed}," + ",".join(_fmt(v) for v in ratios) + "\n")
    for label, reduced in [
        ("maximum", table.max(axis=0)),
        ("average", table.mean(axis=0)),
        ("minimum", table.min(axis=0)),
        ("std", table.std(axis=0)),
    ]:
        lines.append(f"{label}," + ",".join(_fmt(v) for v in reduced) + "\n")
    _write(args.out, "".join(lines))
    return EXIT_OK


def cmd_growth(args) -> int:
    lo, hi = (int(v) for v in args.depths.split(":"))
    depths = list(range(lo, hi + 1))
    if len(depths) < 3:
        raise ParseError("depth range must cover at least 3 depths")
    norm = args.norm[0] if args.norm else "linf"
    series = {}
    for d in depths:
        if args.gen == "x2":
            net = benchgen.build_x2_net(d, args.variant or "symmetric")
        elif args.gen == "xy":
            net = benchgen.build_xy_net(d, args.variant or "hata")
        else:
            raise ParseError("growth supports --gen x2 or xy")
        pp = bounds_dense.PartialProducts(bounds_dense.dense_weights(net))
        values = {
            "K*": bounds_dense.k_star(net, norm),
            "K1": bounds_dense.k1(net, norm, products=pp),
            "K3": bounds_dense.k3(net, norm),
            "K4": bounds_dense.k4(net, norm, products=pp),
        }
        if args.k2:
            values["K2"] = bounds_dense.k2(net, norm)
        for k, v in values.items():
            series.setdefault(k, []).append(v)
    lines = ["series,bound,index,value,status\n"]
    for bound, vals in series.items():
        for d, v in zip(depths, vals):
            lines.append(f"K,{bound},{d},{_fmt(v)},ok\n")
    for bound, vals in series.items():
        try:
            rates = benchgen.growth_rate(vals)
            for d, g in zip(depths, rates):
                lines.append(f"G,{bound},{d},{_fmt(g)},ok\n")
        except DegenerateSeries:
            lines.append(f"G,{bound},{depths[0]},,degenerate\n")
    _write(args.out, "".join(lines))
    return EXIT_OK


def cmd_compare_cnn(args) -> int:
    if args.net:
        net = _load_net(args)
    else:
        if args.model is None:
            raise ParseError("--model or --net is required")
        net = benchgen.build_mnist_cnn(args.model, seed=args.seed)
    rows = _conv_report_rows(net, ["l1", "linf"], ["explicit", "implicit"], args)
    _emit_rows(rows, args)
    return EXIT_OK


def cmd_gen(args) -> int:
    net = _generate(args)
    _write(args.out, netmodel.dump(net) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lipcert",
                                 description="Certified Lipschitz bounds for ReLU networks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="compute bound report for a network")
    _add_gen_args(p)
    _add_report_args(p)
    p.add_argument("--norm", action="append", choices=NORMS)
    p.add_argument("--brute", action="store_true", help="include brute-force K")
    p.add_argument("--approach", choices=["explicit", "implicit", "both"], default="both")
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("brute-force", help="exact corner-enumeration K")
    _add_gen_args(p)
    _add_report_args(p)
    p.add_argument("--norm", action="append", choices=NORMS)
    p.add_argument("--neuron-cap", type=int, default=22)
    p.set_defaults(fn=cmd_brute_force)

    p = sub.add_parser("lower", help="dump a lowered plan as JSON")
    _add_gen_args(p)
    p.add_argument("--approach", choices=["explicit", "implicit"], default="explicit")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_lower)

    p = sub.add_parser("eval", help="evaluate a network on inputs from a JSON file")
    _add_gen_args(p)
    p.add_argument("--inputs", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("study-random", help="bound-ratio statistics over random nets")
    p.add_argument("--dims", default="8,10,6,3")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--norm", action="append", choices=NORMS)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_study_random)

    p = sub.add_parser("growth", help="bound series and growth rates over depth")
    p.add_argument("--gen", choices=["x2", "xy"], required=True)
    p.add_argument("--variant")
    p.add_argument("--depths", default="1:6", help="inclusive range lo:hi")
    p.add_argument("--norm", action="append", choices=NORMS)
    p.add_argument("--k2", action="store_true", help="include K2 (width-capped)")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_growth)

    p = sub.add_parser("compare-cnn", help="2 approaches x 2 norms x 4 bounds grid")
    p.add_argument("--model", choices=["A", "B", "C"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--net", help="use an imported interchange net instead")
    _add_report_args(p)
    p.set_defaults(fn=cmd_compare_cnn)

    p = sub.add_parser("gen", help="emit a benchmark net as interchange JSON")
    _add_gen_args(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gen)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (DepthTooLarge, WidthTooLarge, TooManyNeurons) as exc:
        print(f"error: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except InvariantViolation as exc:
        print(f"error: internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ParseError, UnknownLayerKind, ShapeMismatch, UnsupportedLayer, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LipcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
