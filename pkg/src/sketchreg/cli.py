"""Command line entry point: ``sketchreg <command> [options]``.

Options may also come from a ``key=value`` config file (``--config``);
options given on the command line take precedence.  Keys are option names
without the leading dashes (``block-rows`` and ``block_rows`` both work).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench, passio
from .errors import SketchRegError
from .leverage import approx_leverage, exact_leverage, leverage_quality
from .linalg import as_dense
from .matrixgen import gen_family, write_instance
from .precond import lsrn_precond, precond_quality, sketch_precond
from .randstream import as_seedspec, resolve_master_seed
from .sketch import SketchOperator, canonical_variant, embedding_dim_default
from .solve_l1 import L1Config, best_of, solve_l1_exact, solve_l1_low_precision
from .solve_l2 import (SolverConfig, direct_solve, lsrn_solve, plain_lsqr, preconditioned_solve,
                       sample_and_solve_l2, sketch_and_solve_l2)

L2_METHODS = ("sketch", "lsqr", "cs", "lsrn", "samp-appr", "samp-unif", "samp-exact", "precond-lsqr",
              "precond-cs", "lsrn-lsqr", "lsrn-cs", "direct")


def _s_arg(v):
    return v if v == "auto" else int(float(v))


def read_config(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{no}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # subcommands suppress defaults so options placed before the command survive
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--seed", type=int, default=d(None), help="master seed (else $SKETCHREG_SEED, else built-in)")
    g.add_argument("--threads", type=int, default=d(None), help="worker threads for passes")
    g.add_argument("--block-rows", type=int, default=d(None), help="rows per worker task")
    g.add_argument("--config", default=d(None), help="key=value file; command line wins")
    g.add_argument("--deterministic", action="store_true", default=d(False), help="zero wall times in reports")
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sketchreg", description="Randomized l2 and l1 regression.",
                                parents=[_global_options(False)])
    common = _global_options(True)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("gen", parents=[common], help="generate a test instance")
    q.add_argument("--family", default="NB", choices=("UG", "UB", "NG", "NB"))
    q.add_argument("--m", type=int, default=20000)
    q.add_argument("--n", type=int, default=100)
    q.add_argument("--kappa", type=float, default=None)
    q.add_argument("--norm", default="l2", choices=("l2", "l1"))
    q.add_argument("--repnum", type=int, default=1)
    q.add_argument("--stack", default="none", choices=("none", "STACK1", "STACK2"))
    q.add_argument("--out", required=True, help="A as .rnla or .csv")
    q.add_argument("--rhs", required=True, help="b as .rnla or .csv")
    q.add_argument("--meta", default=None, help="JSON with x_star, f_star and generator details")

    q = sub.add_parser("sketch", parents=[common], help="apply a sketch to a matrix")
    q.add_argument("--variant", default="gaussian")
    q.add_argument("--s", type=_s_arg, default="auto")
    q.add_argument("--eps", type=float, default=0.5)
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--out", required=True)

    q = sub.add_parser("lev", parents=[common], help="leverage scores")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--method", default="approx", choices=("approx", "exact"))
    q.add_argument("--proj1", default=None, help="variant of the first projection")
    q.add_argument("--c1", type=int, default=None, help="rows of the first projection")
    q.add_argument("--r2", default="auto")
    q.add_argument("--out", default=None, help="write scores (.csv or .rnla)")
    q.add_argument("--quality", action="store_true", help="compare with exact scores")

    q = sub.add_parser("precond-quality", parents=[common], help="cond2(A N) for a preconditioner")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--variant", default="gaussian")
    q.add_argument("--s", type=_s_arg, default="auto")
    q.add_argument("--lsrn", action="store_true", help="LSRN (unscaled Gaussian, SVD) preconditioner")
    q.add_argument("--gamma", type=float, default=2.0)

    q = sub.add_parser("solve-l2", parents=[common], help="least squares")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--rhs", required=True)
    q.add_argument("--method", default="lsqr", choices=L2_METHODS,
                   help="lsqr/cs precondition with --variant (lsqr with --variant none is unpreconditioned)")
    q.add_argument("--variant", default="gaussian")
    q.add_argument("--iterative", default="lsqr", choices=("lsqr", "cs"), help="inner solver for --method lsrn")
    q.add_argument("--s", type=_s_arg, default="auto")
    q.add_argument("--eps", type=float, default=0.5)
    q.add_argument("--gamma", type=float, default=2.0)
    q.add_argument("--tol", type=float, default=1e-14)
    q.add_argument("--max-iters", type=int, default=500)
    q.add_argument("--meta", default=None, help="JSON with x_star and f_star for error reporting")
    q.add_argument("--report", default=None)
    q.add_argument("--solution", default=None, help="write x_hat (.csv or .rnla)")

    q = sub.add_parser("solve-l1", parents=[common], help="least absolute deviations")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--rhs", required=True)
    q.add_argument("--variant", default="spct")
    q.add_argument("--s", type=_s_arg, default="auto")
    q.add_argument("--s-cond", type=_s_arg, default="auto")
    q.add_argument("--queries", type=int, default=1)
    q.add_argument("--fast", action="store_true", help="Gaussian row-norm estimates")
    q.add_argument("--normalization", default="theorem", choices=("theorem", "mapper"))
    q.add_argument("--exact", action="store_true", help="interior-point oracle on the full problem")
    q.add_argument("--meta", default=None)
    q.add_argument("--report", default=None)
    q.add_argument("--solution", default=None)

    q = sub.add_parser("bench", parents=[common], help="run a figure plan")
    q.add_argument("--plan", default="fig3", choices=tuple(bench.PLANS))
    q.add_argument("--trials", type=int, default=None)
    q.add_argument("--m", type=int, default=None)
    q.add_argument("--d", type=int, default=None)
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("--out", required=True, help="output directory")

    q = sub.add_parser("report", parents=[common], help="rebuild panel CSVs from a JSON-lines report")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--out", required=True, help="output directory")
    return p


def _explicit_dests(parser: argparse.ArgumentParser, argv) -> set:
    opts = {}
    stack = [parser]
    while stack:
        pr = stack.pop()
        for act in pr._actions:
            for o in act.option_strings:
                opts[o] = act.dest
            if isinstance(act, argparse._SubParsersAction):
                stack.extend(act.choices.values())
    return {opts[a.split("=", 1)[0]] for a in argv if a.split("=", 1)[0] in opts}


def _action_types(parser, command) -> dict:
    sp = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    types = {}
    for act in sp._actions:
        if isinstance(act, argparse._StoreTrueAction):
            types[act.dest] = lambda v: v.lower() in ("1", "true", "yes", "on")
        elif act.option_strings:
            types[act.dest] = act.type or str
    return types


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        explicit = _explicit_dests(parser, argv)
        types = _action_types(parser, args.command)
        for k, v in read_config(args.config).items():
            if k not in types:
                parser.error(f"unknown config key {k!r} for {args.command}")
            if k not in explicit:
                setattr(args, k, types[k](v))
    return args


def _load_meta(path):
    if not path:
        return None, None
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    x = meta.get("x_star")
    return (None if x is None else np.asarray(x, dtype=np.float64)), meta.get("f_star")


def _write_json(path, obj):
    text = json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _record(rep, args, extra=None):
    rec = rep.to_record(args.deterministic)
    rec.update(extra or {})
    return rec


def _cmd_gen(args, seed):
    inst = gen_family(args.family, args.m, args.n, seed, args.norm, args.kappa)
    x, f = write_instance(inst, args.out, args.rhs, args.repnum, args.stack)
    meta = {"family": inst.family, "m": args.m * (args.repnum if args.stack != "none" else 1), "n": args.n,
            "kappa_target": inst.kappa_target, "norm": inst.norm, "repnum": args.repnum, "stack": args.stack,
            "seed": seed.master_seed, "f_star": float(f), "x_star": [float(v) for v in x],
            "mass_fraction": inst.mass_fraction if args.stack == "none" else None,
            "generator": {k: v for k, v in inst.meta.items() if isinstance(v, (int, float, str))}}
    if args.meta:
        _write_json(args.meta, meta)
    else:
        _write_json(None, {k: v for k, v in meta.items() if k != "x_star"})
    return 0


def _cmd_sketch(args, seed):
    stream = passio.as_stream(passio.load_matrix(args.inp))
    m, n = stream.shape
    s = embedding_dim_default(args.variant, n, args.eps, m=m) if args.s == "auto" else args.s
    op = SketchOperator(args.variant, s, m, seed)
    passio.save_matrix(args.out, op.apply(stream))
    _write_json(None, {"variant": op.variant, "s": int(s), "m": m, "n": n, "passes": stream.ledger.passes})
    return 0


def _cmd_lev(args, seed):
    a = passio.load_matrix(args.inp)
    m, n = a.shape
    if args.method == "exact":
        est = exact_leverage(as_dense(np.asarray(a)))
    else:
        proj1 = None
        if args.proj1 or args.c1:
            variant = args.proj1 or "gaussian"
            proj1 = SketchOperator(variant, args.c1 or 10 * n, m, seed.spawn(7))
        r2 = args.r2 if args.r2 == "auto" else int(args.r2)
        est = approx_leverage(a, proj1=proj1, r2=r2, seed=seed)
    if args.out:
        passio.save_matrix(args.out, est.scores)
    out = {"method": args.method, "m": m, "n": n, "sum": float(est.scores.sum()), "coherence": est.coherence,
           "beta": est.beta}
    if args.quality:
        out["quality"] = leverage_quality(exact_leverage(as_dense(np.asarray(a))), est)
    _write_json(None, out)
    return 0


def _cmd_precond_quality(args, seed):
    a = passio.load_matrix(args.inp)
    m, n = a.shape
    if args.lsrn:
        pre = lsrn_precond(a, args.gamma, seed)
    else:
        s = 4 * n if args.s == "auto" else args.s
        pre = sketch_precond(a, args.variant, s, seed)
    k = precond_quality(np.asarray(a), pre)
    iv = pre.predicted_interval
    _write_json(None, {"kind": pre.kind, "source": {k2: v for k2, v in pre.source.items()
                                                   if isinstance(v, (int, float, str, bool))},
                       "cond2": k, "predicted_interval": None if iv is None else [iv[0], iv[1] if np.isfinite(iv[1]) else None]})
    return 0


def _load_problem(args):
    a = passio.load_matrix(args.inp)
    b = np.asarray(passio.load_matrix(args.rhs), dtype=np.float64).ravel()
    x, f = _load_meta(args.meta)
    return a, b, x, f


def _cmd_solve_l2(args, seed):
    a, b, x, f = _load_problem(args)
    inst = (a, b, x, f)
    cfg = SolverConfig(eps=args.eps, s=args.s, tol=args.tol, max_iters=args.max_iters,
                       raise_on_max_iters=False, gamma_oversample=args.gamma)
    meth = {"cs": "precond-cs", "lsrn": f"lsrn-{args.iterative}"}.get(args.method, args.method)
    if meth == "lsqr" and args.variant != "none":
        meth = "precond-lsqr"
    if meth == "sketch":
        m, n = a.shape
        s = embedding_dim_default(args.variant, n, args.eps, m=m) if args.s == "auto" else args.s
        if canonical_variant(args.variant) == "srdht":
            s = min(s, m)
        rep = sketch_and_solve_l2(inst, SketchOperator(args.variant, s, m, seed), cfg)
    elif meth.startswith("samp-"):
        scores = {"appr": "approx", "unif": "uniform", "exact": "exact"}[meth[5:]]
        rep = sample_and_solve_l2(inst, scores, None if args.s == "auto" else args.s, cfg, seed)
    elif meth.startswith("precond-"):
        rep = preconditioned_solve(inst, args.variant, args.s, meth[8:], cfg, seed)
    elif meth.startswith("lsrn-"):
        rep = lsrn_solve(inst, args.gamma, meth[5:], cfg, seed)
    elif meth == "lsqr":
        rep = plain_lsqr(inst, cfg)
    else:
        rep = direct_solve(inst)
    if args.solution:
        passio.save_matrix(args.solution, rep.x_hat)
    _write_json(args.report, _record(rep, args, {"f_hat": rep.f_hat}))
    return 0


def _cmd_solve_l1(args, seed):
    a, b, x, f = _load_problem(args)
    inst = (a, b, x, f)
    if args.exact:
        rep = solve_l1_exact(inst)
        out = _record(rep, args, {"f_hat": rep.f_hat})
    else:
        cfg = L1Config(variant=args.variant, s=args.s, s_cond=args.s_cond, fast=args.fast,
                       normalization=args.normalization)
        reps = solve_l1_low_precision(inst, cfg, args.queries, seed)
        rep = best_of(reps)
        out = _record(rep, args, {"f_hat": rep.f_hat, "best_query": rep.extra["query"],
                                  "queries": [r.f_hat for r in reps], "s_theory": rep.extra.get("s_theory")})
    if args.solution:
        passio.save_matrix(args.solution, rep.x_hat)
    _write_json(args.report, out)
    return 0


def _cmd_bench(args, seed):
    kw = {"master_seed": seed.master_seed}
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.m is not None:
        kw["m"] = args.m
    if args.d is not None:
        kw["d_grid" if args.plan == "fig6" else "d"] = (args.d,) if args.plan == "fig6" else args.d
    plan = bench.PLANS[args.plan](**kw)
    recs = bench.run_plan(plan, args.out, deterministic=args.deterministic, workers=args.workers)
    failed = sum(r["status"] != "ok" for r in recs)
    _write_json(None, {"plan": plan.name, "records": len(recs), "failed": failed, "out": args.out})
    return 0


def _cmd_report(args, seed):
    header, recs = bench.read_records(args.inp)
    name = header.get("plan") or os.path.splitext(os.path.basename(args.inp))[0]
    paths = bench.emit_report(recs, args.out, name=name)
    _write_json(None, paths)
    return 0


COMMANDS = {"gen": _cmd_gen, "sketch": _cmd_sketch, "lev": _cmd_lev, "precond-quality": _cmd_precond_quality,
            "solve-l2": _cmd_solve_l2, "solve-l1": _cmd_solve_l1, "bench": _cmd_bench, "report": _cmd_report}


def main(argv=None) -> int:
    args = parse_args(argv)
    passio.set_threads(args.threads)
    passio.set_block_rows(args.block_rows)
    seed = as_seedspec(resolve_master_seed(args.seed))
    try:
        return COMMANDS[args.command](args, seed)
    except (SketchRegError, ValueError, OSError) as exc:
        print(f"sketchreg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
