"""Command-line front door.

Verbs: group, irreps, simulate, lumped, couple, bd, experiment. Every verb
takes --seed/--replicas/--out where meaningful; experiment configs can come
from a JSON file via --config with CLI flags overriding. The process exits
nonzero iff any checked bound is violated.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .birthdeath import bd_stationary, detailed_balance_residuals, hitting_moments
from .chain import CountChainBatch, sample_stationary_pair_counts, worst_case_start
from .coupling import coalescence_experiment, export_coalescence_csv, export_summary_json
from .errors import ProdRepError
from .experiments import RUNNERS, ExperimentConfig
from .groups import build_group, generates, minimal_generating_set
from .lumped import build_lumped, diag_start, export_tv_csv, mixing_time, tv_curve
from .reps import nontrivial_irreps
from .rng import stream
from .stats import value_counts


def _common(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--replicas", type=int, default=200)
    parser.add_argument("--out", default="results")
    parser.add_argument("--config", default=None, help="JSON experiment config")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="prodrep",
                                 description="product replacement chain toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("group", help="build and describe a group")
    p.add_argument("spec")
    _common(p)

    p = sub.add_parser("irreps", help="list validated irreducible representations")
    p.add_argument("spec")
    p.add_argument("--rep-file", default=None)
    _common(p)

    p = sub.add_parser("simulate", help="run projected count chains")
    p.add_argument("spec")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--steps", type=int, default=None)
    _common(p)

    p = sub.add_parser("lumped", help="exact TV curve of the pair-count chain")
    p.add_argument("spec")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("--eps", type=float, default=0.25)
    _common(p)

    p = sub.add_parser("couple", help="coalescence-time experiment")
    p.add_argument("spec")
    p.add_argument("--n", type=int, default=700)
    p.add_argument("--beta", type=float, default=25.0)
    p.add_argument("--r", type=float, default=2.0)
    _common(p)

    p = sub.add_parser("bd", help="birth-and-death hitting moments and bounds")
    p.add_argument("--n", type=int, default=100)
    _common(p)

    p = sub.add_parser("experiment", help="run a configured experiment")
    p.add_argument("name", choices=sorted(RUNNERS))
    p.add_argument("--group", default=None)
    p.add_argument("--n", type=int, action="append", default=None,
                   help="repeatable; overrides config n_values")
    _common(p)

    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except ProdRepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.verb == "group":
        g = build_group(args.spec)
        gens = minimal_generating_set(g)
        print(f"name: {g.name}")
        print(f"order: {g.order}")
        print(f"abelian: {g.is_abelian}")
        print(f"minimal generating set: {list(gens)}")
        subs = g.proper_subgroups
        print(f"proper subgroups: {len(subs)}")
        for s in subs:
            print(f"  size {s.size}: {list(s.elements())}")
        return 0

    if args.verb == "irreps":
        g = build_group(args.spec)
        rs = nontrivial_irreps(g, rep_file=args.rep_file)
        print(f"group {g.name}: {len(rs)} nontrivial irreps "
              f"(sum d^2 = {sum(r.dim ** 2 for r in rs)} = Q - 1)")
        for rep in rs:
            print(f"  {rep.label}: dim {rep.dim}")
        return 0

    if args.verb == "simulate":
        g = build_group(args.spec)
        n = args.n
        steps = args.steps or int(2 * n * math.log(n))
        rng = stream(args.seed, 0)
        start = value_counts(worst_case_start(g, n))
        batch = CountChainBatch(g, start, args.replicas, rng)
        for _ in range(steps):
            batch.step()
        vc = batch.counts[:, 0, :]
        dist = np.sqrt(((vc / n - 1 / g.order) ** 2).sum(axis=1))
        print(f"group {g.name}, n={n}, steps={steps}, replicas={args.replicas}")
        print(f"mean l2 distance of proportions to uniform: {dist.mean():.5f}")
        print(f"max: {dist.max():.5f}  (stationary scale ~ {1 / math.sqrt(n):.5f})")
        return 0

    if args.verb == "lumped":
        g = build_group(args.spec)
        n = args.n
        start = worst_case_start(g, n)
        chain = build_lumped(g, n, value_counts(start))
        t_max = args.t_max or int(2 * n * math.log(n)) + 8 * n
        curve = tv_curve(chain, diag_start(chain), t_max)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"tv_{g.name}_n{n}.csv"
        export_tv_csv(path, chain, curve)
        tmix = mixing_time(chain, diag_start(chain), args.eps)
        print(f"states: {len(chain.states)}  t_mix({args.eps}) = {tmix} "
              f"= {tmix / (n * math.log(n)):.4f} n ln n")
        print(f"curve written to {path}")
        return 0

    if args.verb == "couple":
        g = build_group(args.spec)
        n = args.n
        q = g.order
        rng0 = stream(args.seed, 10 ** 6)
        base = n // q
        rows = tuple(base + (1 if a < n % q else 0) for a in range(q))

        def sampler(rng):
            out = []
            while len(out) < 2:
                pc = sample_stationary_pair_counts(g, rows, rng)
                ok = all(
                    math.sqrt(((pc.counts[a] / rows[a] - 1 / q) ** 2).sum())
                    <= args.r / math.sqrt(n) for a in range(q))
                if ok:
                    out.append(pc)
            return out[0], out[1]

        res = coalescence_experiment(g, n, rows, args.r, args.beta,
                                     args.replicas, args.seed, sampler)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        export_coalescence_csv(out / f"coalescence_{g.name}_n{n}.csv", res)
        summary = res.summary()
        export_summary_json(out / f"coalescence_{g.name}_n{n}.json", summary)
        print(json.dumps(summary, indent=2))
        return 1 if summary["bound_violated"] else 0

    if args.verb == "bd":
        n = args.n
        hm = hitting_moments(n)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"bd_moments_n{n}.csv"
        with open(path, "w") as fh:
            fh.write("k,expectation,variance\n")
            for k in sorted(hm.expectations):
                fh.write(f"{k},{float(hm.expectations[k]):.17g},"
                         f"{float(hm.variances[k]):.17g}\n")
        total_e = float(hm.total_expectation())
        total_v = float(hm.total_variance())
        bal = max(abs(float(r)) for r in detailed_balance_residuals(min(n, 64)))
        ok = (total_e <= n * math.log(n) + n and total_v <= 110 * n * n
              and bal == 0.0)
        print(f"sum E = {total_e:.2f} (<= n ln n + n = {n * math.log(n) + n:.2f})")
        print(f"sum Var = {total_v:.2f} (<= 110 n^2 = {110 * n * n})")
        print(f"detailed balance residual: {bal}")
        print(f"table written to {path}")
        return 0 if ok else 1

    if args.verb == "experiment":
        cfg = (ExperimentConfig.from_json(args.config) if args.config
               else ExperimentConfig())
        if args.group:
            cfg.group = args.group
        if args.n:
            cfg.n_values = args.n
        cfg.seed = args.seed
        cfg.replicas = args.replicas
        cfg.out_dir = args.out
        summary = RUNNERS[args.name](cfg)
        print(json.dumps({k: v for k, v in summary.items() if k != "metadata"},
                         indent=2, default=str))
        return 1 if summary.get("bound_violations") else 0

    raise AssertionError("unhandled verb")


if __name__ == "__main__":
    sys.exit(main())
