"""Command-line entry point.

Exit codes: 0 when every gate passes, 2 when a gate fails, 1 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_GATE = 0, 1, 2


def _cmd_run(args) -> int:
    from gedlab.harness import RunConfig, run_one

    cfg = RunConfig.load(args.config)
    s = run_one(cfg, args.seed, out_dir=args.out)
    if args.out is None:
        sys.stdout.write(s.csv_text)
    ok = s.lemmas_ok and s.violations_post_warmup == 0
    print(f"# seed={s.seed} cum_regret={s.cum_regret[-1]:.6g} violations_post_warmup={s.violations_post_warmup} "
          f"lemmas={'ok' if s.lemmas_ok else 'FAILED'} wall={s.wall_time:.2f}s", file=sys.stderr)
    return EXIT_OK if ok else EXIT_GATE


def _cmd_sweep(args) -> int:
    from gedlab.harness import RunConfig, run_sweep

    cfg = RunConfig.load(args.config)
    if args.seeds < 1:
        raise ValueError("--seeds must be >= 1")
    rep = run_sweep(cfg, range(cfg.seed, cfg.seed + args.seeds), out_dir=args.out)
    lo, hi = rep.violation_wilson
    print(f"runs={len(rep.summaries)} violation_fraction={rep.violation_fraction:.4f} wilson95=[{lo:.4f}, {hi:.4f}]")
    for t, c in rep.checkpoints.items():
        print(f"t={t} cum_regret={c['mean']:.4f}±{c['stderr']:.4f} per_round={c['per_round']:.4f}")
    print(f"regret/bound={rep.bound_ratio:.4g} lemmas={'ok' if rep.lemmas_ok else 'FAILED'}")
    return EXIT_OK if rep.gates_ok else EXIT_GATE


def _load_grid(path: str):
    from gedlab.eluder import ModelPairGrid
    from gedlab.models import FiniteDensityClass, GaussianLinearClass, class_from_config

    cls = class_from_config(json.loads(Path(path).read_text()))
    if isinstance(cls, FiniteDensityClass):
        if not cls.is_table:
            raise ValueError("the eluder command needs table members with a shared shape")
        return ModelPairGrid.from_finite_class(cls), cls.probs.shape[1] * cls.probs.shape[2]
    if isinstance(cls, GaussianLinearClass) and not hasattr(cls.theta_set, "lo"):
        return ModelPairGrid.from_gaussian(cls, cls.theta_set), None
    raise ValueError("the eluder command needs a finite class or a Gaussian class with a finite theta_set")


def _cmd_eluder(args) -> int:
    from gedlab.eluder import eluder_dim_greedy, verify_certificate

    grid, cap = _load_grid(args.cls)
    pool = [tuple(int(v) for v in p) for p in json.loads(Path(args.pool).read_text())]
    cert = eluder_dim_greedy(grid, pool, args.eps)
    sys.stdout.write(cert.to_text())
    ok = verify_certificate(grid, cert) and (cap is None or len(cert) <= cap)
    if cap is not None:
        print(f"# finite-space cap |X||A| = {cap}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_GATE


def _cmd_oracle_check(args) -> int:
    from gedlab.harness import ls_coverage, mle_coverage

    if args.trials < 1:
        raise ValueError("--trials must be >= 1")
    rep = mle_coverage(args.trials, seed=args.seed) if args.kind == "mle" else ls_coverage(args.trials, seed=args.seed)
    lo, hi = rep.wilson
    print(f"kind={rep.kind} trials={rep.trials} coverage={rep.coverage:.4f} wilson95=[{lo:.4f}, {hi:.4f}] "
          f"budget={rep.budget:.6g} worst={rep.worst:.6g}")
    return EXIT_OK if lo >= 0.85 else EXIT_GATE


def _cmd_lemmas(args) -> int:
    from gedlab.harness import lemma_report_from_csv

    rep = lemma_report_from_csv(Path(args.trajectory).read_text())
    ok = True
    for name, m in rep.items():
        good = m["lhs"] <= m["rhs"]
        ok &= good
        print(f"{name}: lhs={m['lhs']:.6g} rhs={m['rhs']:.6g} {'ok' if good else 'FAILED'}")
    return EXIT_OK if ok else EXIT_GATE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gedlab", description=__doc__.splitlines()[0])
    p.add_argument("--print-config", action="store_true", help="print the default run config and exit")
    sub = p.add_subparsers(dest="cmd")

    r = sub.add_parser("run", help="one seeded run; writes the trajectory CSV")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help="directory for run_<seed>.csv/json (default: CSV to stdout)")
    r.set_defaults(fn=_cmd_run)

    s = sub.add_parser("sweep", help="Monte-Carlo sweep over consecutive seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_sweep)

    e = sub.add_parser("eluder", help="greedy eluder certificate for a class over a point pool")
    e.add_argument("--class", dest="cls", required=True)
    e.add_argument("--eps", type=float, required=True)
    e.add_argument("--pool", required=True)
    e.set_defaults(fn=_cmd_eluder)

    o = sub.add_parser("oracle-check", help="coverage of the oracle error budget")
    o.add_argument("--kind", choices=["mle", "ls"], required=True)
    o.add_argument("--trials", type=int, default=500)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(fn=_cmd_oracle_check)

    lm = sub.add_parser("lemmas", help="re-check trajectory lemmas from a CSV")
    lm.add_argument("--trajectory", required=True)
    lm.set_defaults(fn=_cmd_lemmas)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    if args.print_config:
        from gedlab.harness import default_config_dict

        print(json.dumps(default_config_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.cmd is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"gedlab: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
