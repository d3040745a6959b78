"""Command line entry points.

Subcommands: run (an experiment per config), oracle (quadrature reference),
rates (log-log slope fits from a records CSV), selftest (fast exact-case
checks), report (render figures from emitted CSVs). Exit codes: 0 success,
2 configuration problems, 3 numerical failures or failed checks.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, EllipticityError, InfeasibleError, SolverFailure
from .harness import (
    execute,
    fit_rate,
    load_config,
    read_records_csv,
    selftest,
)

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invert",
        description="Bayesian inversion benchmarks for an elliptic PDE: "
                    "plain, surrogate, and multilevel MCMC estimators.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the configured experiment")
    run_p.add_argument("config", help="path to a section.key = value file")
    run_p.add_argument("--method", choices=["plain", "gpc", "mlmcmc", "oracle"],
                       help="override run.method")
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry")
    run_p.add_argument("--out", help="output directory (default run.out_dir)")
    run_p.add_argument("--report", action="store_true",
                       help="also render figures from the emitted CSVs")

    ora_p = sub.add_parser("oracle", help="print the quadrature reference")
    ora_p.add_argument("config")
    ora_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE")
    ora_p.add_argument("--out", help="also write oracle outputs here")

    rate_p = sub.add_parser("rates", help="fit log2-log2 slopes from a CSV")
    rate_p.add_argument("csv", help="records CSV emitted by run")
    rate_p.add_argument("--x", default="flops", help="x field (default flops)")
    rate_p.add_argument("--y", default="error", help="y field (default error)")

    self_p = sub.add_parser("selftest", help="run fast deterministic checks")
    self_p.add_argument("--out", help="write selftest.csv to this directory")

    rep_p = sub.add_parser("report", help="render figures from CSVs")
    rep_p.add_argument("csvs", nargs="+", help="records or terms CSVs")
    rep_p.add_argument("--out", default="out", help="figure directory")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(args.overrides)
    result, written = execute(cfg, out_dir=args.out, method=args.method)
    for rec in result.records:
        print(f"{rec.method} resolution={rec.resolution} "
              f"estimate={rec.estimate:.8g} se={rec.se:.3g} "
              f"error={rec.error:.3g} flops={rec.flops:.4g}")
    for path in written:
        print(f"wrote {path}")
    if args.report:
        from .report import render_report

        csvs = [p for p in written if str(p).endswith(".csv")]
        for fig in render_report(csvs, args.out or cfg.get_str("run.out_dir", "out")):
            print(f"wrote {fig}")
    return 0


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config).with_overrides(args.overrides)
    if args.out is not None:
        result, written = execute(cfg, out_dir=args.out, method="oracle")
        for path in written:
            print(f"wrote {path}")
    else:
        from .harness import run_oracle

        result = run_oracle(cfg)
    summary = result.summary
    print(f"oracle value={summary['value']:.12g} "
          f"normalizer={summary['normalizer']:.12g} "
          f"(J={summary['n_active']}, level={summary['level']}, "
          f"order={summary['order']})")
    return 0


def _cmd_rates(args) -> int:
    records = read_records_csv(args.csv)
    by_method = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec)
    for method, recs in sorted(by_method.items()):
        try:
            slope, intercept, r2 = fit_rate(recs, args.x, args.y)
        except (ValueError, AttributeError) as exc:
            print(f"{method}: fit unavailable ({exc})")
            continue
        print(f"{method}: log2({args.y}) = {slope:.4f} * log2({args.x}) "
              f"+ {intercept:.4f}   r2={r2:.4f}")
    return 0


def _cmd_selftest(args) -> int:
    rows, all_passed = selftest(out_dir=args.out)
    for name, passed, detail in rows:
        status = "PASS" if passed else "FAIL"
        print(f"{status} {name}: {detail}")
    print(f"{sum(p for _, p, _ in rows)}/{len(rows)} checks passed")
    return 0 if all_passed else 3


def _cmd_report(args) -> int:
    from .report import render_report

    for fig in render_report(args.csvs, args.out):
        print(f"wrote {fig}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "oracle": _cmd_oracle,
    "rates": _cmd_rates,
    "selftest": _cmd_selftest,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, SolverFailure, EllipticityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
