"""``enscal`` command line: calibrate, sweep, hist, synth.

Exit codes: 0 success, 2 configuration or usage, 3 data, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import reports
from .config import load_config
from .data import load_dataset, write_dataset
from .errors import ConfigError, EnscalError
from .harness import compare_methods, sweep_training_length
from .modelio import dump_model
from .synth import SCENARIOS, generate

log = logging.getLogger("enscal")


def _prepare(cfg_path, jobs, output_dir, require_sweep=False):
    cfg = load_config(cfg_path, require_sweep=require_sweep)
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg.jobs = jobs
    if output_dir is not None:
        cfg.output_dir = output_dir
    ds = load_dataset(cfg.data, variable_kind=cfg.variable_kind)
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg, ds


def _write_hists(out, name, result):
    edges, counts = result.pit_histogram(11)
    reports.write_csv(os.path.join(out, f"hist_pit_{name}.csv"), reports.HIST_COLUMNS,
                      reports.histogram_rows("pit", counts, edges))
    reports.write_csv(os.path.join(out, f"hist_rank_{name}.csv"), reports.HIST_COLUMNS,
                      reports.histogram_rows("rank", result.rank_histogram()))


def cmd_calibrate(args) -> int:
    cfg, ds = _prepare(args.config, args.jobs, args.output_dir)
    rows, results = compare_methods(ds, cfg.specs(), jobs=cfg.jobs, keep_models=True)
    out = cfg.output_dir
    reports.write_csv(os.path.join(out, "scores.csv"), reports.SCORE_COLUMNS,
                      [reports.score_row(name, r) for name, r in results.items()])
    cases = [row for name, r in results.items() for row in reports.case_rows(name, r)]
    reports.write_csv(os.path.join(out, "cases.csv"), reports.CASE_COLUMNS, cases)
    for name, r in results.items():
        _write_hists(out, name, r)
        if r.models:
            mdir = os.path.join(out, "models", name)
            os.makedirs(mdir, exist_ok=True)
            for target, train, model in r.models:
                with open(os.path.join(mdir, f"{target.isoformat()}.txt"), "w", encoding="utf-8") as fh:
                    fh.write(dump_model(model, target, train))
    for row in rows:
        d = row.as_dict()
        print(f"{d['method']}: CRPS {d['mean_crps']:.4f}  coverage {d['coverage_pct']:.1f}%  "
              f"KS p {d['ks_p']:.3g}  cases {d['n_cases']}")
    return 0


def cmd_sweep(args) -> int:
    cfg, ds = _prepare(args.config, args.jobs, args.output_dir, require_sweep=True)
    score_rows, argmin_rows = [], []
    for spec in cfg.specs():
        sw = sweep_training_length(ds, spec, jobs=cfg.jobs)
        for n in sw.lengths:
            score_rows.append(reports.score_row(spec.name, sw.results[n], length=n))
        for score, (n, v) in sw.argmin.items():
            argmin_rows.append({"method": spec.name, "score": score, "opt_length": n, "opt_value": v})
            print(f"{spec.name}: {score} minimal at length {n} ({v:.4f})")
    out = cfg.output_dir
    reports.write_csv(os.path.join(out, "scores.csv"), reports.SCORE_COLUMNS, score_rows)
    reports.write_csv(os.path.join(out, "argmin.csv"), ("method",) + reports.ARGMIN_COLUMNS, argmin_rows)
    return 0


def cmd_hist(args) -> int:
    _, rows = reports.read_csv(args.cases)
    if args.bins is not None and args.bins < 1:
        raise ConfigError("--bins must be >= 1")
    hist = reports.histogram_from_cases(rows, args.kind, args.bins)
    if args.output:
        reports.write_csv(args.output, reports.HIST_COLUMNS, hist)
    else:
        reports.write_rows(sys.stdout, reports.HIST_COLUMNS, hist)
    return 0


def _parse_params(items):
    params = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--param {key}: not a number: {value!r}") from None
    return params


def cmd_synth(args) -> int:
    from .synth import study_calendar

    params = _parse_params(args.param)
    dates = study_calendar() if args.calendar == "study" else None
    ds, truth = generate(args.scenario, seed=args.seed, n_dates=args.n_dates, n_stations=args.n_stations,
                         n_members=args.members, grouping=args.grouping, dates=dates, **params)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        write_dataset(ds, fh)
    info = {
        "scenario": truth.scenario,
        "seed": args.seed,
        "n_cases": len(ds),
        "grouping": truth.grouping.to_string(),
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in truth.params.items()},
        "mean_crps": truth.mean_crps,
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="enscal", description="Ensemble forecast calibration with BMA and EMOS.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (
        ("calibrate", cmd_calibrate, "rolling calibration of one or more methods"),
        ("sweep", cmd_sweep, "score a range of training lengths"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("-c", "--config", required=True, help="INI config with an [enscal] section")
        s.add_argument("-j", "--jobs", type=int, default=None, help="worker processes (default from config, 1)")
        s.add_argument("-o", "--output-dir", default=None, help="overrides output_dir and ENSCAL_OUTPUT_DIR")
        s.set_defaults(func=fn)

    h = sub.add_parser("hist", help="rank or PIT histogram from cases.csv")
    h.add_argument("cases")
    h.add_argument("--kind", choices=("rank", "pit"), required=True)
    h.add_argument("--bins", type=int, default=None,
                   help="PIT default 11; rank default n_members + 1")
    h.add_argument("-o", "--output", default=None, help="write here instead of stdout")
    h.set_defaults(func=cmd_hist)

    y = sub.add_parser("synth", help="synthetic dataset with a known generating model")
    y.add_argument("--scenario", choices=SCENARIOS, required=True)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--n-dates", type=int, default=300)
    y.add_argument("--n-stations", type=int, default=10)
    y.add_argument("--members", type=int, default=11)
    y.add_argument("--grouping", default="two_group",
                   help="two_group, three_group, exchangeable or explicit groups like '1|2-11'")
    y.add_argument("--calendar", choices=("daily", "study"), default="daily",
                   help="'study' uses 2012-04-01..2013-03-31 minus six missing days")
    y.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a generator parameter")
    y.add_argument("-o", "--output", required=True)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EnscalError as exc:
        print(f"enscal: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"enscal: numerical failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"enscal: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
