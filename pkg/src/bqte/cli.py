"""Command line interface: ``bqte estimate|tails|summary|simulate``.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 numeric or
validity-range error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from .data import impute_censored, load_csv, pool_trials, read_scenario_file
from .errors import BQTEError, ConfigError
from .estimator import EstimatorConfig, estimate_bqte, relative_curve
from .serialize import FORMATS, curve_to_dict, dumps, serialize_curve
from .simulation import default_battery, run_scenario, scenario_from_mapping
from .summary import summarize
from .tails import estimate_tail_curves

log = logging.getLogger("bqte")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _cutpoints(text):
    return None if text.upper() == "AUTO" else _positive_int(text)


def _add_analysis_args(p, with_grid=True):
    p.add_argument("--input", action="append", required=True, metavar="FILE",
                   help="trial CSV; repeat to pool several trials")
    p.add_argument("--bootstrap", type=_positive_int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=EstimatorConfig.seed)
    p.add_argument("--impute", default="censor", help="censor | fixed:V")
    p.add_argument("--workers", type=int, default=1, help="processes for bootstrap (0 = all CPUs)")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--strict-positive", action="store_true",
                   help="reject zero durations instead of warning")
    p.add_argument("--group-col", default="group")
    p.add_argument("--duration-col", default="duration")
    p.add_argument("--censored-col", default="censored")
    if with_grid:
        p.add_argument("--cutpoints", type=_cutpoints, default=None, help="AUTO or an integer")
        p.add_argument("--estimator", choices=("bagging", "direct", "doksum"), default="bagging")
        p.add_argument("--grid", default="observed", help="observed | uniform:N | list:x1,x2,...")
        p.add_argument("--scale", choices=("absolute", "relative", "both"), default="absolute")
        p.add_argument("--format", choices=FORMATS, default="csv")


def build_parser():
    parser = argparse.ArgumentParser(prog="bqte", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_analysis_args(sub.add_parser("estimate", help="BQTE curve with bootstrap intervals"))
    _add_analysis_args(sub.add_parser("tails", help="UTBQTE and LTBQTE curves"))
    p = sub.add_parser("summary", help="ATE and ratio of means")
    _add_analysis_args(p, with_grid=False)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p = sub.add_parser("simulate", help="Monte Carlo validation run")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="FILE")
    src.add_argument("--battery", action="store_true", help="run the built-in default battery")
    p.add_argument("--replications", type=_positive_int, help="override replication count")
    p.add_argument("--bootstrap", type=_positive_int, help="override bootstrap count")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", metavar="FILE")
    return parser


def _dataset(args):
    sets = [
        load_csv(path, group_col=args.group_col, duration_col=args.duration_col,
                 censored_col=args.censored_col, strict_positive=args.strict_positive)
        for path in args.input
    ]
    return impute_censored(pool_trials(sets), args.impute)


def _config(args):
    return EstimatorConfig(
        bootstrap_count=args.bootstrap,
        cutpoint_count=getattr(args, "cutpoints", None),
        alpha=args.alpha,
        estimator_kind=getattr(args, "estimator", "bagging"),
        seed=args.seed,
        grid_policy=getattr(args, "grid", "observed"),
    )


def _reference(dataset, curve):
    mc = dataset.control.values.mean()
    mt = dataset.treatment.values.mean()
    return mt / mc - 1 if curve.scale == "relative" else mt - mc


def _write(data: bytes, out):
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)


def _emit_curves(curves, dataset, args):
    if len(curves) == 1:
        c = curves[0]
        _write(serialize_curve(c, args.format, _reference(dataset, c)), args.out)
        return
    if args.out is not None:
        out = Path(args.out)
        for c in curves:
            path = out.with_name(f"{out.stem}.{c.curve_kind}-{c.scale}{out.suffix}")
            path.write_bytes(serialize_curve(c, args.format, _reference(dataset, c)))
            log.info("wrote %s", path)
        return
    if args.format == "json":
        doc = {"schema": "bqte.curve-bundle/v1", "curves": [curve_to_dict(c) for c in curves]}
        _write(dumps(doc).encode(), None)
    elif args.format == "csv":
        for c in curves:
            _write(f"# {c.curve_kind} {c.scale}\n".encode() + serialize_curve(c, "csv"), None)
    else:
        raise ConfigError("several SVG plots need --out")


def cmd_estimate(args):
    ds = _dataset(args)
    curve = estimate_bqte(ds, _config(args), workers=args.workers)
    curves = []
    if args.scale in ("absolute", "both"):
        curves.append(curve)
    if args.scale in ("relative", "both"):
        curves.append(relative_curve(curve))
    _emit_curves(curves, ds, args)


def cmd_tails(args):
    ds = _dataset(args)
    res = estimate_tail_curves(ds, _config(args), workers=args.workers,
                               relative=args.scale != "absolute")
    curves = []
    for kind in ("utbqte", "ltbqte"):
        if args.scale in ("absolute", "both"):
            curves.append(res[kind])
        if args.scale in ("relative", "both"):
            curves.append(res[kind + "_relative"])
    _emit_curves(curves, ds, args)


def cmd_summary(args):
    ds = _dataset(args)
    s = summarize(ds, _config(args), workers=args.workers)
    if args.format == "json":
        doc = {"schema": "bqte.summary/v1", "dataset": ds.trial_id,
               "n_control": len(ds.control), "n_treatment": len(ds.treatment), **s.as_dict()}
        _write(dumps(doc).encode(), args.out)
        return
    level = 100 * (1 - s.alpha)
    lines = [
        f"dataset            {ds.trial_id} (control n={len(ds.control)}, treatment n={len(ds.treatment)})",
        f"ATE                {s.ate:.3f}  {level:g}% CI [{s.ate_ci[0]:.3f}, {s.ate_ci[1]:.3f}]",
        f"RoM                {s.rom:.3f}  {level:g}% CI [{s.rom_ci[0]:.3f}, {s.rom_ci[1]:.3f}]",
        f"relative reduction {100 * s.relative_reduction:.1f}%  {level:g}% CI "
        f"[{100 * s.relative_reduction_ci[0]:.1f}%, {100 * s.relative_reduction_ci[1]:.1f}%]",
    ]
    _write(("\n".join(lines) + "\n").encode(), args.out)


def cmd_simulate(args):
    if args.battery:
        kw = {}
        if args.replications:
            kw["replications"] = args.replications
        if args.bootstrap:
            kw["bootstrap_count"] = args.bootstrap
        scenarios = default_battery(**kw)
    else:
        sections = read_scenario_file(args.scenario)
        scen = dict(sections["scenario"])
        est = dict(sections.get("estimator", {}))
        if args.replications:
            scen["replications"] = str(args.replications)
        if args.bootstrap:
            est["bootstrap"] = str(args.bootstrap)
        scenarios = [scenario_from_mapping(scen, est)]
    reports = []
    for sc in scenarios:
        rep = run_scenario(sc, workers=args.workers)
        log.info("%s finished in %.1f s", sc.name, rep.runtime_seconds)
        reports.append(rep.to_dict())
    doc = reports[0] if len(reports) == 1 else {"schema": "bqte.simulation-battery/v1",
                                                 "reports": reports}
    _write(dumps(doc).encode(), args.out)


COMMANDS = {"estimate": cmd_estimate, "tails": cmd_tails,
            "summary": cmd_summary, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            COMMANDS[args.command](args)
    except BQTEError as exc:
        print(f"bqte: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
