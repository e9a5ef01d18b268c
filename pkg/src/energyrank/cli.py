"""Command line front end.

Subcommands::

    energyrank synth    --spec city.toml --out data/
    energyrank fit      --data data/ --out run/ --seed 1
    energyrank baseline --data data/ --out run/ [--truth data/ground_truth.json]
    energyrank flag     --data data/ --out run/ [--mode region] [--tau 0.9]
    energyrank report   --out run/ [--truth data/ground_truth.json]

Options may also come from a TOML file given with ``--config``; keys are the
long option names with dashes replaced by underscores, either at top level or
under a table named after the subcommand. Command line flags win.

Errors are printed to stderr as one JSON object and mapped to exit codes:
2 bad input, 3 convergence failure under ``--strict``, 4 cohort too small.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bayes, faults, ingest, pipeline, synth
from .errors import BadSpec, EnergyRankError, MissingFile, MissingPosterior, UsageError
from .ordering import BucketSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


def _data_args(p):
    p.add_argument("--data", help="directory holding buildings.csv, energy.csv, weather.csv [, annual.csv]")
    p.add_argument("--buildings", help="override path to buildings.csv")
    p.add_argument("--energy", help="override path to energy.csv")
    p.add_argument("--weather", help="override path to weather.csv")
    p.add_argument("--annual", help="override path to annual.csv")
    p.add_argument("--out", required=True, help="output directory")


class _Parser(argparse.ArgumentParser):
    """Raise instead of printing usage text, so errors stay machine readable."""

    def error(self, message):
        raise UsageError(message)


def build_parser():
    ap = _Parser(prog="energyrank", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", help="TOML file with default option values")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic city with ground truth")
    p.add_argument("--spec", required=True, help="TOML spec file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--annual", action="store_true", help="also write annual.csv")

    p = sub.add_parser("fit", help="sample per-building posteriors")
    _data_args(p)
    p.add_argument("--seed", type=int, required=False)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--draws", type=int, default=2000)
    p.add_argument("--min-days", type=int, default=300)
    p.add_argument("--max-rounds", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="exit 3 if any building fails to converge")

    p = sub.add_parser("baseline", help="least-squares baselines and split errors")
    _data_args(p)
    p.add_argument("--truth", help="ground_truth.json for split errors")
    p.add_argument("--posteriors", help="run directory with posteriors/ to add the Bayesian mean")

    p = sub.add_parser("flag", help="rank homes and report probable faults")
    _data_args(p)
    p.add_argument("--fit-dir", help="run directory holding posteriors/ (default: --out)")
    p.add_argument("--mode", choices=("individual", "region"), default="individual")
    p.add_argument("--tau", type=float, default=0.75)
    p.add_argument("--t-heat-threshold", type=float, default=70.0)
    p.add_argument("--t-cool-threshold", type=float, default=55.0)
    p.add_argument("--year-width", type=int, default=20)
    p.add_argument("--area-width", type=float, default=1000.0)
    p.add_argument("--min-cohort", type=int, default=20)
    p.add_argument("--any-attributes", action="store_true", help="region mode: ignore cohort attributes")
    p.add_argument("--cell-m", type=float, default=100.0)

    p = sub.add_parser("report", help="print the text report of a flag run")
    p.add_argument("--out", required=True, help="run directory holding reports.json")
    p.add_argument("--truth", help="ground_truth.json to score against")
    return ap


def _apply_config(ap, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    ns, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if a in COMMANDS), None)
    if not ns.config or command is None:
        return
    path = Path(ns.config)
    if not path.is_file():
        raise MissingFile(f"no such config file: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise BadSpec(f"{path}: {e}") from None
    flat = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    flat.update(doc.get(command, {}))
    subparsers = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    sp = subparsers.choices[command]
    known = {a.dest for a in sp._actions}
    unknown = set(flat) - known
    if unknown:
        raise BadSpec(f"{path}: unknown options {sorted(unknown)}")
    sp.set_defaults(**flat)
    for a in sp._actions:
        if a.dest in flat:
            a.required = False


def _dataset(args):
    if args.data is None and not (args.buildings and args.energy and args.weather):
        raise MissingFile("give --data or all of --buildings, --energy, --weather")
    return ingest.load_dataset(
        args.data, buildings=args.buildings, energy=args.energy, weather=args.weather, annual=args.annual
    )


def cmd_synth(args):
    spec = synth.SynthSpec.from_toml(args.spec)
    if args.seed is not None or args.annual:
        d = {k: getattr(spec, k) for k in spec.__dataclass_fields__}
        if args.seed is not None:
            d["seed"] = args.seed
        if args.annual:
            d["emit_annual"] = True
        spec = synth.SynthSpec(**d)
    paths = synth.write_dataset(synth.generate(spec), args.out)
    print(f"wrote {len(paths)} files to {args.out}")


def cmd_fit(args):
    if args.seed is None:
        raise BadSpec("fit needs --seed (no entropy default)")
    ds = _dataset(args)
    try:
        cfg = bayes.SamplerConfig(args.seed, args.chains, args.burn_in, args.draws, args.min_days,
                                  max_rounds=args.max_rounds)
    except ValueError as e:
        raise BadSpec(str(e)) from None
    summary = pipeline.fit_dataset(ds, args.out, cfg, jobs=max(1, args.jobs), strict=args.strict)
    n_ok = sum(v["status"] == "ok" for v in summary.values())
    print(f"fitted {n_ok}/{len(summary)} buildings; see {Path(args.out) / 'fit_summary.json'}")


def cmd_baseline(args):
    ds = _dataset(args)
    truth = None
    if args.truth:
        if not Path(args.truth).is_file():
            raise MissingFile(f"no such file: {args.truth}")
        gt = synth.GroundTruth.read(args.truth)
        truth = {k: h.per_sqft for k, h in gt.homes.items()}
    posteriors = None
    if args.posteriors:
        ids = [i for i in pipeline.fitted_ids(args.posteriors) if any(b.id == i for b in ds.buildings)]
        posteriors = pipeline.load_posteriors(args.posteriors, ids)
    rows, summary = pipeline.baseline_table(ds, truth, posteriors)
    out = Path(args.out)
    pipeline._atomic(out / "baseline.csv", pipeline.baseline_csv_text(rows))
    pipeline._atomic(out / "baseline_summary.json", pipeline._dumps(pipeline._clean(summary)))
    print(json.dumps(pipeline._clean(summary), sort_keys=True))


def cmd_flag(args):
    ds = _dataset(args)
    fit_dir = args.fit_dir or args.out
    ids = [b.id for b in ds.buildings if b.id in set(pipeline.fitted_ids(fit_dir))]
    if not ids and ds.buildings:
        raise MissingPosterior(f"no posteriors under {Path(fit_dir) / pipeline.POSTERIOR_DIR}")
    posteriors = pipeline.load_posteriors(fit_dir, ids)
    try:
        sens = faults.Sensitivity(args.tau, args.t_heat_threshold, args.t_cool_threshold)
        buckets = BucketSpec(args.year_width, args.area_width, args.min_cohort)
    except ValueError as e:
        raise BadSpec(str(e)) from None
    if args.mode == "individual":
        run = pipeline.flag_individual(ds, posteriors, sens, buckets)
    else:
        run = pipeline.flag_regional(ds, posteriors, sens, buckets, args.min_cohort, not args.any_attributes)
    pipeline.write_flag_outputs(run, ds, args.out, sens, args.cell_m)
    n_bad = sum(r.inefficient for r in run.reports)
    print(f"{args.mode} mode: {n_bad}/{len(run.reports)} homes flagged; see {Path(args.out) / 'report.txt'}")


def cmd_report(args):
    path = Path(args.out) / "reports.json"
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    reports = faults.read_reports(path)
    sys.stdout.write(faults.reports_text(reports))
    if args.truth:
        if not Path(args.truth).is_file():
            raise MissingFile(f"no such file: {args.truth}")
        metrics = synth.score(reports, synth.GroundTruth.read(args.truth))
        print(json.dumps(pipeline._clean(metrics), indent=2, sort_keys=True))


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "baseline": cmd_baseline, "flag": cmd_flag, "report": cmd_report}


def main(argv=None):
    ap = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _apply_config(ap, argv)
        args = ap.parse_args(argv)
        COMMANDS[args.command](args)
    except EnergyRankError as e:
        print(json.dumps(e.to_dict(), sort_keys=True), file=sys.stderr)
        return e.exit_code
    except (ValueError, OSError) as e:
        # invariant violations raised while constructing records, unwritable outputs
        err = "InvalidInput" if isinstance(e, ValueError) else "IOError"
        print(json.dumps({"error": err, "message": str(e), "exit_code": 2}, sort_keys=True), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
