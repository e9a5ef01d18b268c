"""End-to-end orchestration shared by the command line and the tests."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import bayes, faults, ingest, ordering, region, thermal
from .errors import (
    DegenerateDesign,
    InputError,
    MissingFile,
    MissingLocation,
    MissingPosterior,
    NonConvergence,
    Unfittable,
)
from .ordering import RANKED_PARAMS, BucketSpec

POSTERIOR_DIR = "posteriors"


def _atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def prepared_series(ds: ingest.Dataset, b: ingest.BuildingRecord) -> ingest.AlignedSeries:
    """Area-normalized energy aligned with weather."""
    series = ds.energy.get(b.id)
    if series is None:
        raise Unfittable(f"{b.id}: no energy data")
    return ingest.align(ingest.normalize_by_area(series, b), ds.weather)


# --------------------------------------------------------------------------
# fitting


@dataclass
class FitResult:
    building_id: str
    samples: bayes.PosteriorSamples | None = None
    error: str | None = None


def _fit_one(args):
    aligned, priors, cfg = args
    try:
        return FitResult(aligned.building_id, bayes.sample_posterior(aligned, priors, cfg))
    except Unfittable as e:
        return FitResult(aligned.building_id, None, str(e))


def fit_dataset(ds, outdir, config: bayes.SamplerConfig, priors=bayes.PriorSpec(), jobs=1, strict=False):
    """Sample every building's posterior and write one CSV + JSON pair each.

    Per-building seeds are derived from ``config.seed`` and the building id,
    so results do not depend on ``jobs`` or on scheduling order.
    """
    out = Path(outdir)
    tasks, summary = [], {}
    for b in sorted(ds.buildings, key=lambda b: b.id):
        try:
            aligned = prepared_series(ds, b)
        except InputError as e:
            summary[b.id] = {"status": "skipped", "reason": str(e)}
            continue
        cfg = bayes.SamplerConfig(
            bayes.derive_seed(config.seed, b.id),
            config.chains,
            config.burn_in,
            config.draws,
            config.min_days,
            config.rhat_max,
            config.max_rounds,
        )
        tasks.append((aligned, priors, cfg))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, tasks))
    else:
        results = [_fit_one(t) for t in tasks]
    bad = []
    for (aligned, _, cfg), r in zip(tasks, results):
        if r.samples is None:
            summary[r.building_id] = {"status": "skipped", "reason": r.error}
            continue
        s = r.samples
        s.write(out / POSTERIOR_DIR / f"{r.building_id}.csv")
        summary[r.building_id] = {
            "status": "ok" if s.converged else "not_converged",
            "max_r_hat": s.max_rhat,
            "rounds": s.rounds,
            "days": len(aligned),
            "coverage": aligned.coverage,
            "seed": cfg.seed,
        }
        if not s.converged:
            bad.append(r.building_id)
    _atomic(out / "fit_summary.json", _dumps(_clean(summary)))
    if strict and bad:
        raise NonConvergence(f"r_hat above {config.rhat_max} for: {', '.join(bad)}")
    return summary


def load_posteriors(outdir, ids):
    d = Path(outdir) / POSTERIOR_DIR
    out = {}
    for bid in ids:
        p = d / f"{bid}.csv"
        if not p.is_file():
            raise MissingPosterior(f"no posterior for {bid!r} under {d}")
        out[bid] = bayes.PosteriorSamples.read(p)
    return out


def fitted_ids(outdir):
    d = Path(outdir) / POSTERIOR_DIR
    return sorted(p.stem for p in d.glob("*.csv")) if d.is_dir() else []


# --------------------------------------------------------------------------
# flagging


@dataclass
class FlagRun:
    mode: str
    reports: list
    counts: list = field(default_factory=list)
    groups: list = field(default_factory=list)
    regions: list = field(default_factory=list)


def _ecdfs(samples):
    return {p: bayes.ecdf(samples, p) for p in RANKED_PARAMS}


def flag_individual(ds, posteriors, sens=faults.Sensitivity(), buckets=BucketSpec(), ecdfs=None):
    """Cohort mode: all-pairs dominance within each peer group.

    Homes in discarded (too small) groups get no report.
    """
    members = [b for b in ds.buildings if b.id in posteriors]
    groups = ordering.make_peer_groups(members, buckets)
    ecdfs = ecdfs if ecdfs is not None else {bid: _ecdfs(s) for bid, s in posteriors.items()}
    reports, all_counts = [], []
    for g in groups:
        if g.discarded:
            continue
        counts = ordering.dominance_counts(g, ecdfs)
        all_counts.append(counts)
        bp = {bid: bayes.balance_point_means(posteriors[bid]) for bid in g.member_ids}
        flags = faults.flag_cohort(g, counts, bp, sens)
        need = faults.win_threshold(sens.tau, len(g))
        for bid in g.member_ids:
            ev = {
                "mode": "individual",
                "group": g.label,
                "group_size": len(g),
                "wins_needed": need,
                "wins": {p: counts.wins(p, bid) for p in counts.counts},
                "t_heat_mean": bp[bid][0],
                "t_cool_mean": bp[bid][1],
            }
            reports.append(faults.root_cause(flags[bid], building_id=bid, evidence=ev))
    return FlagRun("individual", reports, all_counts, groups)


def flag_regional(ds, posteriors, sens=faults.Sensitivity(), buckets=BucketSpec(), min_cohort=20,
                  match_attributes=True, ecdfs=None):
    """Region mode: each home against a KDE of its spatial cohort's annual records."""
    if ds.annual is None:
        raise MissingFile("region mode needs annual records (annual.csv)")
    pool = [b for b in ds.buildings if b.id in ds.annual]
    index = region.spatial_index(pool)
    ecdfs = ecdfs if ecdfs is not None else {bid: _ecdfs(s) for bid, s in posteriors.items()}
    cache, regions, reports = {}, [], []
    for b in sorted(ds.buildings, key=lambda b: b.id):
        if b.id not in posteriors:
            continue
        if b.location is None:
            raise MissingLocation(f"building {b.id!r} has no location")
        q = region.RegionQuery(
            b.location,
            buckets.key(b) if match_attributes else None,
            min_cohort,
            buckets,
        )
        found = region.search_cohort(index, q)
        key = tuple(sorted(m.id for m in found.members))
        if key not in cache:
            cache[key] = len(regions)
            regions.append(region.region_distribution(found.members, ds.annual, ds.weather, min_cohort))
        rd = regions[cache[key]]
        bp = bayes.balance_point_means(posteriors[b.id])
        flags = faults.flag_region(ecdfs[b.id], bp, rd, sens)
        ev = {
            "mode": "region",
            "region": cache[key],
            "region_size": len(rd.member_ids),
            "doublings": found.doublings,
            "t_heat_mean": bp[0],
            "t_cool_mean": bp[1],
        }
        reports.append(faults.root_cause(flags, building_id=b.id, evidence=ev))
    return FlagRun("region", reports, regions=regions)


def write_flag_outputs(run: FlagRun, ds, outdir, sens, cell_m=100.0):
    out = Path(outdir)
    meta = {"mode": run.mode, "tau": sens.tau, "t_heat_threshold": sens.t_heat_threshold,
            "t_cool_threshold": sens.t_cool_threshold}
    _atomic(out / "reports.json", faults.reports_json_text(run.reports, meta))
    _atomic(out / "report.txt", faults.reports_text(run.reports, f"mode: {run.mode}, tau: {sens.tau}"))
    if run.mode == "individual":
        _atomic(out / "counts.csv", ordering.counts_csv_text(run.counts))
        groups = [{"key": list(g.key), "members": list(g.member_ids), "discarded": g.discarded} for g in run.groups]
        _atomic(out / "groups.json", _dumps(groups))
    else:
        for k, rd in enumerate(run.regions):
            _atomic(out / "regions" / f"region_{k:03d}.json", _dumps(_clean(rd.to_dict())))
    by_id = {r.building_id: r for r in run.reports}
    # grid statistics need every reported home to have a location
    if all(b.location is not None for b in ds.buildings if b.id in by_id):
        cells = faults.grid_aggregate(ds.buildings, by_id, cell_m)
        _atomic(out / "grid.csv", faults.grid_csv_text(cells))


# --------------------------------------------------------------------------
# baselines


BASELINE_HEADER = ("building_id", "method", "status") + thermal.PARAM_NAMES + (
    "err_heating_pct", "err_cooling_pct", "err_baseload_pct")


def baseline_table(ds, truth=None, posteriors=None):
    """LS-65F and LS-Range fits (and the Bayesian mean, if given) with split errors.

    ``truth`` maps building id to a per-sq.ft. ParamPoint. Returns rows of
    dicts and a summary of median baseload errors per method.
    """
    rows = []
    for b in sorted(ds.buildings, key=lambda b: b.id):
        try:
            aligned = prepared_series(ds, b)
        except InputError as e:
            rows.append({"building_id": b.id, "method": "-", "status": f"skipped: {e}"})
            continue
        fits = {}
        for name, fn in (("ls65", thermal.fit_ls_65), ("ls_range", thermal.fit_ls_range)):
            try:
                fits[name] = fn(aligned)
            except DegenerateDesign as e:
                fits[name] = e
        if posteriors is not None and b.id in posteriors:
            fits["bayes"] = posteriors[b.id].mean_point()
        true_split = thermal.energy_split(truth[b.id], aligned) if truth and b.id in truth else None
        for name, p in fits.items():
            row = {"building_id": b.id, "method": name}
            if isinstance(p, Exception):
                row["status"] = f"DegenerateDesign: {p}"
                rows.append(row)
                continue
            row["status"] = "ok"
            row.update(p.to_dict())
            if true_split is not None:
                err = thermal.split_percent_error(thermal.energy_split(p, aligned), true_split)
                row.update({f"err_{k}_pct": err[k] for k in ("heating", "cooling", "baseload")})
            rows.append(row)
    summary = {}
    for m in ("ls65", "ls_range", "bayes"):
        errs = [r["err_baseload_pct"] for r in rows if r.get("method") == m and r.get("err_baseload_pct") is not None
                and math.isfinite(r["err_baseload_pct"])]
        if errs:
            summary[m] = {"median_baseload_err_pct": statistics.median(errs), "n": len(errs)}
    return rows, summary


def baseline_csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BASELINE_HEADER)
    for r in rows:
        vals = []
        for k in BASELINE_HEADER:
            v = r.get(k)
            vals.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
        w.writerow(vals)
    return buf.getvalue()
