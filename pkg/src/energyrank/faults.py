"""Inefficiency flags, fault mapping and spatial aggregation."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyGroup, MissingLocation, MissingPosterior
from .ordering import RANKED_PARAMS, DominanceCounts, PeerGroup, ssd_dominates
from .region import EARTH_RADIUS_M, RegionDistribution

FLAG_NAMES = ("high_gamma_heat", "high_gamma_cool", "high_base", "high_t_heat", "low_t_cool")
PARAM_FLAG = {"gamma_heat": "high_gamma_heat", "gamma_cool": "high_gamma_cool", "base": "high_base"}


@dataclass(frozen=True)
class Sensitivity:
    tau: float = 0.75
    t_heat_threshold: float = 70.0
    t_cool_threshold: float = 55.0

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")


class Fault(str, enum.Enum):
    INEFFICIENT_HEATER = "InefficientHeater"
    INEFFICIENT_AC = "InefficientAC"
    POOR_BUILDING_ENVELOPE = "PoorBuildingEnvelope"
    HIGH_SET_POINT = "HighSetPoint"
    LOW_SET_POINT = "LowSetPoint"
    INEFFICIENT_APPLIANCES = "InefficientAppliances"


FAULT_MAP = {
    "high_gamma_heat": (Fault.INEFFICIENT_HEATER, Fault.POOR_BUILDING_ENVELOPE),
    "high_gamma_cool": (Fault.INEFFICIENT_AC, Fault.POOR_BUILDING_ENVELOPE),
    "high_t_heat": (Fault.HIGH_SET_POINT, Fault.POOR_BUILDING_ENVELOPE),
    "low_t_cool": (Fault.LOW_SET_POINT, Fault.POOR_BUILDING_ENVELOPE),
    "high_base": (Fault.INEFFICIENT_APPLIANCES,),
}


@dataclass(frozen=True)
class EfficiencyFlags:
    high_gamma_heat: bool = False
    high_gamma_cool: bool = False
    high_base: bool = False
    high_t_heat: bool = False
    low_t_cool: bool = False

    def true_flags(self):
        return [n for n in FLAG_NAMES if getattr(self, n)]

    def any(self):
        return any(getattr(self, n) for n in FLAG_NAMES)

    def to_dict(self):
        return asdict(self)


def win_threshold(tau: float, n: int) -> int:
    """Wins needed to be flagged in a group of ``n``: ``ceil(tau * (n - 1))``, at least 1.

    The product is rounded to 9 decimals first so that e.g. 0.7 * 10 does not
    become 7.000000000000001 and demand an extra win.
    """
    return max(1, math.ceil(round(tau * (n - 1), 9)))


def _bp_flags(t_heat, t_cool, s: Sensitivity):
    return t_heat > s.t_heat_threshold, t_cool < s.t_cool_threshold


def flag_cohort(group: PeerGroup, counts: DominanceCounts, bp_means, s: Sensitivity = Sensitivity()) -> dict:
    """Flag members dominating at least ``win_threshold`` peers on a parameter."""
    if len(group) == 0:
        raise EmptyGroup(f"group {group.key} has no members")
    need = win_threshold(s.tau, len(group))
    out = {}
    for bid in group.member_ids:
        if bid not in bp_means:
            raise MissingPosterior(f"no balance-point means for {bid!r}")
        th, tc = bp_means[bid]
        hot, cold = _bp_flags(th, tc, s)
        kw = {PARAM_FLAG[p]: counts.wins(p, bid) >= need for p in counts.counts}
        out[bid] = EfficiencyFlags(high_t_heat=hot, low_t_cool=cold, **kw)
    return out


def flag_region(candidate, bp_means, region: RegionDistribution, s: Sensitivity = Sensitivity()) -> EfficiencyFlags:
    """Flag a parameter when the candidate's ECDF dominates the region CDF.

    ``candidate`` maps param -> ParamECDF; ``bp_means`` is ``(t_heat, t_cool)``.
    """
    kw = {PARAM_FLAG[p]: ssd_dominates(candidate[p], region.cdfs[p]) for p in RANKED_PARAMS}
    hot, cold = _bp_flags(*bp_means, s)
    return EfficiencyFlags(high_t_heat=hot, low_t_cool=cold, **kw)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class FaultReport:
    building_id: str
    flags: EfficiencyFlags
    faults: tuple
    evidence: dict = field(default_factory=dict)

    @property
    def inefficient(self):
        return self.flags.any()

    def to_dict(self):
        return {
            "building_id": self.building_id,
            "flags": self.flags.to_dict(),
            "faults": [f.value for f in self.faults],
            "evidence": self.evidence,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["building_id"], EfficiencyFlags(**d["flags"]), tuple(Fault(f) for f in d["faults"]), d.get("evidence", {}))

    def text(self):
        lines = [f"== {self.building_id}"]
        lines.append("flags:  " + (", ".join(self.flags.true_flags()) or "none"))
        lines.append("faults: " + (", ".join(f.value for f in self.faults) or "none"))
        for k in sorted(self.evidence):
            lines.append(f"  {k}: {_fmt_evidence(self.evidence[k])}")
        return "\n".join(lines)


def _fmt_evidence(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, dict):
        return ", ".join(f"{k}={_fmt_evidence(x)}" for k, x in sorted(v.items()))
    return str(v)


def root_cause(flags: EfficiencyFlags, fault_map=FAULT_MAP, building_id: str = "", evidence=None) -> FaultReport:
    """Union of the mapped faults of every true flag, first occurrence order."""
    faults = []
    for name in flags.true_flags():
        for f in fault_map.get(name, ()):
            if f not in faults:
                faults.append(f)
    return FaultReport(building_id, flags, tuple(faults), dict(evidence or {}))


def reports_json_text(reports, meta=None) -> str:
    doc = {"reports": [r.to_dict() for r in sorted(reports, key=lambda r: r.building_id)]}
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def read_reports(path):
    doc = json.loads(Path(path).read_text())
    return [FaultReport.from_dict(d) for d in doc["reports"]]


def reports_text(reports, header="") -> str:
    reports = sorted(reports, key=lambda r: r.building_id)
    n_bad = sum(r.inefficient for r in reports)
    lines = [header] if header else []
    lines.append(f"{len(reports)} homes evaluated, {n_bad} flagged inefficient")
    lines.append("")
    for r in reports:
        lines.append(r.text())
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# spatial aggregation


@dataclass(frozen=True)
class GridCell:
    cell_x: int
    cell_y: int
    n: int
    frac_inefficient: float


def grid_aggregate(buildings, flags, cell_m: float = 100.0) -> list[GridCell]:
    """Bucket evaluated homes into ``cell_m`` square cells.

    Coordinates use an equirectangular projection scaled at the mean latitude
    of the evaluated homes, with the grid anchored at their south-west corner
    so cell ``(0, 0)`` holds the south-west-most home. Only buildings present in ``flags`` are counted; a flag
    value may be an EfficiencyFlags, a FaultReport or a plain bool.
    """
    if not cell_m > 0:
        raise ValueError("cell size must be positive")
    rows = []
    for b in buildings:
        if b.id not in flags:
            continue
        if b.location is None:
            raise MissingLocation(f"building {b.id!r} has no location")
        v = flags[b.id]
        bad = v.any() if isinstance(v, EfficiencyFlags) else (v.inefficient if isinstance(v, FaultReport) else bool(v))
        rows.append((b.location[0], b.location[1], bad))
    if not rows:
        return []
    lat = np.array([r[0] for r in rows])
    lon = np.array([r[1] for r in rows])
    bad = np.array([r[2] for r in rows])
    x = EARTH_RADIUS_M * np.radians(lon - lon.min()) * math.cos(math.radians(lat.mean()))
    y = EARTH_RADIUS_M * np.radians(lat - lat.min())
    cx = np.floor(x / cell_m).astype(int)
    cy = np.floor(y / cell_m).astype(int)
    cells = {}
    for i, j, f in zip(cx, cy, bad):
        n, k = cells.get((i, j), (0, 0))
        cells[(i, j)] = (n + 1, k + int(f))
    return [GridCell(int(i), int(j), n, k / n) for (i, j), (n, k) in sorted(cells.items())]


GRID_HEADER = ("cell_x", "cell_y", "n", "frac_inefficient")


def grid_csv_text(cells) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_HEADER)
    for c in cells:
        w.writerow((c.cell_x, c.cell_y, c.n, repr(float(c.frac_inefficient))))
    return buf.getvalue()
