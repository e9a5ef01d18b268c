"""Region mode: annual-record solver, KDE distributions and spatial cohorts."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .distributions import LINEAR, ParamECDF, point_mass
from .errors import (
    DegenerateData,
    InputError,
    InsufficientCohort,
    MissingLocation,
    ZeroArea,
    ZeroDegreeDays,
)
from .ordering import RANKED_PARAMS, BucketSpec
from .spatial import RTree
from .thermal import FIXED_BALANCE_POINT, ParamPoint

KDE_GRID = 512
DEGENERATE_REL = 1e-9
INITIAL_BOX_DEG = 0.05
EARTH_RADIUS_M = 6_371_008.8


def _temps(weather):
    return np.asarray(getattr(weather, "temps", weather), dtype=float)


def degree_days(weather, balance=FIXED_BALANCE_POINT):
    """Heating and cooling degree-day totals about ``balance``."""
    t = _temps(weather)
    return float(np.clip(balance - t, 0, None).sum()), float(np.clip(t - balance, 0, None).sum())


def solve_annual(rec, weather, area: float) -> ParamPoint:
    """Invert annual totals for the model with both balance points at 65 F.

    Returns area-normalized parameters; ``sigma`` is NaN (not identifiable
    from annual totals).
    """
    if not area > 0:
        raise ZeroArea(f"{rec.building_id}: floor area must be positive")
    t = _temps(weather)
    if len(t) == 0:
        raise ZeroDegreeDays(f"{rec.building_id}: empty weather series")
    hdd, cdd = degree_days(t)
    if rec.heating > 0 and hdd == 0:
        raise ZeroDegreeDays(f"{rec.building_id}: heating energy but no heating degree-days")
    if rec.cooling > 0 and cdd == 0:
        raise ZeroDegreeDays(f"{rec.building_id}: cooling energy but no cooling degree-days")
    gh = rec.heating / hdd if rec.heating > 0 else 0.0
    gc = rec.cooling / cdd if rec.cooling > 0 else 0.0
    base = max(rec.total - rec.heating - rec.cooling, 0.0) / len(t)
    return ParamPoint(base / area, gh / area, gc / area, FIXED_BALANCE_POINT, FIXED_BALANCE_POINT, math.nan)


# --------------------------------------------------------------------------
# kernel density estimate


def silverman_bandwidth(values) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n**(-1/5)``; falls back to sd when the IQR is 0."""
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * len(v) ** (-0.2)


def is_degenerate(values) -> bool:
    """True when the values agree up to round-off (relative spread <= 1e-9)."""
    v = np.asarray(values, dtype=float)
    return float(np.ptp(v)) <= DEGENERATE_REL * float(np.abs(v).max())


def build_kde_cdf(values, bandwidth: float | None = None, grid_size: int = KDE_GRID) -> ParamECDF:
    """CDF of a Gaussian-kernel density estimate, tabulated on a grid.

    The grid spans ``[min - 3h, max + 3h]``. Tabulated values are rescaled so
    that the first grid point maps to 0 and the last to 1; the mass lost to
    the truncated tails is below 0.0014. Input that is identical up to
    round-off yields a point mass at the mean and a ``DegenerateData``
    warning.
    """
    v = np.asarray(values, dtype=float).ravel()
    if len(v) == 0 or not np.all(np.isfinite(v)):
        raise ValueError("KDE needs finite values")
    if is_degenerate(v):
        warnings.warn(f"all {len(v)} values equal {v.mean()!r}; using a point mass", DegenerateData, stacklevel=2)
        return point_mass(float(v.mean()))
    h = silverman_bandwidth(v) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    grid = np.linspace(v.min() - 3 * h, v.max() + 3 * h, grid_size)
    cdf = np.empty(grid_size)
    for start in range(0, grid_size, 64):
        blk = grid[start : start + 64]
        cdf[start : start + 64] = ndtr((blk[:, None] - v[None, :]) / h).mean(axis=1)
    cdf = (cdf - cdf[0]) / (cdf[-1] - cdf[0])
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    cdf[-1] = 1.0
    return ParamECDF(grid, cdf, LINEAR)


# --------------------------------------------------------------------------
# spatial index and cohorts


class SpatialIndex:
    """R-tree over building locations (longitude on x, latitude on y)."""

    def __init__(self, buildings):
        self.tree = RTree()
        self.buildings = {}
        for b in buildings:
            if b.location is None:
                raise MissingLocation(f"building {b.id!r} has no location")
            lat, lon = b.location
            self.tree.insert_point(b.id, lon, lat)
            self.buildings[b.id] = b

    def __len__(self):
        return len(self.buildings)

    def query(self, lat_min, lon_min, lat_max, lon_max):
        """Ids inside the closed box, sorted."""
        return self.tree.search((lon_min, lat_min, lon_max, lat_max))

    def bounds(self):
        """``(lat_min, lon_min, lat_max, lon_max)`` of all points."""
        b = self.tree.bounds()
        return None if b is None else (b[1], b[0], b[3], b[2])


def spatial_index(buildings) -> SpatialIndex:
    return SpatialIndex(buildings)


@dataclass(frozen=True)
class RegionQuery:
    """Location plus optional cohort key ``(type, year bucket, area bucket)``."""

    location: tuple
    attributes: tuple | None = None
    min_cohort: int = 20
    buckets: BucketSpec = BucketSpec()
    exclude: tuple = ()

    def __post_init__(self):
        if self.min_cohort < 1:
            raise ValueError("min_cohort must be >= 1")

    def matches(self, b):
        return b.id not in self.exclude and (self.attributes is None or self.buckets.key(b) == tuple(self.attributes))


def distance_m(a, b):
    """Equirectangular distance in meters between two (lat, lon) pairs."""
    lat = math.radians(0.5 * (a[0] + b[0]))
    dx = math.radians(b[1] - a[1]) * math.cos(lat)
    dy = math.radians(b[0] - a[0])
    return EARTH_RADIUS_M * math.hypot(dx, dy)


@dataclass(frozen=True)
class CohortSearch:
    members: list
    doublings: int
    half_width: float


def search_cohort(index: SpatialIndex, q: RegionQuery, initial_box: float = INITIAL_BOX_DEG) -> CohortSearch:
    """Grow a square box around ``q.location`` until enough matches are found.

    The box side starts at ``initial_box`` degrees and doubles each step. The
    search stops once ``q.min_cohort`` matching homes are inside, or once the
    box covers every indexed point.
    """
    if len(index) == 0:
        raise InsufficientCohort("empty spatial index")
    lat0, lon0 = q.location
    blat0, blon0, blat1, blon1 = index.bounds()
    reach = max(abs(lat0 - blat0), abs(lat0 - blat1), abs(lon0 - blon0), abs(lon0 - blon1))
    half = 0.5 * initial_box
    doublings = 0
    while True:
        ids = index.query(lat0 - half, lon0 - half, lat0 + half, lon0 + half)
        found = [index.buildings[i] for i in ids if q.matches(index.buildings[i])]
        if len(found) >= q.min_cohort or half >= reach:
            break
        half *= 2.0
        doublings += 1
    found.sort(key=lambda b: (distance_m(q.location, b.location), b.id))
    if len(found) < q.min_cohort:
        raise InsufficientCohort(f"only {len(found)} matching homes in the whole index, need {q.min_cohort}")
    return CohortSearch(found, doublings, half)


def expanding_cohort(index: SpatialIndex, q: RegionQuery) -> list:
    return search_cohort(index, q).members


# --------------------------------------------------------------------------
# region distribution


@dataclass
class RegionDistribution:
    cdfs: dict
    member_ids: list
    bandwidths: dict
    points: dict = field(default_factory=dict)

    @property
    def gamma_heat_cdf(self):
        return self.cdfs["gamma_heat"]

    @property
    def gamma_cool_cdf(self):
        return self.cdfs["gamma_cool"]

    @property
    def base_cdf(self):
        return self.cdfs["base"]

    def to_dict(self):
        return {
            "member_ids": list(self.member_ids),
            "bandwidths": {k: (None if v is None else float(v)) for k, v in self.bandwidths.items()},
            "cdfs": {k: c.to_dict() for k, c in self.cdfs.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            {k: ParamECDF.from_dict(v) for k, v in d["cdfs"].items()},
            list(d["member_ids"]),
            {k: (math.nan if v is None else v) for k, v in d["bandwidths"].items()},
        )

    def write(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        tmp.replace(path)

    @classmethod
    def read(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def region_distribution(cohort, annuals, weather, min_cohort: int = 20, bandwidth=None) -> RegionDistribution:
    """Solve every member's annual record and smooth each parameter with a KDE.

    Members without an annual record, or whose record cannot be solved, are
    dropped. Fewer than ``min_cohort`` survivors raises InsufficientCohort.
    """
    points = {}
    for b in cohort:
        rec = annuals.get(b.id)
        if rec is None:
            continue
        try:
            points[b.id] = solve_annual(rec, weather, b.floor_area)
        except (InputError, ValueError):
            continue
    if len(points) < min_cohort:
        raise InsufficientCohort(f"{len(points)} usable cohort members, need {min_cohort}")
    ids = sorted(points)
    cdfs, bws = {}, {}
    for p in RANKED_PARAMS:
        vals = np.array([getattr(points[i], p) for i in ids])
        if is_degenerate(vals):
            bws[p] = math.nan
            cdfs[p] = build_kde_cdf(vals)
        else:
            bws[p] = silverman_bandwidth(vals) if bandwidth is None else float(bandwidth)
            cdfs[p] = build_kde_cdf(vals, bws[p])
    return RegionDistribution(cdfs, ids, bws, points)
