"""Second-order stochastic dominance and all-pairs ranking within cohorts."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import ParamECDF
from .errors import MissingEcdf

RANKED_PARAMS = ("gamma_heat", "gamma_cool", "base")
EPS_REL = 1e-9


class DominanceVerdict(str, enum.Enum):
    FIRST_DOMINATES = "FirstDominates"
    SECOND_DOMINATES = "SecondDominates"
    NEITHER = "Neither"


@dataclass(frozen=True)
class SSDIntegral:
    """Extremes of ``D(x) = integral of (G - F)`` from the far left up to ``x``."""

    minimum: float
    maximum: float
    final: float
    scale: float  # range of the merged support, used for the default epsilon


def default_epsilon(f: ParamECDF, g: ParamECDF) -> float:
    return EPS_REL * (max(f.hi, g.hi) - min(f.lo, g.lo))


def ssd_integral(f: ParamECDF, g: ParamECDF) -> SSDIntegral:
    """Running integral of ``G - F`` on the merged support.

    Between consecutive merged breakpoints both CDFs are constant (step) or
    linear (linear kind), so the integrand is linear there and its integral
    is the trapezoid of the right limit at the left end and the left limit at
    the right end. That is exact for either kind. A sign change inside an
    interval puts the extreme of ``D`` strictly inside it, at fraction
    ``d0 / (d0 - d1)`` with value ``D_k + h * d0 * s / 2``.
    """
    x = np.union1d(f.support, g.support)
    if len(x) == 1:
        return SSDIntegral(0.0, 0.0, 0.0, 0.0)
    d0 = g(x[:-1]) - f(x[:-1])
    d1 = g.left_limit(x[1:]) - f.left_limit(x[1:])
    h = np.diff(x)
    D = np.concatenate(([0.0], np.cumsum(0.5 * h * (d0 + d1))))
    lo, hi = float(D.min()), float(D.max())
    cross = (d0 < 0) != (d1 < 0)
    cross &= (d0 != 0) & (d1 != 0)
    if np.any(cross):
        k = np.nonzero(cross)[0]
        s = d0[k] / (d0[k] - d1[k])
        ext = D[k] + 0.5 * h[k] * d0[k] * s
        lo = min(lo, float(ext.min()))
        hi = max(hi, float(ext.max()))
    return SSDIntegral(lo, hi, float(D[-1]), float(x[-1] - x[0]))


def _dominates(I: SSDIntegral, epsilon: float) -> tuple[bool, bool]:
    first = I.minimum >= -epsilon and I.final > epsilon
    second = -I.maximum >= -epsilon and -I.final > epsilon
    return first, second


def ssd_dominates(f: ParamECDF, g: ParamECDF, epsilon: float | None = None) -> bool:
    """True when ``f`` second-order dominates ``g`` (``f`` sits to the right).

    The running integral of ``G - F`` must stay above ``-epsilon`` everywhere
    and end above ``+epsilon``; identical inputs therefore never dominate.
    """
    eps = default_epsilon(f, g) if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    return _dominates(ssd_integral(f, g), eps)[0]


def verdict(f: ParamECDF, g: ParamECDF, epsilon: float | None = None) -> DominanceVerdict:
    eps = default_epsilon(f, g) if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    a, b = _dominates(ssd_integral(f, g), eps)
    if a and not b:
        return DominanceVerdict.FIRST_DOMINATES
    if b and not a:
        return DominanceVerdict.SECOND_DOMINATES
    return DominanceVerdict.NEITHER


# --------------------------------------------------------------------------
# peer groups


@dataclass(frozen=True)
class BucketSpec:
    year_width: int = 20
    area_width: float = 1000.0
    min_cohort: int = 20

    def __post_init__(self):
        if self.year_width < 1 or not self.area_width > 0 or self.min_cohort < 1:
            raise ValueError(f"invalid bucket spec {self}")

    def key(self, b):
        ptype = getattr(b.property_type, "value", b.property_type)
        year = (b.year_built // self.year_width) * self.year_width
        area = math.floor(b.floor_area / self.area_width) * self.area_width
        return (ptype, int(year), float(area))


@dataclass(frozen=True)
class PeerGroup:
    key: tuple
    member_ids: tuple
    discarded: bool = False

    def __len__(self):
        return len(self.member_ids)

    @property
    def label(self):
        ptype, year, area = self.key
        return f"{ptype}/{year}/{area:g}"


def make_peer_groups(buildings, buckets: BucketSpec = BucketSpec()) -> list[PeerGroup]:
    """Partition buildings by (type, year bucket, area bucket), sorted by key."""
    groups: dict[tuple, list[str]] = {}
    for b in buildings:
        groups.setdefault(buckets.key(b), []).append(b.id)
    return [
        PeerGroup(k, tuple(sorted(ids)), len(ids) < buckets.min_cohort)
        for k, ids in sorted(groups.items())
    ]


# --------------------------------------------------------------------------
# all-pairs counting


@dataclass
class DominanceCounts:
    """Pairwise wins per parameter; ``counts[param][building_id]``."""

    group: PeerGroup
    counts: dict = field(default_factory=dict)

    @property
    def group_size(self):
        return len(self.group)

    def wins(self, param, building_id):
        return self.counts[param][building_id]

    def rows(self):
        for bid in self.group.member_ids:
            for p in sorted(self.counts):
                yield bid, p, self.counts[p][bid], self.group_size


def dominance_counts(group: PeerGroup, ecdfs, params=RANKED_PARAMS, epsilon=None) -> DominanceCounts:
    """Count, for every member and parameter, how many peers it dominates.

    ``ecdfs`` maps building id to a mapping param -> ParamECDF. The integral
    is computed once per unordered pair; both directions follow from it.
    """
    ids = list(group.member_ids)
    for bid in ids:
        have = ecdfs.get(bid)
        if have is None or any(p not in have for p in params):
            raise MissingEcdf(f"no ECDF for building {bid!r} in group {group.label}")
    counts = {p: {bid: 0 for bid in ids} for p in params}
    for p in params:
        c = counts[p]
        for i in range(len(ids)):
            fi = ecdfs[ids[i]][p]
            for j in range(i + 1, len(ids)):
                fj = ecdfs[ids[j]][p]
                eps = default_epsilon(fi, fj) if epsilon is None else epsilon
                a, b = _dominates(ssd_integral(fi, fj), eps)
                if a and not b:
                    c[ids[i]] += 1
                elif b and not a:
                    c[ids[j]] += 1
    return DominanceCounts(group, counts)


COUNTS_HEADER = ("building_id", "param", "wins", "group_size")


def counts_csv_text(all_counts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNTS_HEADER)
    for dc in all_counts:
        for row in dc.rows():
            w.writerow(row)
    return buf.getvalue()


def write_counts(all_counts, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(counts_csv_text(all_counts))
    tmp.replace(path)
