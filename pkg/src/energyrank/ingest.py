"""CSV ingestion for building metadata, daily meter traces, weather and annual totals.

File formats (header row required, comma separated, ISO-8601 dates):

* ``buildings.csv``: ``id,property_type,year_built,floor_area_sqft,latitude,longitude``
  (``latitude``/``longitude`` may be empty)
* ``energy.csv``: ``building_id,date,kwh``
* ``weather.csv``: ``date,mean_temp_f``
* ``annual.csv``: ``building_id,total_kwh,heating_kwh,cooling_kwh``

Row numbers in diagnostics are file line numbers (the header is line 1).
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    BadValue,
    DuplicateId,
    MissingColumn,
    MissingFile,
    NoOverlap,
    ZeroArea,
)

KWH_TO_KBTU = 3.412

BUILDINGS_HEADER = ("id", "property_type", "year_built", "floor_area_sqft", "latitude", "longitude")
ENERGY_HEADER = ("building_id", "date", "kwh")
WEATHER_HEADER = ("date", "mean_temp_f")
ANNUAL_HEADER = ("building_id", "total_kwh", "heating_kwh", "cooling_kwh")

MIN_TEMP_F = -60.0
MAX_TEMP_F = 140.0


class PropertyType(str, enum.Enum):
    SingleFamily = "SingleFamily"
    MultiFamily = "MultiFamily"
    Apartment = "Apartment"
    MixedUse = "MixedUse"


@dataclass(frozen=True)
class BuildingRecord:
    id: str
    property_type: PropertyType
    year_built: int
    floor_area: float
    location: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.floor_area > 0:
            raise ValueError(f"{self.id}: floor_area must be positive")
        if not 1600 <= self.year_built <= dt.date.today().year:
            raise ValueError(f"{self.id}: year_built {self.year_built} out of range")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Daily energy (kWh, or kWh/sq.ft. after normalization) for one building."""

    building_id: str
    dates: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "energy", _frozen(self.energy, float))
        if self.dates.shape != self.energy.shape:
            raise ValueError("dates and energy differ in length")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise ValueError(f"{self.building_id}: dates must be strictly increasing")
        if not np.all(np.isfinite(self.energy)) or np.any(self.energy < 0):
            raise ValueError(f"{self.building_id}: energy must be finite and non-negative")

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    dates: np.ndarray
    temps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "temps", _frozen(self.temps, float))
        if self.dates.shape != self.temps.shape:
            raise ValueError("dates and temps differ in length")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise ValueError("weather dates must be strictly increasing")
        if np.any(~np.isfinite(self.temps)) or np.any((self.temps < MIN_TEMP_F) | (self.temps > MAX_TEMP_F)):
            raise ValueError(f"temperatures must lie in [{MIN_TEMP_F}, {MAX_TEMP_F}] F")

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True, eq=False)
class AlignedSeries:
    """Energy paired with same-day mean temperature."""

    building_id: str
    dates: np.ndarray
    energy: np.ndarray
    temps: np.ndarray
    coverage: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "energy", _frozen(self.energy, float))
        object.__setattr__(self, "temps", _frozen(self.temps, float))

    def __len__(self):
        return len(self.dates)

    @classmethod
    def from_arrays(cls, temps, energy, building_id="", start="2020-01-01"):
        """Convenience constructor for consecutive days starting at ``start``."""
        temps = np.asarray(temps, dtype=float)
        dates = np.datetime64(start, "D") + np.arange(len(temps))
        return cls(building_id, dates, energy, temps, 1.0)


@dataclass(frozen=True)
class AnnualRecord:
    building_id: str
    total: float
    heating: float
    cooling: float

    def __post_init__(self):
        for name in ("total", "heating", "cooling"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{self.building_id}: {name} must be finite and non-negative")
        if self.heating + self.cooling > self.total * (1 + 1e-12):
            raise ValueError(f"{self.building_id}: heating + cooling exceeds total")


# --------------------------------------------------------------------------
# readers


def _open_rows(path, header):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        for col in header:
            if col not in fields:
                raise MissingColumn(path, col)
        reader.fieldnames = fields
        rows = [(i + 2, row) for i, row in enumerate(reader)]
    return rows


def _parse_float(row_no, row, col, *, allow_empty=False):
    raw = (row.get(col) or "").strip()
    if raw == "":
        if allow_empty:
            return None
        raise BadValue(row_no, col, "empty value")
    try:
        v = float(raw)
    except ValueError:
        raise BadValue(row_no, col, f"not a number: {raw!r}") from None
    if not math.isfinite(v):
        raise BadValue(row_no, col, f"not finite: {raw!r}")
    return v


def _parse_date(row_no, row, col):
    raw = (row.get(col) or "").strip()
    try:
        return np.datetime64(dt.date.fromisoformat(raw), "D")
    except ValueError:
        raise BadValue(row_no, col, f"not an ISO date: {raw!r}") from None


def load_buildings(path) -> list[BuildingRecord]:
    records = []
    seen = set()
    for row_no, row in _open_rows(path, BUILDINGS_HEADER[:4]):
        bid = (row.get("id") or "").strip()
        if not bid:
            raise BadValue(row_no, "id", "empty id")
        if bid in seen:
            raise DuplicateId(row_no, bid)
        seen.add(bid)
        ptype = (row.get("property_type") or "").strip()
        try:
            ptype = PropertyType(ptype)
        except ValueError:
            raise BadValue(row_no, "property_type", f"unknown property type {ptype!r}") from None
        year = _parse_float(row_no, row, "year_built")
        if year != int(year) or not 1600 <= year <= dt.date.today().year:
            raise BadValue(row_no, "year_built", f"invalid year {year!r}")
        area = _parse_float(row_no, row, "floor_area_sqft")
        if area <= 0:
            raise BadValue(row_no, "floor_area_sqft", f"floor area must be positive, got {area!r}")
        lat = _parse_float(row_no, row, "latitude", allow_empty=True)
        lon = _parse_float(row_no, row, "longitude", allow_empty=True)
        if (lat is None) != (lon is None):
            raise BadValue(row_no, "latitude" if lat is None else "longitude", "latitude and longitude must both be given")
        if lat is not None:
            if not -90 <= lat <= 90:
                raise BadValue(row_no, "latitude", f"out of range: {lat}")
            if not -180 <= lon <= 180:
                raise BadValue(row_no, "longitude", f"out of range: {lon}")
        loc = None if lat is None else (lat, lon)
        records.append(BuildingRecord(bid, ptype, int(year), area, loc))
    return records


def load_energy(path) -> dict[str, DailySeries]:
    """Read ``energy.csv`` into one series per building, sorted by date."""
    per = defaultdict(list)
    for row_no, row in _open_rows(path, ENERGY_HEADER):
        bid = (row.get("building_id") or "").strip()
        if not bid:
            raise BadValue(row_no, "building_id", "empty id")
        d = _parse_date(row_no, row, "date")
        kwh = _parse_float(row_no, row, "kwh")
        if kwh < 0:
            raise BadValue(row_no, "kwh", f"negative energy {kwh!r}")
        per[bid].append((d, kwh, row_no))
    out = {}
    for bid, items in per.items():
        items.sort(key=lambda t: (t[0], t[2]))
        for a, b in zip(items, items[1:]):
            if a[0] == b[0]:
                raise BadValue(b[2], "date", f"duplicate date {b[0]} for {bid}")
        out[bid] = DailySeries(bid, [t[0] for t in items], [t[1] for t in items])
    return out


def load_weather(path) -> WeatherSeries:
    items = []
    for row_no, row in _open_rows(path, WEATHER_HEADER):
        d = _parse_date(row_no, row, "date")
        t = _parse_float(row_no, row, "mean_temp_f")
        if not MIN_TEMP_F <= t <= MAX_TEMP_F:
            raise BadValue(row_no, "mean_temp_f", f"temperature {t} outside [{MIN_TEMP_F}, {MAX_TEMP_F}]")
        items.append((d, t, row_no))
    items.sort(key=lambda t: (t[0], t[2]))
    for a, b in zip(items, items[1:]):
        if a[0] == b[0]:
            raise BadValue(b[2], "date", f"duplicate date {b[0]}")
    return WeatherSeries([t[0] for t in items], [t[1] for t in items])


def load_annual(path) -> dict[str, AnnualRecord]:
    out = {}
    for row_no, row in _open_rows(path, ANNUAL_HEADER):
        bid = (row.get("building_id") or "").strip()
        if not bid:
            raise BadValue(row_no, "building_id", "empty id")
        if bid in out:
            raise DuplicateId(row_no, bid)
        vals = {}
        for col in ANNUAL_HEADER[1:]:
            v = _parse_float(row_no, row, col)
            if v < 0:
                raise BadValue(row_no, col, f"negative energy {v!r}")
            vals[col] = v
        if vals["heating_kwh"] + vals["cooling_kwh"] > vals["total_kwh"] * (1 + 1e-12):
            raise BadValue(row_no, "total_kwh", "heating + cooling exceeds total")
        out[bid] = AnnualRecord(bid, vals["total_kwh"], vals["heating_kwh"], vals["cooling_kwh"])
    return out


# --------------------------------------------------------------------------
# writers (exact inverses of the readers; floats written with repr)


def _write(path, header, rows):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    tmp.replace(path)


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_buildings(records: Iterable[BuildingRecord], path):
    rows = []
    for r in records:
        lat, lon = r.location if r.location is not None else (None, None)
        rows.append([r.id, r.property_type.value, r.year_built, _fmt(r.floor_area), _fmt(lat), _fmt(lon)])
    _write(path, BUILDINGS_HEADER, rows)


def write_energy(series: Iterable[DailySeries], path):
    rows = []
    for s in series:
        rows.extend([s.building_id, str(d), _fmt(e)] for d, e in zip(s.dates, s.energy))
    _write(path, ENERGY_HEADER, rows)


def write_weather(weather: WeatherSeries, path):
    _write(path, WEATHER_HEADER, [[str(d), _fmt(t)] for d, t in zip(weather.dates, weather.temps)])


def write_annual(records: Iterable[AnnualRecord], path):
    _write(path, ANNUAL_HEADER, [[r.building_id, _fmt(r.total), _fmt(r.heating), _fmt(r.cooling)] for r in records])


# --------------------------------------------------------------------------
# transforms


def align(series: DailySeries, weather: WeatherSeries) -> AlignedSeries:
    """Keep only days present in both inputs, in date order."""
    if len(series) == 0 or len(weather) == 0:
        raise NoOverlap(f"{series.building_id}: empty input")
    common, i_e, i_w = np.intersect1d(series.dates, weather.dates, assume_unique=True, return_indices=True)
    if len(common) == 0:
        raise NoOverlap(f"{series.building_id}: energy and weather dates do not overlap")
    return AlignedSeries(
        series.building_id,
        common,
        series.energy[i_e],
        weather.temps[i_w],
        len(common) / len(series),
    )


def sum_traces(*traces: DailySeries, building_id=None) -> DailySeries:
    """Sum several meters of one building on the days all of them report."""
    if not traces:
        raise ValueError("need at least one trace")
    common = traces[0].dates
    for t in traces[1:]:
        common = np.intersect1d(common, t.dates, assume_unique=True)
    total = np.zeros(len(common))
    for t in traces:
        idx = np.searchsorted(t.dates, common)
        total += t.energy[idx]
    return DailySeries(building_id or traces[0].building_id, common, total)


def normalize_by_area(series: DailySeries, b: BuildingRecord) -> DailySeries:
    """Divide every value by floor area, giving kWh per sq.ft."""
    if not b.floor_area > 0:
        raise ZeroArea(f"{b.id}: floor area must be positive")
    return DailySeries(series.building_id, series.dates, series.energy / b.floor_area)


def denormalize_by_area(series: DailySeries, b: BuildingRecord) -> DailySeries:
    if not b.floor_area > 0:
        raise ZeroArea(f"{b.id}: floor area must be positive")
    return DailySeries(series.building_id, series.dates, series.energy * b.floor_area)


def to_kbtu(kwh):
    return kwh * KWH_TO_KBTU


def eui_kbtu(kwh, floor_area):
    """Energy use intensity in kBtu per sq.ft."""
    if not floor_area > 0:
        raise ZeroArea("floor area must be positive")
    return to_kbtu(kwh) / floor_area


@dataclass(frozen=True)
class Dataset:
    buildings: list
    energy: dict
    weather: WeatherSeries
    annual: dict | None = None

    def building(self, bid):
        for b in self.buildings:
            if b.id == bid:
                return b
        raise KeyError(bid)


def load_dataset(directory, *, buildings=None, energy=None, weather=None, annual=None) -> Dataset:
    """Load the standard file set from ``directory``; explicit paths override."""
    d = Path(directory) if directory is not None else None

    def pick(explicit, name):
        if explicit is not None:
            return Path(explicit)
        if d is None:
            raise MissingFile(f"no path given for {name}")
        return d / name

    # annual.csv is optional in a directory, but an explicit path must exist
    if annual is not None:
        ann = load_annual(annual)
    elif d is not None and (d / "annual.csv").is_file():
        ann = load_annual(d / "annual.csv")
    else:
        ann = None
    return Dataset(
        load_buildings(pick(buildings, "buildings.csv")),
        load_energy(pick(energy, "energy.csv")),
        load_weather(pick(weather, "weather.csv")),
        ann,
    )
