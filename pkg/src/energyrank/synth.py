"""Synthetic building populations with known parameters and injected faults.

A spec is a plain mapping (usually read from TOML)::

    n_homes = 100
    seed = 7
    days = 365
    start = "2021-01-01"
    weather_profile = "ColdTemperate"     # or weather_file = "weather.csv"
    noise_frac = [0.05, 0.2]              # per-home sd as a fraction of mean use
    # noise_sd = 2.0                      # or an absolute sd in kWh/day
    reference_area = 2000.0
    emit_annual = false

    [parameters]                          # energies at the reference area
    base = {dist = "normal", mean = 20.0, sd = 2.0}
    t_heat = {dist = "uniform", low = 55.0, high = 62.0}

    [fault_rates]
    PoorBuildingEnvelope = 0.1

    [attributes]
    property_types = ["SingleFamily"]
    year_built = [1960, 1979]
    floor_area = [1500.0, 2500.0]

    [location]
    center = [42.39, -72.52]
    spread_deg = 0.05

Energy-valued parameters scale linearly with floor area. Each home carries
at most one fault.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ingest
from .errors import BadSpec, IdMismatch
from .faults import FLAG_NAMES, Fault, FaultReport
from .ingest import AnnualRecord, BuildingRecord, DailySeries, PropertyType, WeatherSeries
from .thermal import PARAM_NAMES, T_MAX, T_MIN, ParamPoint, energy_split, mean_energy

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# annual sinusoid: (mean F, amplitude F, daily noise sd F)
WEATHER_PROFILES = {
    "ColdTemperate": (50.0, 25.0, 6.0),
    "HotArid": (72.0, 18.0, 4.0),
    "Mild": (62.0, 10.0, 4.0),
}
WARMEST_DAY = 200

DEFAULT_PARAMETERS = {
    "base": {"dist": "normal", "mean": 20.0, "sd": 2.0},
    "gamma_heat": {"dist": "normal", "mean": 1.5, "sd": 0.15},
    "gamma_cool": {"dist": "normal", "mean": 2.0, "sd": 0.2},
    "t_heat": {"dist": "uniform", "low": 55.0, "high": 62.0},
    "t_cool": {"dist": "uniform", "low": 70.0, "high": 78.0},
}

ENVELOPE_FACTOR = (1.5, 2.5)
APPLIANCE_FACTOR = (1.5, 2.0)
SETPOINT_SHIFT = (5.0, 10.0)


@dataclass(frozen=True)
class ParamDist:
    dist: str
    a: float
    b: float

    @classmethod
    def parse(cls, name, d):
        kind = d.get("dist", "normal")
        try:
            if kind == "normal":
                out = cls("normal", float(d["mean"]), float(d["sd"]))
                ok = out.b >= 0
            elif kind == "uniform":
                out = cls("uniform", float(d["low"]), float(d["high"]))
                ok = out.a <= out.b
            else:
                raise BadSpec(f"parameter {name}: unknown dist {kind!r}")
        except KeyError as e:
            raise BadSpec(f"parameter {name}: missing {e.args[0]!r}") from None
        if not ok:
            raise BadSpec(f"parameter {name}: invalid bounds {d}")
        return out

    def draw(self, rng):
        if self.dist == "normal":
            return rng.normal(self.a, self.b)
        return rng.uniform(self.a, self.b)


@dataclass(frozen=True)
class SynthSpec:
    n_homes: int
    seed: int
    days: int = 365
    start: str = "2021-01-01"
    weather_profile: str = "ColdTemperate"
    weather_file: str | None = None
    noise_sd: float | None = None
    noise_frac: tuple | None = None
    reference_area: float = 2000.0
    parameters: dict = field(default_factory=dict)
    fault_rates: dict = field(default_factory=dict)
    property_types: tuple = ("SingleFamily",)
    year_built: tuple = (1960, 1979)
    floor_area: tuple = (1500.0, 2500.0)
    center: tuple = (42.39, -72.52)
    spread_deg: float = 0.05
    emit_annual: bool = False

    def __post_init__(self):
        if not isinstance(self.n_homes, int) or self.n_homes < 1:
            raise BadSpec("n_homes must be an integer >= 1")
        if self.seed is None or int(self.seed) < 0:
            raise BadSpec("seed must be a non-negative integer")
        if self.weather_file is None and self.weather_profile not in WEATHER_PROFILES:
            raise BadSpec(f"unknown weather profile {self.weather_profile!r}")
        if self.days < 1:
            raise BadSpec("days must be >= 1")
        for f, p in self.fault_rates.items():
            try:
                Fault(f)
            except ValueError:
                raise BadSpec(f"unknown fault {f!r}") from None
            if not 0 <= p <= 1:
                raise BadSpec(f"fault rate for {f} must be in [0, 1]")
        if sum(self.fault_rates.values()) > 1 + 1e-12:
            raise BadSpec("fault rates sum to more than 1 (at most one fault per home)")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise BadSpec("noise_sd must be >= 0")
        if self.noise_frac is not None:
            lo, hi = self.noise_frac
            if not 0 <= lo <= hi:
                raise BadSpec("noise_frac must be [low, high] with 0 <= low <= high")
        for t in self.property_types:
            try:
                PropertyType(t)
            except ValueError:
                raise BadSpec(f"unknown property type {t!r}") from None
        if not self.reference_area > 0 or not 0 < self.floor_area[0] <= self.floor_area[1]:
            raise BadSpec("areas must be positive")
        for name in self.parameters:
            if name not in DEFAULT_PARAMETERS:
                raise BadSpec(f"unknown parameter {name!r}")

    def distributions(self):
        merged = dict(DEFAULT_PARAMETERS)
        merged.update(self.parameters)
        return {k: ParamDist.parse(k, v) for k, v in merged.items()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        attrs = d.pop("attributes", {}) or {}
        loc = d.pop("location", {}) or {}
        kw = {}
        for k in ("property_types", "year_built", "floor_area"):
            if k in attrs:
                kw[k] = tuple(attrs[k])
        if "center" in loc:
            kw["center"] = tuple(float(v) for v in loc["center"])
        if "spread_deg" in loc:
            kw["spread_deg"] = float(loc["spread_deg"])
        if "noise_frac" in d:
            d["noise_frac"] = tuple(d["noise_frac"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise BadSpec(f"unknown spec keys: {sorted(unknown)}")
        if "n_homes" not in d or "seed" not in d:
            raise BadSpec("spec needs n_homes and seed")
        try:
            return cls(**d, **kw)
        except TypeError as e:
            raise BadSpec(str(e)) from None

    @classmethod
    def from_toml(cls, path):
        path = Path(path)
        if not path.is_file():
            raise BadSpec(f"no such spec file: {path}")
        try:
            return cls.from_dict(tomllib.loads(path.read_text()))
        except tomllib.TOMLDecodeError as e:
            raise BadSpec(f"{path}: {e}") from None


# --------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class TruthHome:
    params: ParamPoint          # kWh/day units for this home
    pre_fault: ParamPoint
    floor_area: float
    faults: tuple = ()

    @property
    def per_sqft(self):
        return self.params.scaled(1.0 / self.floor_area)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "pre_fault": self.pre_fault.to_dict(),
            "params_per_sqft": self.per_sqft.to_dict(),
            "floor_area": self.floor_area,
            "faults": list(self.faults),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(ParamPoint.from_dict(d["params"]), ParamPoint.from_dict(d["pre_fault"]), d["floor_area"], tuple(d["faults"]))


@dataclass
class GroundTruth:
    homes: dict
    seed: int = 0

    def faulty(self, fault):
        return {k for k, h in self.homes.items() if fault in h.faults}

    def to_dict(self):
        return {"seed": self.seed, "homes": {k: self.homes[k].to_dict() for k in sorted(self.homes)}}

    @classmethod
    def from_dict(cls, d):
        return cls({k: TruthHome.from_dict(v) for k, v in d["homes"].items()}, d.get("seed", 0))

    def write(self, path):
        _atomic(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SynthData:
    buildings: list
    energy: dict
    weather: WeatherSeries
    truth: GroundTruth
    annual: dict | None = None


def _atomic(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def profile_weather(profile, days, start, rng) -> WeatherSeries:
    mean, amp, sd = WEATHER_PROFILES[profile]
    dates = np.datetime64(start, "D") + np.arange(days)
    doy = (dates - dates.astype("datetime64[Y]")).astype(int)
    temps = mean + amp * np.cos(2 * np.pi * (doy - WARMEST_DAY) / 365.25) + rng.normal(0, sd, days)
    return WeatherSeries(dates, np.clip(temps, ingest.MIN_TEMP_F, ingest.MAX_TEMP_F))


def home_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, int(index))))


def _draw_params(dists, rng):
    x = {k: dists[k].draw(rng) for k in ("base", "gamma_heat", "gamma_cool", "t_heat", "t_cool")}
    for k in ("base", "gamma_heat", "gamma_cool"):
        x[k] = max(x[k], 0.0)
    th, tc = sorted((x["t_heat"], x["t_cool"]))
    x["t_heat"], x["t_cool"] = float(np.clip(th, T_MIN, T_MAX)), float(np.clip(tc, T_MIN, T_MAX))
    return x


def inject(x, fault, rng):
    """Apply one fault to a parameter dict (reference-area units), in place."""
    if fault == Fault.POOR_BUILDING_ENVELOPE:
        f = rng.uniform(*ENVELOPE_FACTOR)
        x["gamma_heat"] *= f
        x["gamma_cool"] *= f
    elif fault == Fault.INEFFICIENT_HEATER:
        x["gamma_heat"] *= rng.uniform(*ENVELOPE_FACTOR)
    elif fault == Fault.INEFFICIENT_AC:
        x["gamma_cool"] *= rng.uniform(*ENVELOPE_FACTOR)
    elif fault == Fault.INEFFICIENT_APPLIANCES:
        x["base"] *= rng.uniform(*APPLIANCE_FACTOR)
    elif fault == Fault.HIGH_SET_POINT:
        # the cooling balance point is pushed along if needed to keep the order
        x["t_heat"] = min(x["t_heat"] + rng.uniform(*SETPOINT_SHIFT), T_MAX)
        x["t_cool"] = max(x["t_cool"], x["t_heat"])
    elif fault == Fault.LOW_SET_POINT:
        x["t_cool"] = max(x["t_cool"] - rng.uniform(*SETPOINT_SHIFT), T_MIN)
        x["t_heat"] = min(x["t_heat"], x["t_cool"])
    return x


def _pick_fault(rates, u):
    acc = 0.0
    for name in sorted(rates):
        acc += rates[name]
        if u < acc:
            return Fault(name)
    return None


def generate(spec: SynthSpec) -> SynthData:
    if spec.weather_file is not None:
        weather = ingest.load_weather(spec.weather_file)
    else:
        wrng = np.random.default_rng(np.random.SeedSequence(int(spec.seed), spawn_key=(0,)))
        weather = profile_weather(spec.weather_profile, spec.days, spec.start, wrng)
    dists = spec.distributions()
    width = len(str(spec.n_homes))
    buildings, energy, homes, annual = [], {}, {}, {}
    for i in range(spec.n_homes):
        rng = home_rng(spec.seed, i)
        bid = f"H{i + 1:0{width}d}"
        ptype = PropertyType(spec.property_types[rng.integers(len(spec.property_types))])
        year = int(rng.integers(spec.year_built[0], spec.year_built[1] + 1))
        area = float(rng.uniform(*spec.floor_area))
        lat = spec.center[0] + rng.uniform(-spec.spread_deg, spec.spread_deg)
        lon = spec.center[1] + rng.uniform(-spec.spread_deg, spec.spread_deg)
        buildings.append(BuildingRecord(bid, ptype, year, area, (float(lat), float(lon))))

        x = _draw_params(dists, rng)
        pre = dict(x)
        fault = _pick_fault(spec.fault_rates, rng.uniform())
        if fault is not None:
            inject(x, fault, rng)
        scale = area / spec.reference_area
        args = [x[k] * (scale if k in ("base", "gamma_heat", "gamma_cool") else 1.0) for k in PARAM_NAMES[:5]]
        pargs = [pre[k] * (scale if k in ("base", "gamma_heat", "gamma_cool") else 1.0) for k in PARAM_NAMES[:5]]
        mu = mean_energy(weather.temps, *args)
        if spec.noise_frac is not None:
            sd = rng.uniform(*spec.noise_frac) * float(mu.mean())
        else:
            sd = spec.noise_sd if spec.noise_sd is not None else 0.0
        y = mu + rng.normal(0.0, 1.0, len(mu)) * sd if sd > 0 else mu.copy()
        energy[bid] = DailySeries(bid, weather.dates, np.maximum(y, 0.0))
        p = ParamPoint(*args, sd)
        homes[bid] = TruthHome(p, ParamPoint(*pargs, sd), area, (fault.value,) if fault else ())
        if spec.emit_annual:
            split = energy_split(p, weather)
            annual[bid] = AnnualRecord(bid, split.total, split.heating, split.cooling)
    truth = GroundTruth(homes, int(spec.seed))
    return SynthData(buildings, energy, weather, truth, annual if spec.emit_annual else None)


def write_dataset(data: SynthData, outdir) -> list:
    """Write the ingest CSVs and ground_truth.json; returns the written paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "buildings.csv", out / "energy.csv", out / "weather.csv", out / "ground_truth.json"]
    ingest.write_buildings(data.buildings, paths[0])
    ingest.write_energy([data.energy[k] for k in sorted(data.energy)], paths[1])
    ingest.write_weather(data.weather, paths[2])
    data.truth.write(paths[3])
    if data.annual is not None:
        paths.append(out / "annual.csv")
        ingest.write_annual([data.annual[k] for k in sorted(data.annual)], paths[-1])
    return paths


# --------------------------------------------------------------------------
# scoring


def score(reports, truth: GroundTruth, classes=None) -> dict:
    """Per-fault-class precision and recall of reported against injected faults.

    Homes without a report count as reporting no faults. Precision (recall) is
    NaN when nothing was predicted (injected) for a class.
    """
    by_id = {}
    for r in reports:
        if r.building_id not in truth.homes:
            raise IdMismatch(f"report for unknown building {r.building_id!r}")
        by_id[r.building_id] = {f.value for f in r.faults}
    classes = [Fault(c).value for c in classes] if classes is not None else [f.value for f in Fault]
    out = {}
    for c in classes:
        tp = fp = fn = 0
        for bid, home in truth.homes.items():
            pred = c in by_id.get(bid, ())
            real = c in home.faults
            tp += pred and real
            fp += pred and not real
            fn += real and not pred
        out[c] = {
            "precision": tp / (tp + fp) if tp + fp else math.nan,
            "recall": tp / (tp + fn) if tp + fn else math.nan,
            "tp": tp,
            "fp": fp,
            "fn": fn,
        }
    return out


def mode_agreement(flags_a, flags_b, flag: str) -> float:
    """Jaccard index of the homes flagged on ``flag`` by two runs.

    NaN when neither run flags anything on that flag.
    """
    if flag not in FLAG_NAMES:
        raise ValueError(f"unknown flag {flag!r}")

    def flagged(m):
        out = set()
        for k, v in m.items():
            fl = v.flags if isinstance(v, FaultReport) else v
            if getattr(fl, flag):
                out.add(k)
        return out

    a, b = flagged(flags_a), flagged(flags_b)
    union = a | b
    return len(a & b) / len(union) if union else math.nan
