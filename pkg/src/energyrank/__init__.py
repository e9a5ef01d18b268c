"""Bayesian degree-day models, dominance ranking and fault reports for buildings."""

from .bayes import PosteriorSamples, PriorSpec, SamplerConfig, sample_posterior
from .distributions import ParamECDF
from .faults import FaultReport, Sensitivity
from .ingest import AlignedSeries, AnnualRecord, BuildingRecord, DailySeries, WeatherSeries
from .region import RegionDistribution, RegionQuery
from .thermal import EnergySplit, ParamPoint

__version__ = "0.1.0"

__all__ = [
    "AlignedSeries",
    "AnnualRecord",
    "BuildingRecord",
    "DailySeries",
    "EnergySplit",
    "FaultReport",
    "ParamECDF",
    "ParamPoint",
    "PosteriorSamples",
    "PriorSpec",
    "RegionDistribution",
    "RegionQuery",
    "SamplerConfig",
    "Sensitivity",
    "WeatherSeries",
    "sample_posterior",
]
