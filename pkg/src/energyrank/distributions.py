"""Cumulative distribution functions on a finite support."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEP = "step"
LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class ParamECDF:
    """A CDF given by its values on a sorted support.

    ``kind="step"`` is a right-continuous step function (an empirical CDF);
    ``kind="linear"`` interpolates linearly between support points (a CDF
    tabulated on a grid, e.g. from a kernel density estimate). Both are 0 left
    of the support and 1 right of it.
    """

    support: np.ndarray
    cdf: np.ndarray
    kind: str = STEP

    def __post_init__(self):
        s = np.array(self.support, dtype=float)
        c = np.array(self.cdf, dtype=float)
        if s.ndim != 1 or s.shape != c.shape or len(s) == 0:
            raise ValueError("support and cdf must be equal-length, non-empty vectors")
        if len(s) > 1 and not np.all(np.diff(s) > 0):
            raise ValueError("support must be strictly increasing")
        if np.any(np.diff(c) < 0) or c[0] < 0 or abs(c[-1] - 1.0) > 1e-12:
            raise ValueError("cdf must be nondecreasing in [0, 1] and end at 1")
        if self.kind not in (STEP, LINEAR):
            raise ValueError(f"unknown kind {self.kind!r}")
        c[-1] = 1.0
        s.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "cdf", c)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == STEP:
            idx = np.searchsorted(self.support, x, side="right") - 1
            out = np.where(idx >= 0, self.cdf[np.clip(idx, 0, None)], 0.0)
        else:
            out = np.interp(x, self.support, self.cdf, left=0.0, right=1.0)
        return out if out.ndim else float(out)

    def left_limit(self, x):
        """``F(x-)``: the value approached from the left."""
        x = np.asarray(x, dtype=float)
        if self.kind == STEP:
            idx = np.searchsorted(self.support, x, side="left") - 1
            out = np.where(idx >= 0, self.cdf[np.clip(idx, 0, None)], 0.0)
        else:
            out = np.where(x <= self.support[0], 0.0, np.interp(x, self.support, self.cdf, left=0.0, right=1.0))
        return out if out.ndim else float(out)

    def mean(self):
        if self.kind == STEP:
            w = np.diff(self.cdf, prepend=0.0)
            return float(w @ self.support)
        # linear pieces plus a possible jump at the first point
        s, c = self.support, self.cdf
        mids = 0.5 * (s[1:] + s[:-1])
        return float(c[0] * s[0] + np.diff(c) @ mids)

    def shifted(self, delta):
        return ParamECDF(self.support + delta, self.cdf, self.kind)

    @property
    def lo(self):
        return float(self.support[0])

    @property
    def hi(self):
        return float(self.support[-1])

    def to_dict(self):
        return {"kind": self.kind, "support": [float(v) for v in self.support], "cdf": [float(v) for v in self.cdf]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["support"]), np.array(d["cdf"]), d.get("kind", STEP))


def empirical_cdf(values) -> ParamECDF:
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if len(v) == 0:
        raise ValueError("no values")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    support, counts = np.unique(v, return_counts=True)
    return ParamECDF(support, np.cumsum(counts) / len(v), STEP)


def point_mass(value) -> ParamECDF:
    return ParamECDF(np.array([float(value)]), np.array([1.0]), STEP)


def mixture(cdfs) -> ParamECDF:
    """Equal-weight mixture of step CDFs."""
    cdfs = list(cdfs)
    if any(c.kind != STEP for c in cdfs):
        raise ValueError("mixture is defined for step CDFs only")
    support = np.unique(np.concatenate([c.support for c in cdfs]))
    vals = np.mean([c(support) for c in cdfs], axis=0)
    vals[-1] = 1.0
    return ParamECDF(support, vals, STEP)
