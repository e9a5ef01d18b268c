"""Five-parameter change-point (degree-day) model and least-squares baselines.

Daily mean energy is::

    mu_d = base + gamma_heat * (t_heat - T_d)^+ + gamma_cool * (T_d - t_cool)^+

Temperatures are degrees Fahrenheit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateDesign

T_MIN = 32.0
T_MAX = 100.0
FIXED_BALANCE_POINT = 65.0

PARAM_NAMES = ("base", "gamma_heat", "gamma_cool", "t_heat", "t_cool", "sigma")


@dataclass(frozen=True)
class ParamPoint:
    base: float
    gamma_heat: float
    gamma_cool: float
    t_heat: float
    t_cool: float
    sigma: float = math.nan

    def __post_init__(self):
        for name in PARAM_NAMES:
            object.__setattr__(self, name, float(getattr(self, name)))
        if min(self.base, self.gamma_heat, self.gamma_cool) < 0:
            raise ValueError(f"negative base or slope: {self}")
        if not (T_MIN <= self.t_heat <= T_MAX and T_MIN <= self.t_cool <= T_MAX):
            raise ValueError(f"balance points outside [{T_MIN}, {T_MAX}]: {self}")
        if self.t_heat > self.t_cool:
            raise ValueError(f"t_heat > t_cool: {self}")
        # sigma is NaN when unset (annual solver) and may be 0 for exact fits
        if self.sigma < 0:
            raise ValueError(f"negative sigma: {self}")

    def as_array(self):
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))

    def to_dict(self):
        d = asdict(self)
        if math.isnan(d["sigma"]):
            d["sigma"] = None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("sigma") is None:
            d["sigma"] = math.nan
        return cls(**{k: d[k] for k in PARAM_NAMES})

    def scaled(self, factor):
        """Multiply the energy-valued parameters (base, slopes, sigma) by ``factor``."""
        return ParamPoint(
            self.base * factor,
            self.gamma_heat * factor,
            self.gamma_cool * factor,
            self.t_heat,
            self.t_cool,
            self.sigma * factor,
        )


@dataclass(frozen=True, eq=False)
class PredictedSeries:
    dates: np.ndarray
    mean: np.ndarray


@dataclass(frozen=True)
class EnergySplit:
    heating: float
    cooling: float
    baseload: float
    total: float

    def component(self, name):
        return getattr(self, name)


def _temps(weather):
    return np.asarray(weather.temps if hasattr(weather, "temps") else weather, dtype=float)


def hinge_terms(temps, t_heat, t_cool):
    """Heating and cooling degree-day regressors for each day."""
    temps = np.asarray(temps, dtype=float)
    return np.maximum(t_heat - temps, 0.0), np.maximum(temps - t_cool, 0.0)


def mean_energy(temps, base, gamma_heat, gamma_cool, t_heat, t_cool):
    h, c = hinge_terms(temps, t_heat, t_cool)
    return base + gamma_heat * h + gamma_cool * c


def predict(p: ParamPoint, weather) -> PredictedSeries:
    temps = _temps(weather)
    mu = mean_energy(temps, p.base, p.gamma_heat, p.gamma_cool, p.t_heat, p.t_cool)
    dates = getattr(weather, "dates", np.arange(len(temps)))
    return PredictedSeries(np.asarray(dates), mu)


def energy_split(p: ParamPoint, weather) -> EnergySplit:
    """Disaggregate predicted energy over the weather period into its three loads."""
    temps = _temps(weather)
    h, c = hinge_terms(temps, p.t_heat, p.t_cool)
    heating = float(p.gamma_heat * h.sum())
    cooling = float(p.gamma_cool * c.sum())
    baseload = float(p.base * len(temps))
    return EnergySplit(heating, cooling, baseload, heating + cooling + baseload)


def split_percent_error(estimate: EnergySplit, truth: EnergySplit):
    """Per-component percentage error, ``100 * (est - true) / true``; NaN where truth is 0."""
    out = {}
    for name in ("heating", "cooling", "baseload", "total"):
        t = truth.component(name)
        out[name] = 100.0 * (estimate.component(name) - t) / t if t > 0 else math.nan
    return out


# --------------------------------------------------------------------------
# least squares


def _check(aligned, min_days):
    temps = np.asarray(aligned.temps, dtype=float)
    y = np.asarray(aligned.energy, dtype=float)
    if len(temps) < min_days:
        raise DegenerateDesign(f"need at least {min_days} days, got {len(temps)}")
    return temps, y


def _sse(temps, y, x):
    r = mean_energy(temps, *x) - y
    return float(r @ r)


def fit_ls_65(aligned) -> ParamPoint:
    """Least-squares fit with both balance points fixed at 65 F."""
    temps, y = _check(aligned, 10)
    h, c = hinge_terms(temps, FIXED_BALANCE_POINT, FIXED_BALANCE_POINT)
    cols = [k for k, col in enumerate((h, c)) if np.any(col > 0)]
    if cols and np.ptp(temps) == 0:
        raise DegenerateDesign("all temperatures identical; hinge regressor is collinear with the intercept")
    regs = (h, c)
    best = None
    # clamp: try every subset of slope columns, keep the best one with non-negative slopes
    for subset in ([0, 1], [0], [1], []):
        subset = [k for k in subset if k in cols]
        X = np.column_stack([np.ones_like(y)] + [regs[k] for k in subset])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        if any(coef[1:] < 0):
            continue
        slopes = [0.0, 0.0]
        for k, v in zip(subset, coef[1:]):
            slopes[k] = float(v)
        base = float(coef[0])
        if base < 0:
            continue
        x = (base, slopes[0], slopes[1], FIXED_BALANCE_POINT, FIXED_BALANCE_POINT)
        sse = _sse(temps, y, x)
        if best is None or sse < best[0]:
            best = (sse, x)
    if best is None:
        raise DegenerateDesign("no feasible non-negative fit")
    sse, x = best
    dof = max(len(y) - 3, 1)
    return ParamPoint(*x, math.sqrt(sse / dof))


def _lattice_fit(temps, y, th_grid, tc_grid):
    """Exact clamped least squares at every (t_heat, t_cool) lattice pair.

    Returns ``(sse, base, gamma_heat, gamma_cool)`` arrays of shape
    ``(len(th_grid), len(tc_grid))``; infeasible pairs get ``sse = inf``.
    """
    n = len(y)
    ybar = y.mean()
    yc = y - ybar
    syy = yc @ yc
    H = np.maximum(th_grid[:, None] - temps[None, :], 0.0)
    C = np.maximum(temps[None, :] - tc_grid[:, None], 0.0)
    mh, mc = H.mean(axis=1), C.mean(axis=1)
    vhh = np.einsum("ij,ij->i", H, H) - n * mh**2
    vcc = np.einsum("ij,ij->i", C, C) - n * mc**2
    chy = H @ yc
    ccy = C @ yc
    tol_h = 1e-12 * np.maximum(np.einsum("ij,ij->i", H, H), 1e-300)
    tol_c = 1e-12 * np.maximum(np.einsum("ij,ij->i", C, C), 1e-300)
    okh = vhh > tol_h
    okc = vcc > tol_c

    shape = (len(th_grid), len(tc_grid))
    # H*C vanishes elementwise whenever t_heat <= t_cool
    vhc = -n * mh[:, None] * mc[None, :]
    valid = th_grid[:, None] <= tc_grid[None, :]

    best_sse = np.full(shape, np.inf)
    best = np.zeros((3,) + shape)

    def consider(sse, bh, bc):
        base = ybar - bh * mh[:, None] - bc * mc[None, :]
        feas = valid & np.isfinite(sse) & (bh >= 0) & (bc >= 0) & (base >= 0)
        better = feas & (sse < best_sse)
        best_sse[better] = sse[better]
        best[0][better] = base[better]
        best[1][better] = bh[better]
        best[2][better] = bc[better]

    zeros = np.zeros(shape)
    consider(np.full(shape, syy), zeros, zeros)
    with np.errstate(divide="ignore", invalid="ignore"):
        bh1 = np.where(okh, chy / np.where(okh, vhh, 1.0), 0.0)[:, None] * np.ones(shape)
        sse_h = np.where(okh[:, None], syy - bh1 * chy[:, None], np.inf) * np.ones(shape)
        consider(sse_h, bh1, zeros)
        bc1 = np.ones(shape) * np.where(okc, ccy / np.where(okc, vcc, 1.0), 0.0)[None, :]
        sse_c = np.where(okc[None, :], syy - bc1 * ccy[None, :], np.inf) * np.ones(shape)
        consider(sse_c, zeros, bc1)
        det = vhh[:, None] * vcc[None, :] - vhc**2
        both = okh[:, None] & okc[None, :] & (det > 1e-12 * vhh[:, None] * vcc[None, :])
        dsafe = np.where(both, det, 1.0)
        bh2 = (chy[:, None] * vcc[None, :] - vhc * ccy[None, :]) / dsafe
        bc2 = (vhh[:, None] * ccy[None, :] - vhc * chy[:, None]) / dsafe
        sse_2 = np.where(both, syy - bh2 * chy[:, None] - bc2 * ccy[None, :], np.inf)
        consider(sse_2, np.where(both, bh2, 0.0), np.where(both, bc2, 0.0))
    # guard against rounding below zero; ties resolved by argmin order
    best_sse = np.where(np.isfinite(best_sse), np.maximum(best_sse, 0.0), best_sse)
    return best_sse, best[0], best[1], best[2]


def _argbest(sse):
    i, j = np.unravel_index(np.argmin(sse), sse.shape)
    return int(i), int(j)


def _jac(x, temps, y):
    base, gh, gc, th, tc = x
    h, c = hinge_terms(temps, th, tc)
    J = np.empty((len(temps), 5))
    J[:, 0] = 1.0
    J[:, 1] = h
    J[:, 2] = c
    J[:, 3] = gh * (temps < th)
    J[:, 4] = -gc * (temps > tc)
    return J


def _sentinels(x, temps, y):
    """Report inactive hinges as zero slope with the balance point pinned to the bound."""
    base, gh, gc, th, tc = x
    scale = max(float(np.max(np.abs(y))) if len(y) else 0.0, 1e-300)
    h, c = hinge_terms(temps, th, tc)
    if not np.any(h > 0) or gh * (h.max() if len(h) else 0.0) <= 1e-9 * scale:
        gh, th = 0.0, T_MIN
    if not np.any(c > 0) or gc * (c.max() if len(c) else 0.0) <= 1e-9 * scale:
        gc, tc = 0.0, T_MAX
    return [base, gh, gc, th, tc]


N_STARTS = 6


def _refine(temps, y, th0, tc0, x_lattice, sse_lattice):
    """0.1 F refinement around one lattice cell, then a bounded polish."""
    fine_h = np.round(np.arange(max(T_MIN, th0 - 1.0), min(T_MAX, th0 + 1.0) + 1e-9, 0.1), 10)
    fine_c = np.round(np.arange(max(T_MIN, tc0 - 1.0), min(T_MAX, tc0 + 1.0) + 1e-9, 0.1), 10)
    sse2, b2, gh2, gc2 = _lattice_fit(temps, y, fine_h, fine_c)
    if np.isfinite(sse2).any() and sse2.min() <= sse_lattice:
        i2, j2 = _argbest(sse2)
        x = [b2[i2, j2], gh2[i2, j2], gc2[i2, j2], fine_h[i2], fine_c[j2]]
    else:
        x = x_lattice
    x = [float(v) for v in x]
    best_sse = _sse(temps, y, x)
    if best_sse > 0:
        lo = [0.0, 0.0, 0.0, T_MIN, T_MIN]
        hi = [np.inf, np.inf, np.inf, T_MAX, T_MAX]
        x0 = np.clip(x, lo, hi)
        try:
            res = least_squares(
                lambda v: mean_energy(temps, *v) - y,
                x0,
                jac=lambda v: _jac(v, temps, y),
                bounds=(lo, hi),
                method="trf",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=200,
            )
            cand = [float(v) for v in res.x]
            if cand[3] <= cand[4] and _sse(temps, y, cand) < best_sse:
                x, best_sse = cand, _sse(temps, y, cand)
        except (ValueError, np.linalg.LinAlgError):
            pass
    return x, best_sse


def fit_ls_range(aligned) -> ParamPoint:
    """Least-squares fit of all five parameters.

    Grid search over a 1 F lattice of balance-point pairs (exact clamped least
    squares for the linear terms at each pair), a 0.1 F refinement around each
    of the best few pairs, then a bounded Gauss-Newton polish that is kept only
    when it lowers the residual and respects ``t_heat <= t_cool``.
    """
    temps, y = _check(aligned, 20)
    if np.ptp(temps) < 15.0:
        raise DegenerateDesign(f"temperatures span {np.ptp(temps):.1f} F, need at least 15 F")

    grid = np.arange(T_MIN, T_MAX + 0.5, 1.0)
    sse, b, gh, gc = _lattice_fit(temps, y, grid, grid)
    best_x, best_sse = None, np.inf
    # refine and polish around the few best lattice cells; a weakly identified
    # balance point can leave the best cell a few degrees from the optimum
    order = np.argsort(sse, axis=None, kind="stable")[:N_STARTS]
    for flat in order:
        i, j = np.unravel_index(flat, sse.shape)
        if not np.isfinite(sse[i, j]):
            break
        x, cur = _refine(temps, y, grid[i], grid[j], [b[i, j], gh[i, j], gc[i, j], grid[i], grid[j]], sse[i, j])
        if cur < best_sse:
            best_x, best_sse = x, cur
        if best_sse == 0:
            break
    x = best_x
    x = _sentinels(x, temps, y)
    best_sse = _sse(temps, y, x)
    dof = max(len(y) - 5, 1)
    return ParamPoint(*x, math.sqrt(best_sse / dof))


def residual_norm(p: ParamPoint, aligned) -> float:
    temps = np.asarray(aligned.temps, dtype=float)
    y = np.asarray(aligned.energy, dtype=float)
    return math.sqrt(_sse(temps, y, (p.base, p.gamma_heat, p.gamma_cool, p.t_heat, p.t_cool)))
