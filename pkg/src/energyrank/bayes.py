"""Bayesian estimation of the degree-day model.

Priors (energies in the units of the data, temperatures in F)::

    base        ~ Normal(20, 20)  truncated to [0, inf)
    gamma_heat  ~ Normal(0, 4)    truncated to [0, inf)
    gamma_cool  ~ Normal(0, 4)    truncated to [0, inf)
    t_heat      ~ Uniform(32, 100)
    t_cool      ~ Uniform(32, 100)   with t_heat <= t_cool
    sigma       ~ HalfCauchy(5)

    energy_d ~ Normal(mu_d, sigma^2)

The second argument of each Normal is a standard deviation.

Sampling uses adaptive Metropolis-within-Gibbs: every iteration updates each
coordinate with a scalar random-walk proposal, followed by one joint
random-walk move whose covariance is learned from burn-in draws. Step sizes
and the joint covariance adapt during burn-in only and are frozen for the
retained draws.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.special import log_ndtr

from . import thermal
from .distributions import ParamECDF, empirical_cdf
from .errors import DegenerateDesign, NonConvergence, Unfittable
from .thermal import PARAM_NAMES, T_MAX, T_MIN, ParamPoint

NDIM = len(PARAM_NAMES)
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    base_mean: float = 20.0
    base_sd: float = 20.0
    gamma_heat_sd: float = 4.0
    gamma_cool_sd: float = 4.0
    t_low: float = T_MIN
    t_high: float = T_MAX
    sigma_scale: float = 5.0

    def __post_init__(self):
        if min(self.base_sd, self.gamma_heat_sd, self.gamma_cool_sd, self.sigma_scale) <= 0:
            raise ValueError("prior scales must be positive")
        if not self.t_low < self.t_high:
            raise ValueError("t_low must be below t_high")

    def log_norm_const(self):
        """Log normalizing constant of the joint prior density."""
        c = -math.log(self.base_sd) - 0.5 * LOG_2PI - float(log_ndtr(self.base_mean / self.base_sd))
        for sd in (self.gamma_heat_sd, self.gamma_cool_sd):
            c += math.log(2.0) - math.log(sd) - 0.5 * LOG_2PI
        # uniform on the triangle t_low <= t_heat <= t_cool <= t_high
        c += math.log(2.0) - 2.0 * math.log(self.t_high - self.t_low)
        c += math.log(2.0) - math.log(math.pi * self.sigma_scale)
        return c

    def as_array(self):
        return np.array(
            [
                self.base_mean,
                self.base_sd,
                self.gamma_heat_sd,
                self.gamma_cool_sd,
                self.sigma_scale,
                self.t_low,
                self.t_high,
                self.log_norm_const(),
            ]
        )


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    chains: int = 4
    burn_in: int = 2000
    draws: int = 2000
    min_days: int = 300
    rhat_max: float = 1.1
    max_rounds: int = 3

    def __post_init__(self):
        if self.seed is None or int(self.seed) < 0:
            raise ValueError("a non-negative integer seed is required")
        if self.chains < 2:
            raise ValueError("need at least 2 chains")
        if self.burn_in < 0 or self.draws < 1:
            raise ValueError("burn_in must be >= 0 and draws >= 1")


# --------------------------------------------------------------------------
# log posterior, reference implementation


def _unpack(p):
    if isinstance(p, ParamPoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def _in_support(x, priors):
    base, gh, gc, th, tc, sig = x
    return (
        base >= 0
        and gh >= 0
        and gc >= 0
        and sig > 0
        and priors.t_low <= th <= tc <= priors.t_high
    )


def log_prior(p, priors: PriorSpec = PriorSpec()) -> float:
    x = _unpack(p)
    if not _in_support(x, priors):
        return -math.inf
    base, gh, gc, _, _, sig = x
    return (
        priors.log_norm_const()
        - 0.5 * ((base - priors.base_mean) / priors.base_sd) ** 2
        - 0.5 * (gh / priors.gamma_heat_sd) ** 2
        - 0.5 * (gc / priors.gamma_cool_sd) ** 2
        - math.log1p((sig / priors.sigma_scale) ** 2)
    )


def log_posterior(p, aligned, priors: PriorSpec = PriorSpec()) -> float:
    """Unnormalized log posterior; ``-inf`` outside the prior support."""
    x = _unpack(p)
    lp = log_prior(x, priors)
    if not math.isfinite(lp):
        return -math.inf
    temps = np.asarray(aligned.temps, dtype=float)
    y = np.asarray(aligned.energy, dtype=float)
    n = len(y)
    if n == 0:
        return lp
    base, gh, gc, th, tc, sig = x
    r = y - thermal.mean_energy(temps, base, gh, gc, th, tc)
    return lp - n * math.log(sig) - 0.5 * n * LOG_2PI - 0.5 * float(r @ r) / sig**2


def grad_log_posterior(p, aligned, priors: PriorSpec = PriorSpec()) -> np.ndarray:
    """Analytic gradient of :func:`log_posterior` at an interior point."""
    x = _unpack(p)
    if not _in_support(x, priors):
        raise ValueError("gradient requested outside the prior support")
    base, gh, gc, th, tc, sig = x
    temps = np.asarray(aligned.temps, dtype=float)
    y = np.asarray(aligned.energy, dtype=float)
    h, c = thermal.hinge_terms(temps, th, tc)
    r = y - (base + gh * h + gc * c)
    s2 = sig * sig
    g = np.empty(NDIM)
    g[0] = -(base - priors.base_mean) / priors.base_sd**2 + r.sum() / s2
    g[1] = -gh / priors.gamma_heat_sd**2 + (r @ h) / s2
    g[2] = -gc / priors.gamma_cool_sd**2 + (r @ c) / s2
    g[3] = gh * r[temps < th].sum() / s2
    g[4] = -gc * r[temps > tc].sum() / s2
    g[5] = -2.0 * sig / (priors.sigma_scale**2 + s2) - len(y) / sig + (r @ r) / (s2 * sig)
    return g


# --------------------------------------------------------------------------
# compiled sampler kernel


@njit(cache=True)
def _logpost_kernel(x, temps, y, prior):
    base = x[0]
    gh = x[1]
    gc = x[2]
    th = x[3]
    tc = x[4]
    sig = x[5]
    if base < 0.0 or gh < 0.0 or gc < 0.0 or sig <= 0.0:
        return -np.inf
    if th < prior[5] or tc > prior[6] or th > tc:
        return -np.inf
    z = (base - prior[0]) / prior[1]
    lp = prior[7] - 0.5 * z * z
    z = gh / prior[2]
    lp -= 0.5 * z * z
    z = gc / prior[3]
    lp -= 0.5 * z * z
    z = sig / prior[4]
    lp -= np.log1p(z * z)
    n = y.shape[0]
    if n == 0:
        return lp
    sse = 0.0
    for i in range(n):
        t = temps[i]
        mu = base
        if t < th:
            mu += gh * (th - t)
        if t > tc:
            mu += gc * (t - tc)
        r = y[i] - mu
        sse += r * r
    return lp - n * np.log(sig) - 0.5 * n * np.log(2.0 * np.pi) - 0.5 * sse / (sig * sig)


@njit(cache=True)
def _block_cholesky(window):
    d = window.shape[1]
    m = window.shape[0]
    mean = np.zeros(d)
    for i in range(m):
        mean += window[i]
    mean /= m
    cov = np.zeros((d, d))
    for i in range(m):
        v = window[i] - mean
        cov += np.outer(v, v)
    cov /= max(m - 1, 1)
    cov *= 2.38 * 2.38 / d
    for j in range(d):
        cov[j, j] += 1e-8 * cov[j, j] + 1e-300
    return np.linalg.cholesky(cov)


@njit(cache=True)
def _run_chain(x0, temps, y, prior, steps, chol, block_scale, n_iter, adapt, zc, lu_c, zb, lu_b):
    d = x0.shape[0]
    x = x0.copy()
    lp = _logpost_kernel(x, temps, y, prior)
    draws = np.empty((n_iter, d))
    acc = np.zeros(d)
    batch_acc = np.zeros(d)
    acc_b = 0.0
    batch_b = 0.0
    have_block = chol[0, 0] > 0.0
    batch = 25
    k = 0
    prop = np.empty(d)
    for it in range(n_iter):
        for j in range(d):
            old = x[j]
            x[j] = old + steps[j] * zc[it, j]
            lpn = _logpost_kernel(x, temps, y, prior)
            if lu_c[it, j] < lpn - lp:
                lp = lpn
                acc[j] += 1.0
                batch_acc[j] += 1.0
            else:
                x[j] = old
        if have_block:
            step = chol @ zb[it]
            for j in range(d):
                prop[j] = x[j] + block_scale * step[j]
            lpn = _logpost_kernel(prop, temps, y, prior)
            if lu_b[it] < lpn - lp:
                lp = lpn
                for j in range(d):
                    x[j] = prop[j]
                acc_b += 1.0
                batch_b += 1.0
        draws[it] = x
        if adapt:
            if (it + 1) % batch == 0:
                k += 1
                delta = min(0.3, 1.0 / np.sqrt(k))
                for j in range(d):
                    if batch_acc[j] / batch > 0.44:
                        steps[j] *= np.exp(delta)
                    else:
                        steps[j] *= np.exp(-delta)
                    batch_acc[j] = 0.0
                if have_block:
                    if batch_b / batch > 0.234:
                        block_scale *= np.exp(delta)
                    else:
                        block_scale *= np.exp(-delta)
                batch_b = 0.0
            q = n_iter // 4
            if q >= 50 and (it + 1 == 2 * q or it + 1 == 3 * q):
                chol = _block_cholesky(draws[it + 1 - q : it + 1])
                have_block = True
                block_scale = 1.0
    return draws, x, steps, chol, block_scale, acc / max(n_iter, 1), acc_b / max(n_iter, 1)


# --------------------------------------------------------------------------
# diagnostics


def _autocov(x):
    n = len(x)
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    ac = np.fft.irfft(f * np.conj(f), m)[:n] / n
    return ac


def split_rhat(chains):
    """Split-chain potential scale reduction for an array ``(m, n)``."""
    chains = np.asarray(chains, dtype=float)
    n = chains.shape[1] // 2
    if n < 2:
        return math.nan
    halves = np.concatenate([chains[:, :n], chains[:, -n:]], axis=0)
    W = halves.var(axis=1, ddof=1).mean()
    B = n * halves.mean(axis=1).var(ddof=1)
    if W <= 0:
        return 1.0 if B <= 0 else math.inf
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W))


def effective_sample_size(chains):
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    acov = np.array([_autocov(c) for c in chains])
    W = acov[:, 0].mean() * n / (n - 1)
    if W <= 0:
        return float(m * n)
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = math.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        prev = pair
        tau += 2.0 * pair
    tau = max(tau, 1.0 / math.log10(m * n))
    return float(m * n / tau)


# --------------------------------------------------------------------------
# samples


@dataclass(eq=False)
class PosteriorSamples:
    """Retained draws, chain-major: rows ``c*n .. (c+1)*n-1`` belong to chain ``c``."""

    draws: np.ndarray
    chains: int
    burn_in: int
    seed: int
    diagnostics: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    rounds: int = 1

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2 or self.draws.shape[1] != NDIM:
            raise ValueError(f"draws must have shape (S, {NDIM})")
        if self.draws.shape[0] % self.chains:
            raise ValueError("draw count not divisible by chain count")
        if not self.diagnostics:
            self.diagnostics = compute_diagnostics(self.per_chain())

    def __len__(self):
        return self.draws.shape[0]

    def per_chain(self):
        return self.draws.reshape(self.chains, -1, NDIM)

    def column(self, name):
        return self.draws[:, PARAM_NAMES.index(name)]

    def mean_point(self) -> ParamPoint:
        m = self.draws.mean(axis=0)
        m[3] = min(m[3], m[4])
        return ParamPoint.from_array(m)

    @property
    def max_rhat(self):
        # undefined values are stored as None (JSON null)
        vals = [d["r_hat"] for d in self.diagnostics.values() if d["r_hat"] is not None and not math.isnan(d["r_hat"])]
        return max(vals) if vals else math.nan

    @property
    def converged(self):
        r = self.max_rhat
        return math.isnan(r) or r <= self.diagnostics_threshold

    diagnostics_threshold: float = 1.1

    # -- serialization

    def to_csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("chain", "draw") + PARAM_NAMES)
        n = len(self) // self.chains
        for i, row in enumerate(self.draws):
            w.writerow([i // n, i % n] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def sidecar(self):
        return {
            "chains": self.chains,
            "draws_per_chain": len(self) // self.chains,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "rounds": self.rounds,
            "converged": bool(self.converged),
            "diagnostics": self.diagnostics,
            "acceptance": self.acceptance,
        }

    def write(self, csv_path, json_path=None):
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path is not None else csv_path.with_suffix(".json")
        _atomic_write(csv_path, self.to_csv_text())
        _atomic_write(json_path, json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, csv_path, json_path=None):
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path is not None else csv_path.with_suffix(".json")
        meta = json.loads(json_path.read_text())
        with csv_path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header[2:]) != PARAM_NAMES:
                raise ValueError(f"{csv_path}: unexpected header {header}")
            draws = np.array([[float(v) for v in row[2:]] for row in reader])
        return cls(
            draws.reshape(-1, NDIM),
            meta["chains"],
            meta["burn_in"],
            meta["seed"],
            meta["diagnostics"],
            meta.get("acceptance", {}),
            meta.get("rounds", 1),
        )


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _json_float(v):
    return None if (isinstance(v, float) and not math.isfinite(v)) else v


def compute_diagnostics(per_chain):
    out = {}
    for k, name in enumerate(PARAM_NAMES):
        c = per_chain[:, :, k]
        if np.ptp(c) == 0:
            rhat, ess = 1.0, float(c.size)
        else:
            rhat, ess = split_rhat(c), effective_sample_size(c)
        out[name] = {"r_hat": _json_float(rhat), "ess": _json_float(ess)}
    return out


# --------------------------------------------------------------------------
# sampling


def chain_rng(seed, chain):
    """Independent generator for one chain, derived only from (seed, chain)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chain),)))


def derive_seed(seed, key):
    """Stable 32-bit seed for a named sub-task (e.g. one building)."""
    h = hashlib.sha256(f"{int(seed)}:{key}".encode()).digest()
    return int.from_bytes(h[:4], "little")


def _initial_center(temps, y, priors):
    try:
        p = thermal.fit_ls_range(_Arr(temps, y))
        x = p.as_array()
        scale = float(np.std(y)) if len(y) else 1.0
        if not x[5] > 0:
            x[5] = max(1e-3 * scale, 1e-12)
        return x, p
    except DegenerateDesign:
        pass
    base = float(np.mean(y)) if len(y) else priors.base_mean
    sig = float(np.std(y)) if len(y) > 1 and np.std(y) > 0 else priors.sigma_scale
    span = priors.t_high - priors.t_low
    x = np.array([base, 0.1 * max(base, 1e-6), 0.1 * max(base, 1e-6),
                  priors.t_low + span / 3, priors.t_low + 2 * span / 3, sig])
    return x, None


class _Arr:
    def __init__(self, temps, energy):
        self.temps = temps
        self.energy = energy


def _jitter(center, rng, priors):
    x = center.copy()
    x[[0, 1, 2, 5]] *= 1.0 + rng.uniform(-0.1, 0.1, size=4)
    x[[3, 4]] += rng.uniform(-3.0, 3.0, size=2)
    x[3], x[4] = np.clip(sorted((x[3], x[4])), priors.t_low, priors.t_high)
    x[:3] = np.maximum(x[:3], 0.0)
    return x


def _initial_steps(x, y):
    scale = float(np.std(y)) if len(y) > 1 else 1.0
    scale = scale if scale > 0 else 1.0
    steps = np.empty(NDIM)
    steps[0] = 0.05 * abs(x[0]) + 1e-3 * scale
    steps[1] = 0.05 * abs(x[1]) + 1e-4 * scale
    steps[2] = 0.05 * abs(x[2]) + 1e-4 * scale
    steps[3] = 0.5
    steps[4] = 0.5
    steps[5] = 0.05 * abs(x[5]) + 1e-6 * scale
    return steps


def sample_posterior(aligned, priors: PriorSpec = PriorSpec(), config: SamplerConfig | None = None) -> PosteriorSamples:
    """Draw posterior samples for one building.

    Chains start from a jittered least-squares fit. If the split R-hat of any
    parameter exceeds ``config.rhat_max`` the chains are continued (fresh
    burn-in and draws) up to ``config.max_rounds`` times; the final result is
    returned either way and ``converged`` reports the outcome.
    """
    if config is None:
        raise ValueError("a SamplerConfig with an explicit seed is required")
    temps = np.ascontiguousarray(aligned.temps, dtype=float)
    y = np.ascontiguousarray(aligned.energy, dtype=float)
    if len(y) < config.min_days:
        raise Unfittable(f"{getattr(aligned, 'building_id', '')}: {len(y)} aligned days, need {config.min_days}")
    prior_arr = priors.as_array()
    center, _ = _initial_center(temps, y, priors)

    rngs = [chain_rng(config.seed, c) for c in range(config.chains)]
    states = []
    for rng in rngs:
        x0 = _jitter(center, rng, priors)
        if not np.isfinite(_logpost_kernel(x0, temps, y, prior_arr)):
            x0 = center.copy()
            x0[3], x0[4] = np.clip(sorted((x0[3], x0[4])), priors.t_low, priors.t_high)
        states.append([x0, _initial_steps(x0, y), np.zeros((NDIM, NDIM)), 1.0])

    rounds = 0
    while True:
        rounds += 1
        kept = []
        acc = []
        for c, rng in enumerate(rngs):
            x, steps, chol, bscale = states[c]
            for n_iter, adapt in ((config.burn_in, True), (config.draws, False)):
                if n_iter == 0:
                    continue
                zc = rng.standard_normal((n_iter, NDIM))
                lu_c = np.log(rng.random((n_iter, NDIM)))
                zb = rng.standard_normal((n_iter, NDIM))
                lu_b = np.log(rng.random(n_iter))
                draws, x, steps, chol, bscale, a_c, a_b = _run_chain(
                    x, temps, y, prior_arr, steps.copy(), chol.copy(), bscale, n_iter, adapt, zc, lu_c, zb, lu_b
                )
            states[c] = [x, steps, chol, bscale]
            kept.append(draws)
            acc.append({"coordinate": [float(v) for v in a_c], "joint": float(a_b)})
        per_chain = np.stack(kept)
        diags = compute_diagnostics(per_chain)
        samples = PosteriorSamples(
            per_chain.reshape(-1, NDIM),
            config.chains,
            config.burn_in,
            int(config.seed),
            diags,
            {"chains": acc},
            rounds,
        )
        samples.diagnostics_threshold = config.rhat_max
        if samples.converged or rounds >= config.max_rounds:
            return samples


def check_convergence(samples: PosteriorSamples, threshold=1.1, building_id=""):
    if samples.max_rhat > threshold:
        raise NonConvergence(f"{building_id}: max r_hat {samples.max_rhat:.3f} exceeds {threshold}")


def ecdf(samples: PosteriorSamples, param: str) -> ParamECDF:
    if param not in ("base", "gamma_heat", "gamma_cool"):
        raise ValueError(f"ECDFs are built for base, gamma_heat and gamma_cool, not {param!r}")
    return empirical_cdf(samples.column(param))


def balance_point_means(samples: PosteriorSamples):
    return float(samples.column("t_heat").mean()), float(samples.column("t_cool").mean())
