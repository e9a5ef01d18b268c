import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from energyrank import ordering
from energyrank.distributions import LINEAR, STEP, ParamECDF, empirical_cdf
from energyrank.errors import MissingEcdf
from energyrank.ingest import BuildingRecord, PropertyType
from energyrank.ordering import BucketSpec, DominanceVerdict, PeerGroup

FIRST, SECOND, NEITHER = DominanceVerdict.FIRST_DOMINATES, DominanceVerdict.SECOND_DOMINATES, DominanceVerdict.NEITHER


def dense_verdict(f, g, step=2.0**-10):
    """Oracle: left Riemann sum of G - F on a dense grid that contains every breakpoint.

    For step CDFs on a dyadic lattice coarser than ``step`` the running sum is
    exact at grid points, and the running integral is piecewise linear with
    kinks only at breakpoints, so its extremes are grid values.
    """
    lo, hi = min(f.lo, g.lo), max(f.hi, g.hi)
    x = np.arange(lo, hi + step / 2, step)
    D = np.concatenate(([0.0], np.cumsum((g(x[:-1]) - f(x[:-1])) * step)))
    eps = 1e-9 * (hi - lo)
    a = D.min() >= -eps and D[-1] > eps
    b = -D.max() >= -eps and -D[-1] > eps
    return FIRST if a and not b else SECOND if b and not a else NEITHER


def lattice_cdf(rng, n_max=6, width=8.0):
    """Random step CDF with support on multiples of 1/4 and values on multiples of 1/16."""
    k = rng.integers(1, n_max + 1)
    support = np.sort(rng.choice(int(width * 4) + 1, size=k, replace=False)) / 4.0
    cuts = np.sort(rng.choice(np.arange(1, 16), size=k - 1, replace=False)) / 16.0 if k > 1 else np.array([])
    return ParamECDF(support, np.append(cuts, 1.0), STEP)


# --------------------------------------------------------------------------
# single-pair examples


def test_identical_is_neither():
    f = empirical_cdf([1.0, 2.0, 5.0])
    assert not ordering.ssd_dominates(f, f)
    assert ordering.verdict(f, f) == NEITHER


def test_right_shift_dominates():
    g = empirical_cdf([1.0, 2.0, 5.0])
    f = g.shifted(1.0)
    assert ordering.ssd_dominates(f, g) and not ordering.ssd_dominates(g, f)
    assert ordering.verdict(f, g) == FIRST
    assert ordering.verdict(g, f) == SECOND


def test_early_red_region_blocks_dominance():
    # G - F is negative on [0, 1) before turning positive, so the running
    # integral dips below zero although it ends positive
    f = ParamECDF([0.0, 3.0], [0.2, 1.0])
    g = ParamECDF([1.0, 2.0], [0.5, 1.0])
    I = ordering.ssd_integral(f, g)
    assert I.minimum == pytest.approx(-0.2) and I.final == pytest.approx(0.9)
    assert not ordering.ssd_dominates(f, g)
    assert not ordering.ssd_dominates(g, f)
    assert ordering.verdict(f, g) == NEITHER == dense_verdict(f, g)


def test_interior_extreme_of_linear_cdfs():
    # two linear CDFs crossing inside one interval: the dip is at the crossing
    f = ParamECDF([0.0, 1.0], [0.0, 1.0], LINEAR)
    g = ParamECDF([0.0, 1.0], [0.5, 1.0], LINEAR)
    I = ordering.ssd_integral(f, g)
    # G - F = 0.5 - 0.5 x on [0, 1]: D(1) = 0.25, no sign change
    assert I.final == pytest.approx(0.25) and I.minimum == pytest.approx(0.0)
    # F = 0.2 + 0.4x on [0, .5], then up to 1 at x = 1; G(x) = x. G - F = 0.6x - 0.2
    # crosses zero at 1/3, so the global minimum -1/30 of the running integral
    # lies strictly inside the first interval; the integral returns to 0 at 1
    f = ParamECDF([0.0, 0.5, 1.0], [0.2, 0.4, 1.0], LINEAR)
    g = ParamECDF([0.0, 1.0], [0.0, 1.0], LINEAR)
    I = ordering.ssd_integral(f, g)
    assert I.minimum == pytest.approx(-1 / 30, abs=1e-15)
    assert I.final == pytest.approx(0.0, abs=1e-15) and I.maximum == pytest.approx(0.0, abs=1e-15)
    assert ordering.verdict(f, g) == NEITHER


def test_similar_samples_are_neither():
    rng = np.random.default_rng(0)
    n_neither = 0
    for _ in range(20):
        a = empirical_cdf(rng.normal(0, 1, 300))
        b = empirical_cdf(rng.normal(0, 1, 300))
        v = ordering.verdict(a, b)
        n_neither += v == NEITHER
    assert n_neither >= 14


def test_negative_epsilon_rejected():
    f = empirical_cdf([1.0])
    with pytest.raises(ValueError):
        ordering.ssd_dominates(f, f, -1.0)


# --------------------------------------------------------------------------
# oracle equivalence and invariants


def test_matches_dense_oracle_on_random_lattice_pairs():
    rng = np.random.default_rng(1)
    seen = {FIRST: 0, SECOND: 0, NEITHER: 0}
    for _ in range(300):
        f, g = lattice_cdf(rng), lattice_cdf(rng)
        v = ordering.verdict(f, g)
        assert v == dense_verdict(f, g)
        seen[v] += 1
    assert min(seen.values()) > 10


def test_matches_dense_oracle_for_linear_cdfs():
    rng = np.random.default_rng(2)
    for _ in range(30):
        fs = []
        for _ in range(2):
            s = np.sort(rng.choice(np.linspace(0, 4, 17), size=5, replace=False))
            c = np.append(np.sort(rng.uniform(0, 1, 4)), 1.0)
            fs.append(ParamECDF(s, c, LINEAR))
        f, g = fs
        lo, hi = min(f.lo, g.lo), max(f.hi, g.hi)
        xs = np.linspace(lo, hi, 400_001)
        d = g(xs) - f(xs)
        D = np.concatenate(([0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(xs))))
        I = ordering.ssd_integral(f, g)
        # jumps at a first support point make the dense trapezoid slightly off near it
        assert I.minimum == pytest.approx(D.min(), abs=1e-4)
        assert I.final == pytest.approx(D[-1], abs=1e-4)


def refine(f):
    """Same function with a midpoint inserted between every pair of breakpoints."""
    s = f.support
    mids = 0.5 * (s[1:] + s[:-1])
    new = np.sort(np.concatenate([s, mids]))
    return ParamECDF(new, f(new), f.kind)


def test_verdicts_invariant_under_grid_refinement():
    rng = np.random.default_rng(3)
    for _ in range(200):
        f, g = lattice_cdf(rng), lattice_cdf(rng)
        rf, rg = refine(f), refine(g)
        assert ordering.verdict(rf, rg) == ordering.verdict(f, g)
        a, b = ordering.ssd_integral(f, g), ordering.ssd_integral(rf, rg)
        assert (a.minimum, a.maximum, a.final) == pytest.approx((b.minimum, b.maximum, b.final), abs=1e-12)


samples = st.lists(st.integers(-40, 40).map(lambda k: k / 8), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(samples, samples)
def test_antisymmetry(a, b):
    f, g = empirical_cdf(a), empirical_cdf(b)
    fg = ordering.ssd_dominates(f, g, 0.0)
    gf = ordering.ssd_dominates(g, f, 0.0)
    assert not (fg and gf)
    v, w = ordering.verdict(f, g), ordering.verdict(g, f)
    assert (v == FIRST) == (w == SECOND)
    assert (v == NEITHER) == (w == NEITHER)


@settings(max_examples=100, deadline=None)
@given(samples, st.integers(1, 40).map(lambda k: k / 8))
def test_shift_monotonicity(a, delta):
    f = empirical_cdf(a)
    assert ordering.ssd_dominates(f.shifted(delta), f)


@settings(max_examples=100, deadline=None)
@given(samples, st.integers(1, 20), st.integers(1, 20))
def test_transitivity_on_shift_families(a, d1, d2):
    f = empirical_cdf(a)
    g, h = f.shifted(d1 / 8), f.shifted((d1 + d2) / 8)
    assert ordering.ssd_dominates(h, g) and ordering.ssd_dominates(g, f)
    assert ordering.ssd_dominates(h, f)


# --------------------------------------------------------------------------
# peer groups and counts


def bldg(i, ptype="SingleFamily", year=1990, area=1500.0):
    return BuildingRecord(f"B{i:03d}", PropertyType(ptype), year, area)


def test_peer_groups_partition():
    bs = [bldg(i) for i in range(5)] + [bldg(10 + i, "Apartment") for i in range(3)]
    groups = ordering.make_peer_groups(bs, BucketSpec(min_cohort=1))
    assert len(groups) == 2
    ids = [set(g.member_ids) for g in groups]
    assert ids[0].isdisjoint(ids[1]) and set.union(*ids) == {b.id for b in bs}
    assert ordering.make_peer_groups(bs[:5], BucketSpec(min_cohort=1))[0].member_ids == tuple(b.id for b in bs[:5])


def test_bucket_boundaries():
    spec = BucketSpec()
    assert spec.key(bldg(0, year=1999, area=999.9)) == ("SingleFamily", 1980, 0.0)
    assert spec.key(bldg(0, year=2000, area=1000.0)) == ("SingleFamily", 2000, 1000.0)


def test_small_group_is_discarded():
    bs = [bldg(i) for i in range(19)]
    (g,) = ordering.make_peer_groups(bs)
    assert g.discarded and len(g) == 19
    (g,) = ordering.make_peer_groups(bs + [bldg(99)])
    assert not g.discarded


def ecdf_map(cdfs):
    return {bid: {p: f for p in ordering.RANKED_PARAMS} for bid, f in cdfs.items()}


def test_counts_shift_chain():
    base = empirical_cdf([1.0, 2.0, 4.0])
    cdfs = {"A": base.shifted(2.0), "B": base.shifted(1.0), "C": base}
    g = PeerGroup(("x", 0, 0.0), ("A", "B", "C"))
    dc = ordering.dominance_counts(g, ecdf_map(cdfs))
    for p in ordering.RANKED_PARAMS:
        assert [dc.wins(p, k) for k in "ABC"] == [2, 1, 0]
    # ordered-pair oracle
    for p in ordering.RANKED_PARAMS:
        for a in "ABC":
            expect = sum(ordering.ssd_dominates(cdfs[a], cdfs[b]) for b in "ABC" if b != a)
            assert dc.wins(p, a) == expect


def test_counts_identical_and_singleton():
    f = empirical_cdf([1.0, 2.0])
    g = PeerGroup(("x", 0, 0.0), ("A", "B", "C", "D"))
    dc = ordering.dominance_counts(g, ecdf_map(dict.fromkeys("ABCD", f)))
    assert all(v == 0 for c in dc.counts.values() for v in c.values())
    one = ordering.dominance_counts(PeerGroup(("x", 0, 0.0), ("A",)), ecdf_map({"A": f}))
    assert all(v == 0 for c in one.counts.values() for v in c.values())


def test_counts_missing_ecdf():
    g = PeerGroup(("x", 0, 0.0), ("A", "B"))
    with pytest.raises(MissingEcdf):
        ordering.dominance_counts(g, ecdf_map({"A": empirical_cdf([1.0])}))


def test_counts_bounds_and_pair_oracle():
    rng = np.random.default_rng(4)
    ids = [f"H{i}" for i in range(12)]
    cdfs = {i: lattice_cdf(rng) for i in ids}
    g = PeerGroup(("x", 0, 0.0), tuple(ids))
    dc = ordering.dominance_counts(g, ecdf_map(cdfs), params=("base",))
    n = len(ids)
    assert sum(dc.counts["base"].values()) <= n * (n - 1) // 2
    for a in ids:
        assert 0 <= dc.wins("base", a) <= n - 1
        assert dc.wins("base", a) == sum(dense_verdict(cdfs[a], cdfs[b]) == FIRST for b in ids if b != a)


def test_counts_csv():
    f = empirical_cdf([1.0])
    g = PeerGroup(("x", 0, 0.0), ("A", "B"))
    dc = ordering.dominance_counts(g, ecdf_map({"A": f.shifted(1.0), "B": f}))
    lines = ordering.counts_csv_text([dc]).splitlines()
    assert lines[0] == "building_id,param,wins,group_size"
    assert "A,base,1,2" in lines and "B,gamma_heat,0,2" in lines
    assert len(lines) == 1 + 2 * 3
