import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from energyrank import ingest, region, synth, thermal
from energyrank.errors import BadSpec, IdMismatch
from energyrank.faults import EfficiencyFlags, Fault, FaultReport
from energyrank.synth import GroundTruth, SynthSpec, TruthHome
from energyrank.thermal import ParamPoint


def test_single_noiseless_home_equals_predict():
    d = synth.generate(SynthSpec(1, seed=3, noise_sd=0.0))
    (b,) = d.buildings
    p = d.truth.homes[b.id].params
    assert np.array_equal(d.energy[b.id].energy, thermal.predict(p, d.weather).mean)
    assert np.array_equal(d.energy[b.id].dates, d.weather.dates)


def test_same_seed_same_output(tmp_path):
    spec = SynthSpec(20, seed=9, noise_frac=(0.05, 0.1), fault_rates={"PoorBuildingEnvelope": 0.3}, emit_annual=True)
    a = synth.write_dataset(synth.generate(spec), tmp_path / "a")
    b = synth.write_dataset(synth.generate(spec), tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b]
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()
    c = synth.write_dataset(synth.generate(SynthSpec(20, seed=10, noise_frac=(0.05, 0.1))), tmp_path / "c")
    assert (tmp_path / "c" / "energy.csv").read_bytes() != (tmp_path / "a" / "energy.csv").read_bytes()
    assert len(c) == 4


def test_homes_do_not_depend_on_population_size():
    small = synth.generate(SynthSpec(5, seed=2, noise_sd=1.0))
    big = synth.generate(SynthSpec(9, seed=2, noise_sd=1.0))
    # ids are zero-padded to the population width, so compare by index
    for i in range(5):
        a = small.truth.homes[f"H{i + 1}"]
        b = big.truth.homes[f"H{i + 1}"]
        assert a == b


def test_fault_count_within_binomial_bound():
    d = synth.generate(SynthSpec(1000, seed=1, days=30, noise_sd=0.0, fault_rates={"InefficientAppliances": 0.2}))
    k = len(d.truth.faulty("InefficientAppliances"))
    assert abs(k - 200) <= 3 * math.sqrt(1000 * 0.2 * 0.8)


def test_noiseless_refit_recovers_truth():
    params = {"t_cool": {"dist": "uniform", "low": 66.0, "high": 70.0}}
    d = synth.generate(SynthSpec(10, seed=4, noise_sd=0.0, parameters=params))
    for b in d.buildings:
        a = ingest.align(d.energy[b.id], d.weather)
        got = thermal.fit_ls_range(a).as_array()[:5]
        want = d.truth.homes[b.id].params.as_array()[:5]
        np.testing.assert_allclose(got[:3], want[:3], rtol=1e-3)
        np.testing.assert_allclose(got[3:], want[3:], atol=1e-3)


def test_cold_profile_has_more_heating_degree_days():
    d = synth.generate(SynthSpec(100, seed=5, days=365, noise_sd=1.0, weather_profile="ColdTemperate"))
    hdd, cdd = region.degree_days(d.weather)
    assert hdd > cdd
    hot = synth.generate(SynthSpec(1, seed=5, weather_profile="HotArid"))
    hdd, cdd = region.degree_days(hot.weather)
    assert cdd > hdd


pre_params = st.fixed_dictionaries({
    "base": st.floats(1, 50),
    "gamma_heat": st.floats(0.1, 5),
    "gamma_cool": st.floats(0.1, 5),
    "t_heat": st.floats(40, 65),
    "t_cool": st.floats(66, 85),
})


@settings(max_examples=100, deadline=None)
@given(pre_params, st.sampled_from(list(Fault)), st.integers(0, 2**32 - 1))
def test_injection_moves_the_parameter_the_inefficient_way(x, fault, seed):
    pre = dict(x)
    post = synth.inject(dict(x), fault, np.random.default_rng(seed))
    up = {
        Fault.POOR_BUILDING_ENVELOPE: ("gamma_heat", "gamma_cool"),
        Fault.INEFFICIENT_HEATER: ("gamma_heat",),
        Fault.INEFFICIENT_AC: ("gamma_cool",),
        Fault.INEFFICIENT_APPLIANCES: ("base",),
        Fault.HIGH_SET_POINT: ("t_heat",),
    }.get(fault, ())
    for k in up:
        assert post[k] > pre[k]
    if fault == Fault.LOW_SET_POINT:
        assert post["t_cool"] < pre["t_cool"]
    assert post["t_heat"] <= post["t_cool"]
    ParamPoint(*(post[k] for k in thermal.PARAM_NAMES[:5]))


def test_annual_records_match_noiseless_split():
    d = synth.generate(SynthSpec(3, seed=6, noise_sd=2.0, emit_annual=True))
    for bid, rec in d.annual.items():
        s = thermal.energy_split(d.truth.homes[bid].params, d.weather)
        assert (rec.total, rec.heating, rec.cooling) == (s.total, s.heating, s.cooling)


def test_ground_truth_round_trip(tmp_path):
    d = synth.generate(SynthSpec(4, seed=7, noise_sd=1.0, fault_rates={"HighSetPoint": 0.5}))
    d.truth.write(tmp_path / "t.json")
    back = GroundTruth.read(tmp_path / "t.json")
    assert back.homes == d.truth.homes and back.seed == 7


def test_spec_from_toml(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(
        'n_homes = 3\nseed = 1\nweather_profile = "Mild"\nnoise_frac = [0.1, 0.2]\n'
        '[parameters]\nbase = {dist = "uniform", low = 10.0, high = 12.0}\n'
        '[fault_rates]\nInefficientAC = 0.5\n'
        '[attributes]\nproperty_types = ["Apartment"]\nfloor_area = [800.0, 900.0]\n'
        '[location]\ncenter = [40.0, -74.0]\nspread_deg = 0.01\n'
    )
    s = SynthSpec.from_toml(p)
    assert s.n_homes == 3 and s.noise_frac == (0.1, 0.2) and s.center == (40.0, -74.0)
    d = synth.generate(s)
    assert all(b.property_type.value == "Apartment" and 800 <= b.floor_area <= 900 for b in d.buildings)


@pytest.mark.parametrize(
    "bad",
    [
        {"n_homes": 0, "seed": 1},
        {"n_homes": 1},
        {"n_homes": 1, "seed": 1, "fault_rates": {"Gremlins": 0.1}},
        {"n_homes": 1, "seed": 1, "fault_rates": {"HighSetPoint": 1.5}},
        {"n_homes": 1, "seed": 1, "fault_rates": {"HighSetPoint": 0.6, "InefficientAC": 0.6}},
        {"n_homes": 1, "seed": 1, "weather_profile": "Arctic"},
        {"n_homes": 1, "seed": 1, "colour": "blue"},
        {"n_homes": 1, "seed": 1, "parameters": {"base": {"dist": "beta"}}},
    ],
)
def test_bad_specs(bad):
    with pytest.raises(BadSpec):
        synth.SynthSpec.from_dict(bad).distributions()


def test_missing_spec_file(tmp_path):
    with pytest.raises(BadSpec):
        SynthSpec.from_toml(tmp_path / "none.toml")


# --------------------------------------------------------------------------
# scoring


def truth_of(faults):
    p = ParamPoint(1, 1, 1, 60, 70)
    return GroundTruth({k: TruthHome(p, p, 1000.0, tuple(v)) for k, v in faults.items()})


def report(bid, *fs):
    return FaultReport(bid, EfficiencyFlags(), tuple(Fault(f) for f in fs))


def test_score_perfect():
    t = truth_of({"a": ["InefficientAppliances"], "b": []})
    m = synth.score([report("a", "InefficientAppliances"), report("b")], t)
    assert m["InefficientAppliances"]["precision"] == m["InefficientAppliances"]["recall"] == 1.0


def test_score_empty_reports():
    t = truth_of({"a": ["InefficientAppliances"]})
    m = synth.score([], t)
    assert m["InefficientAppliances"]["recall"] == 0.0
    assert math.isnan(m["InefficientAppliances"]["precision"])


def test_score_confusion_example():
    t = truth_of({"a": ["InefficientAC"], "b": ["InefficientAC"], "c": []})
    m = synth.score([report("a", "InefficientAC"), report("c", "InefficientAC")], t, ["InefficientAC"])
    assert (m["InefficientAC"]["tp"], m["InefficientAC"]["fp"], m["InefficientAC"]["fn"]) == (1, 1, 1)
    assert m["InefficientAC"]["precision"] == 0.5 and m["InefficientAC"]["recall"] == 0.5


def test_score_unknown_id():
    with pytest.raises(IdMismatch):
        synth.score([report("zzz")], truth_of({"a": []}))


def test_mode_agreement():
    a = {"x": EfficiencyFlags(high_base=True), "y": EfficiencyFlags(high_base=True), "z": EfficiencyFlags()}
    b = {"x": EfficiencyFlags(high_base=True), "y": EfficiencyFlags(), "z": EfficiencyFlags(high_base=True)}
    assert synth.mode_agreement(a, b, "high_base") == pytest.approx(1 / 3)
    assert synth.mode_agreement(a, a, "high_base") == 1.0
    assert math.isnan(synth.mode_agreement(a, b, "high_gamma_heat"))
    with pytest.raises(ValueError):
        synth.mode_agreement(a, b, "nope")
