import numpy as np
import pytest

from prevkit.errors import EmptySubgroupError, GridError, StratificationError, UnknownDiseaseError
from prevkit.grid import ConditioningSet
from prevkit.query import (
    DEFAULT_BAND_LEVEL,
    SCALE_ABSOLUTE,
    SCALE_PER_100K,
    CurveSeries,
    PrevalenceCurve,
    PrevalenceQuery,
    aggregate_cells,
    aggregate_prevalence,
    credible_band,
    curve,
    curve_payload,
    expected_cases,
)
from prevkit.store import dequantize_probs, quantize_probs, store_from_arrays

from conftest import SEED, build_pipeline, make_config, make_shape


def _tiny_store(probs_by_cell, weights_by_cell, n_locations=2):
    """A store over `n_locations` single-profile locations."""
    shape = make_shape(n_locations=n_locations, n_regions=1, cohorts=(1956,),
                       ages=(52, 52), sex_levels=(1,), smoking_levels=(0,),
                       education_levels=(0,), economic_levels=(0,), n_diseases=1)
    probs = quantize_probs(np.asarray(probs_by_cell, dtype=np.float64))[:, :, None]
    weights = np.asarray(weights_by_cell, dtype=np.float32)
    meta = {
        "grid": shape.to_json_dict(), "grid_digest": shape.digest(),
        "particles": probs.shape[1], "b_original": probs.shape[1], "thin_stride": 1,
        "weight_replicates": 1, "design_layout": "test", "seed": 0,
        "ensemble_seed": 0, "dispersion": 0.0,
        "n_cells": probs.shape[0], "n_diseases": 1,
    }
    return store_from_arrays(meta, probs, weights)


# ---------------------------------------------------------------------------
# aggregate_prevalence
# ---------------------------------------------------------------------------

def test_fully_fixed_conditioning_returns_cell_particles(small_pipeline):
    cfg, store, grid = (small_pipeline[k] for k in ("config", "store", "grid"))
    shape = cfg.shape
    profile_spec = {"location": shape.locations[2], "cohort": shape.cohorts[1],
                    "age": 54, "sex": 1, "smoking": 1, "education": 0, "economic": 1}
    cond = ConditioningSet.from_dict(profile_spec, shape)
    agg = aggregate_prevalence(store, "tumors", cond)
    cell_id = grid.ids_matching(cond)
    assert cell_id.size == 1
    j = store.disease_index("tumors")
    expected = dequantize_probs(store.probs[cell_id[0], :, j])
    assert np.array_equal(agg.prevalence, expected)


def test_two_cells_equal_weights_average_to_midpoint():
    store = _tiny_store(
        probs_by_cell=[[0.2] * 4, [0.4] * 4],
        weights_by_cell=[[0.5] * 4, [0.5] * 4],
    )
    agg = aggregate_prevalence(store, "cardiovascular", ConditioningSet())
    # 0.2 and 0.4 quantize exactly, so the midpoint is exactly 0.3
    assert np.allclose(agg.prevalence, 0.3, atol=1e-15)


def test_aggregate_matches_full_enumeration_oracle(small_pipeline):
    cfg, store, grid = (small_pipeline[k] for k in ("config", "store", "grid"))
    shape = cfg.shape
    rng = np.random.default_rng(77)
    profiles = [grid.id_to_profile(i) for i in range(grid.n_cells)]
    w_all = store.weights.astype(np.float64)
    for _ in range(40):
        spec = {}
        if rng.random() < 0.7:
            spec["location"] = list(rng.choice(shape.locations,
                                               size=int(rng.integers(1, 4)), replace=False))
        if rng.random() < 0.5:
            spec["cohort"] = int(rng.choice(shape.cohorts))
        if rng.random() < 0.5:
            spec["smoking"] = int(rng.integers(0, 2))
        if rng.random() < 0.4:
            spec["age"] = [int(a) for a in rng.choice(shape.ages, size=2, replace=False)]
        cond = ConditioningSet.from_dict(spec, shape)
        disease = str(rng.choice(shape.diseases.ids))
        j = store.disease_index(disease)
        agg = aggregate_prevalence(store, disease, cond)

        num = np.zeros(store.n_particles)
        den = np.zeros(store.n_particles)
        for cid, profile in enumerate(profiles):
            if cond.matches(profile):
                pi = dequantize_probs(store.probs[cid, :, j])
                num += pi * w_all[cid]
                den += w_all[cid]
        oracle = num / den
        assert np.max(np.abs(agg.prevalence - oracle)) <= 1e-12


def test_aggregate_convexity_per_particle(small_pipeline):
    cfg, store, grid = (small_pipeline[k] for k in ("config", "store", "grid"))
    cond = ConditioningSet.from_dict({"smoking": 1}, cfg.shape)
    ids = grid.ids_matching(cond)
    j = store.disease_index("diabetes")
    agg = aggregate_cells(store, j, ids)
    per_cell = dequantize_probs(store.probs[ids, :, j])
    assert np.all(agg.prevalence >= per_cell.min(axis=0) - 1e-15)
    assert np.all(agg.prevalence <= per_cell.max(axis=0) + 1e-15)


def test_aggregate_unknown_disease_raises(small_store):
    with pytest.raises(UnknownDiseaseError):
        aggregate_prevalence(small_store, "gout", ConditioningSet())


def test_replicate_resolved_toggle_changes_weighting(small_pipeline):
    store = small_pipeline["store"]
    cond = ConditioningSet.from_dict({"education": 1}, small_pipeline["config"].shape)
    resolved = aggregate_prevalence(store, "tumors", cond, replicate_resolved=True)
    averaged = aggregate_prevalence(store, "tumors", cond, replicate_resolved=False)
    assert not np.array_equal(resolved.prevalence, averaged.prevalence)
    assert abs(resolved.prevalence.mean() - averaged.prevalence.mean()) < 0.01


# ---------------------------------------------------------------------------
# credible_band
# ---------------------------------------------------------------------------

def test_band_on_constant_vector_is_degenerate():
    assert credible_band(np.full(300, 0.123), 0.9) == (0.123, 0.123)


def test_band_near_level_one_reaches_extremes():
    v = np.random.default_rng(3).random(50)
    lo, hi = credible_band(v, 1 - 1e-12)
    assert abs(lo - v.min()) <= 1e-9
    assert abs(hi - v.max()) <= 1e-9


def test_band_uses_type7_interpolation():
    v = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    lo, hi = credible_band(v, 0.9)
    # type 7: position p*(n-1) -> 0.05*4 = 0.2 and 0.95*4 = 3.8
    assert lo == pytest.approx(0.2, abs=1e-12)
    assert hi == pytest.approx(3.8, abs=1e-12)


def test_band_nesting_in_level():
    v = np.random.default_rng(11).normal(size=300)
    lo50, hi50 = credible_band(v, 0.5)
    lo90, hi90 = credible_band(v, 0.9)
    assert lo90 <= lo50 <= hi50 <= hi90


def test_band_order_statistics_calibration():
    # 300 uniforms at level 0.90: endpoints near (0.05, 0.95) within 0.04
    # for at least 95% of 1000 replicates
    rng = np.random.default_rng(SEED)
    ok = 0
    for _ in range(1000):
        lo, hi = credible_band(rng.random(300), 0.9)
        ok += int(abs(lo - 0.05) <= 0.04 and abs(hi - 0.95) <= 0.04)
    assert ok >= 950


def test_band_input_validation():
    with pytest.raises(ValueError):
        credible_band(np.array([]), 0.9)
    with pytest.raises(ValueError):
        credible_band(np.array([0.5]), 1.0)


# ---------------------------------------------------------------------------
# curve
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def paperish_pipeline():
    """Paper-shaped cohorts/ages/years on a 2-location grid."""
    shape = make_shape(
        n_locations=2, n_regions=1,
        cohorts=(1950, 1954, 1958, 1962, 1966),
        ages=(50, 65), years=(2010, 2020),
        sex_levels=(0, 1),
    )
    cfg = make_config(shape, survey_n=4000)
    return build_pipeline(cfg, seed=SEED, b_draws=200, particles=50, replicates=10)


def test_year_view_covers_the_configured_decade(paperish_pipeline):
    store = paperish_pipeline["store"]
    c = curve(store, PrevalenceQuery(disease="tumors", view="year"))
    assert c.axis == tuple(range(2010, 2021))
    assert len(c.axis) == 11


def test_age_view_covers_the_configured_span(paperish_pipeline):
    store = paperish_pipeline["store"]
    c = curve(store, PrevalenceQuery(disease="tumors", view="age"))
    assert c.axis == tuple(range(50, 66))
    assert len(c.axis) == 16


def test_year_points_aggregate_only_matching_cohort_age_pairs(paperish_pipeline):
    store = paperish_pipeline["store"]
    grid = store.grid
    j = store.disease_index("diabetes")
    c = curve(store, PrevalenceQuery(disease="diabetes", view="year", bands=False))
    t = c.axis[3]
    pairs = [(coh, t - coh) for coh in store.shape.cohorts
             if store.shape.age_min <= t - coh <= store.shape.age_max]
    ids = grid.ids_for_pairs(ConditioningSet(), pairs)
    expected = aggregate_cells(store, j, ids).prevalence.mean()
    assert c.series[0].mean[3] == pytest.approx(expected, abs=1e-15)
    years = grid.cell_year[ids]
    assert np.all(years == t)


def test_stratified_binary_mixture_equals_unstratified(paperish_pipeline):
    store = paperish_pipeline["store"]
    shape = store.shape
    base = ConditioningSet.from_dict({"location": shape.locations[0]}, shape)
    q = PrevalenceQuery(disease="respiratory", view="year", conditioning=base,
                        stratify_by="smoking")
    c = curve(store, q)
    assert len(c.series) == 2
    assert {s.label for s in c.series} == {"smoker", "non-smoker"}

    grid = store.grid
    j = store.disease_index("respiratory")
    coarse = curve(store, PrevalenceQuery(disease="respiratory", view="year",
                                          conditioning=base, bands=False))
    for i, t in enumerate(c.axis):
        pairs = [(coh, t - coh) for coh in shape.cohorts
                 if shape.age_min <= t - coh <= shape.age_max]
        num = np.zeros(store.n_particles)
        den = np.zeros(store.n_particles)
        for value in (0, 1):
            sub = base.conjoin(ConditioningSet(constraints=(("smoking", (value,)),)))
            ids = grid.ids_for_pairs(sub, pairs)
            agg = aggregate_cells(store, j, ids)
            num += agg.prevalence * agg.weight
            den += agg.weight
        mixture = (num / den).mean()
        assert abs(mixture - coarse.series[0].mean[i]) <= 1e-10


def test_stratify_by_cohort_in_age_view(paperish_pipeline):
    store = paperish_pipeline["store"]
    c = curve(store, PrevalenceQuery(disease="cardiovascular", view="age",
                                     stratify_by="cohort"))
    assert len(c.series) == 5
    assert [s.label for s in c.series] == [str(c_) for c_ in store.shape.cohorts]


def test_stratification_cap_rejected_with_guidance():
    shape = make_shape(ages=(50, 55))  # 6 ages
    cfg = make_config(shape, survey_n=500)
    pipe = build_pipeline(cfg, seed=SEED, b_draws=20, particles=10, replicates=2)
    with pytest.raises(StratificationError) as exc:
        curve(pipe["store"], PrevalenceQuery(disease="tumors", view="year",
                                             stratify_by="age"))
    msg = str(exc.value)
    assert "6 curves" in msg and "5" in msg and "Restrict" in msg


def test_stratify_fixed_dimension_rejected(small_pipeline):
    cfg, store = small_pipeline["config"], small_pipeline["store"]
    cond = ConditioningSet.from_dict({"smoking": 1}, cfg.shape)
    with pytest.raises(StratificationError):
        curve(store, PrevalenceQuery(disease="tumors", view="year",
                                     conditioning=cond, stratify_by="smoking"))


def test_stratify_within_restricted_set_is_allowed(small_pipeline):
    cfg, store = small_pipeline["config"], small_pipeline["store"]
    cond = ConditioningSet.from_dict({"location": list(cfg.shape.locations[:2])},
                                     cfg.shape)
    c = curve(store, PrevalenceQuery(disease="tumors", view="year",
                                     conditioning=cond, stratify_by="location"))
    assert [s.label for s in c.series] == list(cfg.shape.locations[:2])


def test_bands_toggle_and_ordering(small_pipeline):
    store = small_pipeline["store"]
    with_bands = curve(store, PrevalenceQuery(disease="diabetes", view="age"))
    assert with_bands.band_level == DEFAULT_BAND_LEVEL
    for s in with_bands.series:
        for lo, m, hi in zip(s.lo, s.mean, s.hi):
            assert lo <= hi
            assert lo <= m + 1e-12 and m - 1e-12 <= hi
    without = curve(store, PrevalenceQuery(disease="diabetes", view="age", bands=False))
    assert without.series[0].lo is None and without.series[0].hi is None


def test_degenerate_posterior_gives_zero_width_bands():
    cfg = make_config(make_shape(), dispersion=0.0, gamma_scale=0.0)
    pipe = build_pipeline(cfg, seed=SEED, b_draws=30, particles=30,
                          replicates=1, survey_n=1500)
    c = curve(pipe["store"], PrevalenceQuery(disease="tumors", view="year"))
    for s in c.series:
        for lo, hi in zip(s.lo, s.hi):
            assert hi - lo == 0.0


def test_partition_additivity_over_refinements(small_pipeline):
    cfg, store, grid = (small_pipeline[k] for k in ("config", "store", "grid"))
    shape = cfg.shape
    rng = np.random.default_rng(55)
    j = store.disease_index("cardiovascular")
    for _ in range(20):
        coarse_spec = {}
        if rng.random() < 0.5:
            coarse_spec["economic"] = int(rng.integers(0, 2))
        if rng.random() < 0.5:
            coarse_spec["cohort"] = [int(c) for c in
                                     rng.choice(shape.cohorts, 2, replace=False)]
        coarse = ConditioningSet.from_dict(coarse_spec, shape)
        dim = str(rng.choice([d for d in ("location", "age", "smoking")
                              if not coarse.is_constrained(d)]))
        coarse_agg = aggregate_prevalence(store, "cardiovascular", coarse)
        num = np.zeros(store.n_particles)
        den = np.zeros(store.n_particles)
        for value in coarse.values(dim, shape):
            sub = coarse.conjoin(ConditioningSet(constraints=((dim, (value,)),)))
            agg = aggregate_prevalence(store, "cardiovascular", sub)
            num += agg.prevalence * agg.weight
            den += agg.weight
        assert np.max(np.abs(num / den - coarse_agg.prevalence)) <= 1e-10


def test_empty_year_window_raises_with_explanation(small_pipeline):
    cfg, store = small_pipeline["config"], small_pipeline["store"]
    # cohort 1956 at age 52 is observed in 2008, before the display window
    cond = ConditioningSet.from_dict({"cohort": 1956, "age": 52}, cfg.shape)
    with pytest.raises(EmptySubgroupError):
        curve(store, PrevalenceQuery(disease="tumors", view="year", conditioning=cond))


def test_stratified_series_keep_common_axis_with_holes(small_pipeline):
    cfg, store = small_pipeline["config"], small_pipeline["store"]
    # in the year view cohort 1956 covers 2010-2012, cohort 1958 2010-2014
    cond = ConditioningSet.from_dict({"cohort": [1956, 1958]}, cfg.shape)
    c = curve(store, PrevalenceQuery(disease="tumors", view="year",
                                     conditioning=cond, stratify_by="cohort"))
    s1956 = next(s for s in c.series if s.label == "1956")
    s1958 = next(s for s in c.series if s.label == "1958")
    assert c.axis == (2010, 2011, 2012, 2013, 2014)
    assert s1956.mean[-1] is None and s1956.mean[0] is not None
    assert all(v is not None for v in s1958.mean)


# ---------------------------------------------------------------------------
# expected_cases
# ---------------------------------------------------------------------------

def _flat_curve(mean_value, shape, axis=(2010, 2011)):
    series = CurveSeries(label="all", mean=(mean_value,) * len(axis),
                         lo=None, hi=None, weight=(1.0,) * len(axis),
                         conditioning=ConditioningSet())
    return PrevalenceCurve(
        disease="tumors", disease_name="Tumors", view="year", axis=axis,
        series=(series,), bands=False, band_level=0.9, scale="none",
        conditioning=ConditioningSet(), stratify_by=None, shape=shape,
    )


def test_per_100k_scaling_is_exact():
    shape = make_shape()
    scaled = expected_cases(_flat_curve(0.025, shape), None, SCALE_PER_100K)
    assert scaled.series[0].mean == (2500.0, 2500.0)
    assert scaled.scale == SCALE_PER_100K


def test_zero_prevalence_gives_zero_cases():
    shape = make_shape()
    scaled = expected_cases(_flat_curve(0.0, shape), None, SCALE_PER_100K)
    assert scaled.series[0].mean == (0.0, 0.0)


def test_absolute_cases_match_margin_sum_oracle(small_pipeline):
    cfg, store, margins = (small_pipeline[k] for k in ("config", "store", "margins"))
    shape = cfg.shape
    cond = ConditioningSet.from_dict(
        {"location": list(shape.locations[:2]), "smoking": 1}, shape)
    c = curve(store, PrevalenceQuery(disease="diabetes", view="year",
                                     conditioning=cond, bands=False))
    scaled = expected_cases(c, margins, SCALE_ABSOLUTE)
    for i, t in enumerate(c.axis):
        pop = 0
        for li, loc in enumerate(shape.locations[:2]):
            for ci, coh in enumerate(shape.cohorts):
                if shape.age_min <= t - coh <= shape.age_max:
                    pop += int(margins.counts[li, ci, 0])
        assert scaled.series[0].mean[i] == c.series[0].mean[i] * pop


def test_absolute_scaling_requires_margins(small_pipeline):
    store = small_pipeline["store"]
    c = curve(store, PrevalenceQuery(disease="diabetes", view="year", bands=False))
    with pytest.raises(GridError):
        expected_cases(c, None, SCALE_ABSOLUTE)


def test_curve_payload_shape_round_trips_to_json(small_pipeline):
    import json

    store = small_pipeline["store"]
    c = curve(store, PrevalenceQuery(disease="tumors", view="year",
                                     stratify_by="education"))
    payload = curve_payload(c)
    text = json.dumps(payload)
    back = json.loads(text)
    assert back["axis"] == list(c.axis)
    assert len(back["series"]) == 2
    assert back["band_level"] == DEFAULT_BAND_LEVEL
    assert set(back["series"][0]) == {"label", "mean", "weight", "lo", "hi"}
