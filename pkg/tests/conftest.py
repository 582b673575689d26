import numpy as np
import pytest

from prevkit.config import DiseasePanel, GridConfig, GridShape, KernelSpec, SynthSettings, parse_grid_config
from prevkit.grid import enumerate_grid
from prevkit.store import precompute_store, store_from_arrays, thin_sample
from prevkit.synth import (
    draw_posterior_ensemble,
    generate_margins,
    generate_survey,
    generate_truth,
)
from prevkit.weights import build_weight_table, demographic_decomposition

SEED = 20240

DESK_CONFIG_PATH = "configs/desk.cfg"


def make_shape(
    n_locations=4,
    n_regions=2,
    cohorts=(1956, 1957, 1958),
    ages=(52, 56),
    years=None,
    sex_levels=(1,),
    smoking_levels=(0, 1),
    education_levels=(0, 1),
    economic_levels=(0, 1),
    n_diseases=4,
) -> GridShape:
    locations = tuple(f"L{i:03d}" for i in range(n_locations))
    regions = tuple(f"R{i % n_regions}" for i in range(n_locations))
    if years is None:
        years = (cohorts[0] + ages[0], cohorts[-1] + ages[1])
    names = ("cardiovascular", "respiratory", "tumors", "diabetes",
             "arthrosis", "kidney", "copd", "stroke")
    panel = DiseasePanel(ids=names[:n_diseases], names=tuple(n.title() for n in names[:n_diseases]))
    return GridShape(
        locations=locations, regions=regions, cohorts=tuple(cohorts),
        age_min=ages[0], age_max=ages[1], year_min=years[0], year_max=years[1],
        sex_levels=sex_levels, smoking_levels=smoking_levels,
        education_levels=education_levels, economic_levels=economic_levels,
        diseases=panel,
    )


def line_kernel(n_locations: int, spacing: float = 0.5) -> KernelSpec:
    """Distances of points on a line; exp(-d) of a Euclidean metric is PSD."""
    pos = np.arange(n_locations, dtype=np.float64) * spacing
    dist = np.abs(pos[:, None] - pos[None, :])
    return KernelSpec(weights=(1.0,), matrices=(dist,))


def make_config(shape: GridShape, kernel: KernelSpec | None = None, **synth_kwargs) -> GridConfig:
    kernel = kernel if kernel is not None else line_kernel(shape.n_locations)
    return GridConfig(shape=shape, kernel=kernel, synth=SynthSettings(**synth_kwargs))


def build_pipeline(config: GridConfig, seed: int = SEED, b_draws=None, particles=None,
                   replicates=None, survey_n=None):
    """Truth -> ensemble -> margins/survey -> weights -> store, all in memory."""
    st = config.synth
    b_draws = st.b_draws if b_draws is None else b_draws
    particles = st.particles if particles is None else particles
    replicates = st.weight_replicates if replicates is None else replicates
    survey_n = st.survey_n if survey_n is None else survey_n

    truth = generate_truth(config, seed)
    ensemble = draw_posterior_ensemble(truth, b_draws, st.dispersion, seed)
    thinned = thin_sample(ensemble, particles)
    margins = generate_margins(config, seed)
    survey = generate_survey(truth, margins, config, survey_n, seed)
    table = build_weight_table(survey, config.shape, st.weight_alpha, replicates, seed)
    joint = demographic_decomposition(margins, table, config.shape)
    grid = enumerate_grid(config.shape)
    meta, probs, weights = precompute_store(grid, thinned, joint, seed)
    store = store_from_arrays(meta, probs, weights)
    return {
        "config": config, "truth": truth, "ensemble": ensemble, "thinned": thinned,
        "margins": margins, "survey": survey, "table": table, "joint": joint,
        "grid": grid, "store": store,
    }


@pytest.fixture(scope="session")
def desk_config() -> GridConfig:
    return parse_grid_config(DESK_CONFIG_PATH)


@pytest.fixture(scope="session")
def small_pipeline(desk_config):
    """Desk grid with a light posterior: quick enough for every test."""
    return build_pipeline(desk_config, seed=SEED, b_draws=600, particles=60,
                          replicates=20, survey_n=6000)


@pytest.fixture(scope="session")
def small_store(small_pipeline):
    return small_pipeline["store"]
