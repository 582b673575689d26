"""prevkit: precomputed-particle engine for chronic-disease prevalence curves.

Pipeline: synthesize a posterior around a known truth, estimate
post-stratification weights, precompute per-cell joint particles into a
binary store, then serve aggregated prevalence curves with credible bands
over HTTP or the CLI.
"""

__version__ = "0.1.0"

from .config import (
    BINARY_DIMENSIONS,
    DIMENSIONS,
    CovariateProfile,
    DiseasePanel,
    GridConfig,
    GridShape,
    KernelSpec,
    SynthSettings,
    parse_grid_config,
)
from .grid import ConditioningSet, GridIndex, enumerate_grid
from .model import (
    CoefficientField,
    ParameterDraw,
    coefficient_at,
    inv_logit,
    kernel_correlation,
    linear_predictor,
    predictive_probability,
)
from .query import (
    PrevalenceCurve,
    PrevalenceQuery,
    aggregate_prevalence,
    credible_band,
    curve,
    expected_cases,
)
from .store import (
    ParticleBlock,
    ParticleStore,
    precompute_cell,
    precompute_store,
    read_store,
    thin_sample,
    write_store,
)
from .synth import (
    DemographicMargins,
    GroundTruth,
    PosteriorEnsemble,
    SurveySample,
    draw_posterior_ensemble,
    generate_margins,
    generate_survey,
    generate_truth,
)
from .weights import (
    DemographicCell,
    JointWeights,
    WeightTable,
    build_weight_table,
    demographic_decomposition,
    dirichlet_weight_posterior,
    empirical_weights,
    marginalize_weights,
)
