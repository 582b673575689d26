"""Post-stratification weights: the probability that a respondent with given
demographics carries each combination of the three risk factors.

The joint population weight of a full covariate cell factors as

    p(cell) = p(location, cohort, sex) * p(age | cohort) * p(category | demographics)

where the demographic share comes from census-style margins, the age share is
uniform within a cohort (a birth cohort is observed once per age), and the
risk-category simplex gets a Dirichlet-multinomial posterior per demographic
cell.  Posterior replicates of the simplex propagate weight uncertainty into
the credible bands downstream.

Ages are pooled within a cohort when tallying the survey, which keeps
demographic cells populated at desk scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .config import GridShape, N_CATEGORIES
from .errors import ConfigError, EmptySubgroupError, GridError
from .grid import ConditioningSet, GridIndex
from .synth import DemographicMargins, SurveySample

# Provenance codes for where a cell's Dirichlet counts came from.
POOL_CELL = 0
POOL_REGION = 1
POOL_NATIONAL = 2
POOL_PRIOR = 3
_POOL_NAMES = {POOL_CELL: "cell", POOL_REGION: "region",
               POOL_NATIONAL: "national", POOL_PRIOR: "prior"}


@dataclass(frozen=True)
class DemographicCell:
    """A weight-estimation cell: location and cohort with ages pooled."""

    location: str
    cohort: int
    sex: int


@dataclass(frozen=True)
class EmpiricalWeights:
    """Relative-frequency estimate; flagged when the cell is unobserved."""

    probs: np.ndarray | None  # (8,) on the simplex, or None
    count: int

    @property
    def zero_support(self) -> bool:
        return self.probs is None


@dataclass(frozen=True)
class WeightCell:
    """Dirichlet posterior of one demographic cell's category simplex."""

    mean: np.ndarray        # (8,)
    replicates: np.ndarray  # (W, 8)
    counts: np.ndarray      # (8,) observed category counts
    pooled_from: int        # POOL_* provenance


@dataclass(frozen=True)
class WeightTable:
    """Per demographic cell: posterior mean and W replicates over 8 categories."""

    mean: np.ndarray        # (n_l, n_c, n_sex, 8)
    replicates: np.ndarray  # (n_l, n_c, n_sex, W, 8)
    counts: np.ndarray      # (n_l, n_c, n_sex, 8) int64
    pooled_from: np.ndarray  # (n_l, n_c, n_sex) int8
    prior_alpha: float
    seed: int

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ConfigError("weight table needs at least one replicate")
        for arr in (self.mean, self.replicates):
            sums = arr.sum(axis=-1)
            if not np.allclose(sums, 1.0, atol=1e-9):
                raise ConfigError("weight vectors must sum to 1 within 1e-9")

    @property
    def n_replicates(self) -> int:
        return self.replicates.shape[-2]


def _cell_indices(shape: GridShape, cell: DemographicCell) -> tuple[int, int, int]:
    if cell.location not in shape.location_index:
        raise GridError(f"unknown location {cell.location!r}")
    if cell.cohort not in shape.cohort_index:
        raise GridError(f"unknown cohort {cell.cohort}")
    if cell.sex not in shape.sex_levels:
        raise GridError(f"sex level {cell.sex} not configured")
    return (shape.location_index[cell.location],
            shape.cohort_index[cell.cohort],
            shape.sex_levels.index(cell.sex))


def category_counts(sample: SurveySample, shape: GridShape, cell: DemographicCell) -> np.ndarray:
    """Observed category tally of the cell's records, ages pooled."""
    li, ci, si = _cell_indices(shape, cell)
    mask = (
        (sample.location_idx == li)
        & (sample.cohort_idx == ci)
        & (sample.sex == shape.sex_levels[si])
    )
    return np.bincount(sample.category[mask], minlength=N_CATEGORIES).astype(np.int64)


def empirical_weights(sample: SurveySample, shape: GridShape, cell: DemographicCell) -> EmpiricalWeights:
    """Joint-over-marginal indicator ratio; zero-support cells are flagged,
    not silently zeroed."""
    counts = category_counts(sample, shape, cell)
    n = int(counts.sum())
    if n == 0:
        return EmpiricalWeights(probs=None, count=0)
    return EmpiricalWeights(probs=counts / n, count=n)


def _dirichlet_cell(counts: np.ndarray, prior_alpha: float, n_replicates: int,
                    cell_rng: np.random.Generator, pooled_from: int) -> WeightCell:
    alpha = counts + prior_alpha
    mean = alpha / alpha.sum()
    reps = cell_rng.dirichlet(alpha, size=n_replicates)
    reps = reps / reps.sum(axis=1, keepdims=True)
    return WeightCell(mean=mean, replicates=reps, counts=counts.astype(np.int64),
                      pooled_from=pooled_from)


def dirichlet_weight_posterior(
    sample: SurveySample,
    shape: GridShape,
    cell: DemographicCell,
    prior_alpha: float,
    n_replicates: int,
    seed: int,
) -> WeightCell:
    """Conjugate Dirichlet(counts + alpha) posterior for one cell, no pooling."""
    if prior_alpha <= 0:
        raise ConfigError("prior_alpha must be > 0")
    if n_replicates < 1:
        raise ConfigError("n_replicates must be >= 1")
    li, ci, si = _cell_indices(shape, cell)
    counts = category_counts(sample, shape, cell)
    return _dirichlet_cell(
        counts, prior_alpha, n_replicates,
        rng.substream(seed, rng.WEIGHT_POSTERIOR, li, ci, si), POOL_CELL,
    )


def build_weight_table(
    sample: SurveySample,
    shape: GridShape,
    prior_alpha: float,
    n_replicates: int,
    seed: int,
) -> WeightTable:
    """Estimate every demographic cell; zero-support cells borrow counts from
    their region, then nationally, then fall back to the prior alone."""
    if prior_alpha <= 0:
        raise ConfigError("prior_alpha must be > 0")
    n_l, n_c, n_s = shape.n_locations, shape.n_cohorts, shape.n_sex
    sex_values = np.asarray(shape.sex_levels, dtype=np.int64)

    tallies = np.zeros((n_l, n_c, n_s, N_CATEGORIES), dtype=np.int64)
    sex_idx = np.searchsorted(sex_values, sample.sex)
    np.add.at(
        tallies,
        (sample.location_idx, sample.cohort_idx, sex_idx, sample.category),
        1,
    )

    region_ids = {r: i for i, r in enumerate(sorted(set(shape.regions)))}
    loc_region = np.array([region_ids[r] for r in shape.regions])
    region_tallies = np.zeros((len(region_ids), n_c, n_s, N_CATEGORIES), dtype=np.int64)
    np.add.at(region_tallies, loc_region, tallies)
    national_tallies = tallies.sum(axis=0)

    mean = np.empty((n_l, n_c, n_s, N_CATEGORIES))
    reps = np.empty((n_l, n_c, n_s, n_replicates, N_CATEGORIES))
    pooled = np.zeros((n_l, n_c, n_s), dtype=np.int8)
    for li in range(n_l):
        for ci in range(n_c):
            for si in range(n_s):
                counts = tallies[li, ci, si]
                source = POOL_CELL
                if counts.sum() == 0:
                    counts = region_tallies[loc_region[li], ci, si]
                    source = POOL_REGION
                if counts.sum() == 0:
                    counts = national_tallies[ci, si]
                    source = POOL_NATIONAL
                if counts.sum() == 0:
                    source = POOL_PRIOR
                cell = _dirichlet_cell(
                    counts, prior_alpha, n_replicates,
                    rng.substream(seed, rng.WEIGHT_POSTERIOR, li, ci, si), source,
                )
                mean[li, ci, si] = cell.mean
                reps[li, ci, si] = cell.replicates
                pooled[li, ci, si] = source

    return WeightTable(mean=mean, replicates=reps, counts=tallies,
                       pooled_from=pooled, prior_alpha=prior_alpha, seed=seed)


@dataclass(frozen=True)
class JointWeights:
    """Full joint cell-weight function over the covariate grid.

    weight(cell) = share[l,c,sex] * age_factor * category_prob[l,c,sex,cat]
    which sums to exactly one over the grid for every replicate.
    """

    share: np.ndarray  # (n_l, n_c, n_sex), sums to 1
    table: WeightTable
    n_ages: int

    @property
    def age_factor(self) -> float:
        return 1.0 / self.n_ages

    @property
    def n_replicates(self) -> int:
        return self.table.n_replicates


def demographic_decomposition(
    margins: DemographicMargins, table: WeightTable, shape: GridShape
) -> JointWeights:
    """Combine census shares with the category posteriors."""
    expected = (shape.n_locations, shape.n_cohorts, shape.n_sex)
    if margins.counts.shape != expected:
        raise GridError(
            f"margins cover {margins.counts.shape} cells, grid needs {expected}"
        )
    if table.mean.shape[:3] != expected:
        raise GridError("weight table does not match the grid")
    share = margins.counts.astype(np.float64) / margins.total
    return JointWeights(share=share, table=table, n_ages=shape.n_ages)


def joint_cell_weights(
    joint: JointWeights, grid: GridIndex, replicate: int | None = None
) -> np.ndarray:
    """Per-cell joint weights over the whole grid for one replicate
    (or the posterior mean when `replicate` is None)."""
    li, ci, si = grid.cell_location_idx, grid.cell_cohort_idx, grid.cell_sex_idx
    cat = grid.cell_category
    if replicate is None:
        probs = joint.table.mean[li, ci, si, cat]
    else:
        probs = joint.table.replicates[li, ci, si, replicate % joint.n_replicates, cat]
    return joint.share[li, ci, si] * joint.age_factor * probs


def marginalize_weights(
    joint: JointWeights,
    grid: GridIndex,
    cond: ConditioningSet,
    replicate: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Restrict the joint to `cond` and renormalize; exact Bayes restriction."""
    ids = grid.ids_matching(cond)
    if ids.size == 0:
        raise EmptySubgroupError("conditioning selects no grid cell")
    w = joint_cell_weights(joint, grid, replicate)[ids]
    total = w.sum()
    if total <= 0:
        raise EmptySubgroupError("conditioning selects zero probability mass")
    return ids, w / total


def dump_weight_table(table: WeightTable, shape: GridShape, path: str | Path) -> None:
    """Delimited debug dump: cell, category, mean, q05, q95."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location", "cohort", "sex", "category", "mean", "q05", "q95", "pooled_from"])
        for li, loc in enumerate(shape.locations):
            for ci, coh in enumerate(shape.cohorts):
                for si, sex in enumerate(shape.sex_levels):
                    reps = table.replicates[li, ci, si]
                    q05 = np.quantile(reps, 0.05, axis=0)
                    q95 = np.quantile(reps, 0.95, axis=0)
                    for cat in range(N_CATEGORIES):
                        w.writerow([
                            loc, coh, sex, cat,
                            f"{table.mean[li, ci, si, cat]:.9g}",
                            f"{q05[cat]:.9g}", f"{q95[cat]:.9g}",
                            _POOL_NAMES[int(table.pooled_from[li, ci, si])],
                        ])
