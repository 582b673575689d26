"""Synthetic stand-ins for everything the real pipeline gets from outside:
a known ground truth, a simulated posterior ensemble, census-style margins
and a survey sample for weight estimation.

The posterior is simulated as independent Gaussian perturbations of the
ground-truth parameters, which keeps a known truth available for coverage
testing; dispersion 0 reproduces the truth exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .config import GridConfig, GridShape, N_CATEGORIES, N_PREDICTORS
from .errors import ConfigError, GridError
from .model import CoefficientField, ParameterDraw, correlation_factor, kernel_correlation


@dataclass(frozen=True)
class GroundTruth:
    """The data-generating parameters plus the true risk-category tables."""

    draw: ParameterDraw
    weight_tables: np.ndarray  # (n_l, n_c, n_sex, 8), rows on the simplex
    seed: int
    grid_digest: str

    def __post_init__(self):
        sums = self.weight_tables.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ConfigError("truth weight tables must lie on the simplex")


@dataclass(frozen=True)
class PosteriorEnsemble:
    """B exchangeable parameter draws, stored structure-of-arrays."""

    beta0: np.ndarray  # (B, n_d, n_p)
    lam0: np.ndarray
    lam1: np.ndarray
    xi0: np.ndarray    # (B, n_d, n_p, n_a)
    xi1: np.ndarray
    gamma: np.ndarray  # (B, n_d)
    base_cohort: int
    seed: int
    dispersion: float
    b_original: int
    thin_stride: int = 1

    @property
    def n_draws(self) -> int:
        return self.beta0.shape[0]

    def draw_at(self, b: int) -> ParameterDraw:
        field = CoefficientField(
            beta0=self.beta0[b], lam0=self.lam0[b], lam1=self.lam1[b],
            xi0=self.xi0[b], xi1=self.xi1[b], base_cohort=self.base_cohort,
        )
        return ParameterDraw(field=field, gamma=self.gamma[b])


@dataclass(frozen=True)
class DemographicMargins:
    """Population counts per (location, cohort, sex) cell."""

    counts: np.ndarray  # (n_l, n_c, n_sex) int64

    def __post_init__(self):
        if np.any(self.counts < 0):
            raise ConfigError("margins counts must be non-negative")
        if self.total <= 0:
            raise ConfigError("total population must be positive")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class SurveySample:
    """Columnar synthetic survey; one covariate profile per record."""

    location_idx: np.ndarray
    cohort_idx: np.ndarray
    age: np.ndarray
    sex: np.ndarray
    smoking: np.ndarray
    education: np.ndarray
    economic: np.ndarray

    @property
    def n(self) -> int:
        return self.location_idx.shape[0]

    @property
    def category(self) -> np.ndarray:
        """Risk-category codes: smoking*4 + education*2 + economic."""
        return self.smoking * 4 + self.education * 2 + self.economic


def _perturbed(scale: float, draw_rng: np.random.Generator, base: np.ndarray, b: int) -> np.ndarray:
    return base[None, ...] + scale * draw_rng.standard_normal((b, *base.shape))


def generate_truth(config: GridConfig, seed: int) -> GroundTruth:
    """Draw ground-truth parameters; xi fields share the kernel correlation."""
    shape = config.shape
    st = config.synth
    corr = kernel_correlation(config.require_kernel())
    factor = correlation_factor(corr)
    n_d, n_p, n_a = shape.n_diseases, N_PREDICTORS, shape.n_locations

    xi = np.empty((2, n_d, n_p, n_a))
    for s in range(2):
        for j in range(n_d):
            for h in range(n_p):
                z = rng.substream(seed, rng.TRUTH_XI, s, j, h).standard_normal(n_a)
                xi[s, j, h] = factor @ z

    beta_rng = rng.substream(seed, rng.TRUTH_BETA)
    beta0 = np.empty((n_d, n_p))
    beta0[:, 0] = beta_rng.normal(st.intercept_mean, st.intercept_sd, n_d)
    beta0[:, 1:] = beta_rng.normal(0.0, st.effect_sd, (n_d, n_p - 1))
    lam0 = np.abs(beta_rng.normal(0.0, st.level_scale, (n_d, n_p)))
    lam1 = np.abs(beta_rng.normal(0.0, st.trend_scale, (n_d, n_p)))

    gamma = rng.substream(seed, rng.TRUTH_GAMMA).normal(0.0, st.gamma_scale, n_d)

    tables = np.empty((n_a, shape.n_cohorts, shape.n_sex, N_CATEGORIES))
    conc = np.full(N_CATEGORIES, st.weight_concentration)
    for l in range(n_a):
        for c in range(shape.n_cohorts):
            for s in range(shape.n_sex):
                tab = rng.substream(seed, rng.TRUTH_TABLES, l, c, s).dirichlet(conc)
                tables[l, c, s] = tab / tab.sum()

    field = CoefficientField(
        beta0=beta0, lam0=lam0, lam1=lam1, xi0=xi[0], xi1=xi[1],
        base_cohort=shape.cohorts[0],
    )
    return GroundTruth(
        draw=ParameterDraw(field=field, gamma=gamma),
        weight_tables=tables,
        seed=seed,
        grid_digest=shape.digest(),
    )


def draw_posterior_ensemble(
    truth: GroundTruth, b_draws: int, dispersion: float, seed: int
) -> PosteriorEnsemble:
    """Every scalar parameter gets independent N(0, dispersion^2) noise."""
    if b_draws < 1:
        raise ConfigError("b_draws must be >= 1")
    if dispersion < 0:
        raise ConfigError("dispersion must be >= 0")
    f = truth.draw.field
    r = rng.substream(seed, rng.ENSEMBLE)
    return PosteriorEnsemble(
        beta0=_perturbed(dispersion, r, f.beta0, b_draws),
        lam0=_perturbed(dispersion, r, f.lam0, b_draws),
        lam1=_perturbed(dispersion, r, f.lam1, b_draws),
        xi0=_perturbed(dispersion, r, f.xi0, b_draws),
        xi1=_perturbed(dispersion, r, f.xi1, b_draws),
        gamma=_perturbed(dispersion, r, truth.draw.gamma, b_draws),
        base_cohort=f.base_cohort,
        seed=seed,
        dispersion=dispersion,
        b_original=b_draws,
    )


def generate_margins(
    config: GridConfig,
    seed: int,
    mode: str | None = None,
    mean_count: float | None = None,
    cv: float | None = None,
) -> DemographicMargins:
    """Positive per-cell counts, uniform or log-normal across cells."""
    shape, st = config.shape, config.synth
    mode = mode or st.margins_mode
    mean_count = st.margins_mean if mean_count is None else mean_count
    cv = st.margins_cv if cv is None else cv
    dims = (shape.n_locations, shape.n_cohorts, shape.n_sex)
    if mode == "uniform":
        counts = np.full(dims, max(1, round(mean_count)), dtype=np.int64)
    elif mode == "lognormal":
        sigma = np.sqrt(np.log1p(cv * cv))
        mu = np.log(mean_count) - 0.5 * sigma * sigma
        draws = rng.substream(seed, rng.MARGINS).lognormal(mu, sigma, dims)
        counts = np.maximum(1, np.rint(draws)).astype(np.int64)
    else:
        raise ConfigError(f"unknown margins mode {mode!r}")
    return DemographicMargins(counts=counts)


def generate_survey(
    truth: GroundTruth,
    margins: DemographicMargins,
    config: GridConfig,
    n_records: int,
    seed: int,
) -> SurveySample:
    """Demographics proportional to margins; risk factors from truth tables."""
    if n_records < 1:
        raise ConfigError("survey size must be >= 1")
    shape = config.shape
    r = rng.substream(seed, rng.SURVEY)
    probs = margins.counts.reshape(-1).astype(np.float64)
    if probs.sum() <= 0:
        raise ConfigError("margins are empty")
    probs /= probs.sum()

    flat = r.choice(probs.size, size=n_records, p=probs)
    n_c, n_s = shape.n_cohorts, shape.n_sex
    loc_idx = flat // (n_c * n_s)
    coh_idx = (flat // n_s) % n_c
    sex_idx = flat % n_s

    ages = r.integers(shape.age_min, shape.age_max + 1, size=n_records)
    cdf = np.cumsum(truth.weight_tables[loc_idx, coh_idx, sex_idx], axis=1)
    cat = (r.random(n_records)[:, None] > cdf).sum(axis=1)

    sex_values = np.asarray(shape.sex_levels, dtype=np.int64)[sex_idx]
    return SurveySample(
        location_idx=loc_idx.astype(np.int64),
        cohort_idx=coh_idx.astype(np.int64),
        age=ages.astype(np.int64),
        sex=sex_values,
        smoking=(cat // 4).astype(np.int64),
        education=((cat // 2) % 2).astype(np.int64),
        economic=(cat % 2).astype(np.int64),
    )


# ---------------------------------------------------------------------------
# delimited-text interfaces
# ---------------------------------------------------------------------------

def write_margins_csv(margins: DemographicMargins, shape: GridShape, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location", "cohort", "sex", "count"])
        for li, loc in enumerate(shape.locations):
            for ci, coh in enumerate(shape.cohorts):
                for si, sex in enumerate(shape.sex_levels):
                    w.writerow([loc, coh, sex, int(margins.counts[li, ci, si])])


def read_margins_csv(path: str | Path, shape: GridShape) -> DemographicMargins:
    counts = np.full((shape.n_locations, shape.n_cohorts, shape.n_sex), -1, dtype=np.int64)
    sex_index = {v: i for i, v in enumerate(shape.sex_levels)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["location", "cohort", "sex", "count"]:
            raise ConfigError(f"{path}: expected header location,cohort,sex,count")
        for row in reader:
            if not row:
                continue
            loc, coh, sex, count = row[0], int(row[1]), int(row[2]), int(row[3])
            if loc not in shape.location_index:
                raise GridError(f"{path}: unknown location {loc!r}")
            if coh not in shape.cohort_index:
                raise GridError(f"{path}: unknown cohort {coh}")
            if sex not in sex_index:
                raise GridError(f"{path}: sex level {sex} not configured")
            counts[shape.location_index[loc], shape.cohort_index[coh], sex_index[sex]] = count
    if np.any(counts < 0):
        raise ConfigError(f"{path}: missing demographic cells")
    return DemographicMargins(counts=counts)


def write_survey_csv(sample: SurveySample, shape: GridShape, path: str | Path) -> None:
    locs = np.asarray(shape.locations)
    cohorts = np.asarray(shape.cohorts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location", "cohort", "age", "sex", "smoking", "education", "economic"])
        for i in range(sample.n):
            w.writerow([
                locs[sample.location_idx[i]], cohorts[sample.cohort_idx[i]],
                int(sample.age[i]), int(sample.sex[i]), int(sample.smoking[i]),
                int(sample.education[i]), int(sample.economic[i]),
            ])


def read_survey_csv(path: str | Path, shape: GridShape) -> SurveySample:
    cols: dict[str, list[int]] = {k: [] for k in
                                  ("location_idx", "cohort_idx", "age", "sex",
                                   "smoking", "education", "economic")}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["location", "cohort", "age", "sex", "smoking", "education", "economic"]
        if header != expected:
            raise ConfigError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            if not row:
                continue
            if row[0] not in shape.location_index:
                raise GridError(f"{path}: unknown location {row[0]!r}")
            cohort = int(row[1])
            if cohort not in shape.cohort_index:
                raise GridError(f"{path}: unknown cohort {cohort}")
            cols["location_idx"].append(shape.location_index[row[0]])
            cols["cohort_idx"].append(shape.cohort_index[cohort])
            cols["age"].append(int(row[2]))
            cols["sex"].append(int(row[3]))
            cols["smoking"].append(int(row[4]))
            cols["education"].append(int(row[5]))
            cols["economic"].append(int(row[6]))
    return SurveySample(**{k: np.asarray(v, dtype=np.int64) for k, v in cols.items()})
