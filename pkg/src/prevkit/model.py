"""Logistic disease model with cohort-linear, spatially correlated coefficients.

A coefficient for disease j and predictor h at location l, cohort c is

    beta(j, h, l, c) = beta0[j,h] + lam0[j,h] * xi0[j,h,l]
                       + (c - c0) * lam1[j,h] * xi1[j,h,l]

where the xi fields have standard-Gaussian marginals over locations with a
correlation matrix built as a convex mixture of distance kernels
exp(-D_m).  Disease probabilities are inverse-logit of the linear predictor
plus a shared comorbidity score scaled per disease by gamma.

Everything here is immutable after construction and safe to call from many
threads at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import CovariateProfile, GridShape, KernelSpec
from .errors import ConfigError, GridError


def inv_logit(x):
    """Numerically stable logistic function; rejects non-finite input."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("inv_logit requires finite input")
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def kernel_correlation(spec: KernelSpec, psd_tol: float = 1e-10) -> np.ndarray:
    """Convex mixture of exp(-D_m) kernels, repaired to a valid correlation.

    If the raw combination is not positive semidefinite, negative eigenvalues
    are clipped at zero and the matrix rescaled back to unit diagonal.  The
    returned matrix is exactly symmetric with unit diagonal and entries in
    [0, 1].
    """
    n = spec.n_locations
    m = np.zeros((n, n), dtype=np.float64)
    for w, dist in zip(spec.weights, spec.matrices):
        with np.errstate(over="ignore"):
            m += w * np.exp(-dist)
    m = 0.5 * (m + m.T)

    eigvals, eigvecs = np.linalg.eigh(m)
    if eigvals[0] < -psd_tol * max(abs(eigvals[-1]), 1.0):
        clipped = np.clip(eigvals, 0.0, None)
        m = (eigvecs * clipped) @ eigvecs.T
        d = np.sqrt(np.diag(m))
        if np.any(d <= 0):
            raise ConfigError("kernel combination collapsed to a rank-deficient diagonal")
        m = m / np.outer(d, d)

    m = np.clip(m, 0.0, 1.0)
    m = np.triu(m, 1)
    m = m + m.T
    np.fill_diagonal(m, 1.0)
    return m


def correlation_factor(corr: np.ndarray) -> np.ndarray:
    """Factor L with L @ L.T = corr, valid for rank-deficient correlations."""
    eigvals, eigvecs = np.linalg.eigh(corr)
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


@dataclass(frozen=True)
class CoefficientField:
    """Per (disease, predictor): level, scales and location fields."""

    beta0: np.ndarray  # (n_d, n_p)
    lam0: np.ndarray   # (n_d, n_p)
    lam1: np.ndarray   # (n_d, n_p)
    xi0: np.ndarray    # (n_d, n_p, n_a)
    xi1: np.ndarray    # (n_d, n_p, n_a)
    base_cohort: int

    def __post_init__(self):
        n_d, n_p = self.beta0.shape
        for name in ("lam0", "lam1"):
            if getattr(self, name).shape != (n_d, n_p):
                raise ConfigError(f"{name} must have shape ({n_d}, {n_p})")
        n_a = self.xi0.shape[-1]
        for name in ("xi0", "xi1"):
            if getattr(self, name).shape != (n_d, n_p, n_a):
                raise ConfigError(f"{name} must have shape ({n_d}, {n_p}, {n_a})")
        for name in ("beta0", "lam0", "lam1", "xi0", "xi1"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError(f"{name} contains non-finite values")

    @property
    def n_diseases(self) -> int:
        return self.beta0.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.beta0.shape[1]

    @property
    def n_locations(self) -> int:
        return self.xi0.shape[-1]


def coefficient_at(field: CoefficientField, j: int, h: int, location_index: int, cohort: int) -> float:
    """beta0 + lam0*xi0(l) + (c - c0)*lam1*xi1(l) for one coefficient."""
    if not 0 <= location_index < field.n_locations:
        raise GridError(f"location index {location_index} outside 0..{field.n_locations - 1}")
    if not 0 <= j < field.n_diseases:
        raise GridError(f"disease index {j} outside panel")
    if not 0 <= h < field.n_predictors:
        raise GridError(f"predictor index {h} outside design vector")
    dc = cohort - field.base_cohort
    return float(
        field.beta0[j, h]
        + field.lam0[j, h] * field.xi0[j, h, location_index]
        + dc * field.lam1[j, h] * field.xi1[j, h, location_index]
    )


def coefficients_for(field: CoefficientField, location_index: int, cohort: int) -> np.ndarray:
    """Full (n_d, n_p) coefficient matrix at one (location, cohort)."""
    if not 0 <= location_index < field.n_locations:
        raise GridError(f"location index {location_index} outside 0..{field.n_locations - 1}")
    dc = cohort - field.base_cohort
    return (
        field.beta0
        + field.lam0 * field.xi0[:, :, location_index]
        + dc * field.lam1 * field.xi1[:, :, location_index]
    )


@dataclass(frozen=True)
class ParameterDraw:
    """One self-contained draw of all model parameters."""

    field: CoefficientField
    gamma: np.ndarray  # (n_d,) comorbidity loadings

    def __post_init__(self):
        if self.gamma.shape != (self.field.n_diseases,):
            raise ConfigError("gamma must have one loading per disease")
        if not np.all(np.isfinite(self.gamma)):
            raise ConfigError("gamma contains non-finite values")


def design_vector(profile: CovariateProfile, shape: GridShape) -> np.ndarray:
    """[1, standardized age, sex, smoking, education, economic]."""
    half = (shape.age_max - shape.age_min) / 2.0
    mid = (shape.age_max + shape.age_min) / 2.0
    age_std = 0.0 if half == 0 else (profile.age - mid) / half
    return np.array(
        [1.0, age_std, profile.sex, profile.smoking, profile.education, profile.economic],
        dtype=np.float64,
    )


def linear_predictor(
    draw: ParameterDraw,
    profile: CovariateProfile,
    comorbidity: float,
    shape: GridShape,
) -> np.ndarray:
    """eta_j = sum_h beta(j,h,l,c) x_h + gamma_j * comorbidity, all diseases."""
    if not np.isfinite(comorbidity):
        raise ValueError("comorbidity score must be finite")
    shape.validate_profile(profile)
    x = design_vector(profile, shape)
    if draw.field.n_predictors != x.size:
        raise ConfigError(
            f"coefficient field has {draw.field.n_predictors} predictors, "
            f"design vector has {x.size}"
        )
    coeffs = coefficients_for(draw.field, shape.location_index[profile.location], profile.cohort)
    return coeffs @ x + draw.gamma * comorbidity


def predictive_probability(
    draw: ParameterDraw,
    profile: CovariateProfile,
    comorbidity: float,
    shape: GridShape,
) -> np.ndarray:
    """Elementwise inverse-logit of the linear predictor."""
    return inv_logit(linear_predictor(draw, profile, comorbidity, shape))
