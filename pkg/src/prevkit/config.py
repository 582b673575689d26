"""Grid configuration: covariate dimensions, disease panel, kernel inputs.

The grid is the Cartesian product
    locations x cohorts x ages x sex x smoking x education x economic
where the last four are binary factors whose admissible levels can be
restricted per configuration (the bundled desk config pins sex to a single
level, giving 8 binary combinations instead of 16).

A ``GridShape`` carries everything needed to interpret a particle store at
query time; a ``GridConfig`` adds the generation-side inputs (kernel distance
matrices, synthesis settings) on top.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridError, UnknownDiseaseError

DIMENSIONS = ("location", "cohort", "age", "sex", "smoking", "education", "economic")
BINARY_DIMENSIONS = ("sex", "smoking", "education", "economic")
# The eight weight categories are the combinations of the three risk factors;
# sex is demographic and lives with location/cohort in the margins.
RISK_DIMENSIONS = ("smoking", "education", "economic")
N_CATEGORIES = 8

BINARY_LABELS = {
    "sex": {0: "female", 1: "male"},
    "smoking": {0: "non-smoker", 1: "smoker"},
    "education": {0: "low-education", 1: "high-education"},
    "economic": {0: "low-income", 1: "well-off"},
}

# Column order of the design vector; fixed convention, recorded in every
# store header so a reader never has to guess.
DESIGN_LAYOUT = ("intercept", "age_std", "sex", "smoking", "education", "economic")
N_PREDICTORS = len(DESIGN_LAYOUT)

RESULT_LICENSE = "CC BY-NC-SA 4.0"


@dataclass(frozen=True)
class DiseasePanel:
    """Ordered disease identifiers plus display names."""

    ids: tuple[str, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if not self.ids:
            raise ConfigError("disease panel must not be empty")
        if len(set(self.ids)) != len(self.ids):
            raise ConfigError("disease identifiers must be unique")
        if len(self.names) != len(self.ids):
            raise ConfigError("one display name per disease required")

    def __len__(self):
        return len(self.ids)

    def index(self, disease_id: str) -> int:
        try:
            return self.ids.index(disease_id)
        except ValueError:
            raise UnknownDiseaseError(f"unknown disease {disease_id!r}") from None


@dataclass(frozen=True)
class CovariateProfile:
    """One cell of the covariate grid; the unit of precomputation."""

    location: str
    cohort: int
    age: int
    sex: int
    smoking: int
    education: int
    economic: int

    @property
    def year(self) -> int:
        # survey year: someone born in cohort c observed at age a is seen in c+a
        return self.cohort + self.age

    @property
    def binaries(self) -> tuple[int, int, int, int]:
        return (self.sex, self.smoking, self.education, self.economic)

    @property
    def category(self) -> int:
        """Index into the 8 risk categories (smoking, education, economic)."""
        return self.smoking * 4 + self.education * 2 + self.economic

    def value(self, dim: str):
        return getattr(self, dim)


@dataclass(frozen=True)
class KernelSpec:
    """Convex mixture of distance kernels over location pairs."""

    weights: tuple[float, ...]
    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.matrices):
            raise ConfigError("kernel needs matching weights and matrices")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ConfigError("kernel mixing weights must be non-negative and sum to 1")
        n = self.matrices[0].shape[0]
        for m in self.matrices:
            if m.ndim != 2 or m.shape != (n, n):
                raise ConfigError("kernel distance matrices must be square and equal-sized")
            if np.any(np.diag(m) != 0.0):
                raise ConfigError("kernel distance matrices must have zero diagonal")
            finite = m[np.isfinite(m)]
            if finite.size and np.any(finite < 0):
                raise ConfigError("kernel distances must be non-negative")
            with np.errstate(invalid="ignore"):  # inf - inf on matched entries
                asym = m - m.T
            asym = asym[np.isfinite(asym)]
            if (asym.size and float(np.max(np.abs(asym))) > 1e-9) or np.any(
                np.isinf(m) != np.isinf(m.T)
            ):
                raise ConfigError("kernel distance matrices must be symmetric")

    @property
    def n_locations(self) -> int:
        return self.matrices[0].shape[0]


@dataclass(frozen=True)
class SynthSettings:
    """Knobs for the synthetic ground truth and its simulated posterior."""

    b_draws: int = 3000
    dispersion: float = 0.05
    gamma_scale: float = 0.5
    intercept_mean: float = -2.2
    intercept_sd: float = 0.4
    effect_sd: float = 0.3
    level_scale: float = 0.3
    trend_scale: float = 0.04
    weight_concentration: float = 2.0
    survey_n: int = 6000
    margins_mode: str = "lognormal"  # or "uniform"
    margins_mean: float = 25000.0
    margins_cv: float = 0.4
    weight_alpha: float = 0.5
    weight_replicates: int = 100
    particles: int = 300

    def __post_init__(self):
        if self.b_draws < 1:
            raise ConfigError("b_draws must be >= 1")
        if self.dispersion < 0:
            raise ConfigError("dispersion must be >= 0")
        if self.margins_mode not in ("lognormal", "uniform"):
            raise ConfigError("margins_mode must be 'lognormal' or 'uniform'")
        if self.weight_alpha <= 0:
            raise ConfigError("weight_alpha must be > 0")
        if self.weight_replicates < 1:
            raise ConfigError("weight_replicates must be >= 1")
        if not 1 <= self.particles:
            raise ConfigError("particles must be >= 1")

    def to_json_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class GridShape:
    """Semantic grid description embedded in every store header."""

    locations: tuple[str, ...]
    regions: tuple[str, ...]
    cohorts: tuple[int, ...]
    age_min: int
    age_max: int
    year_min: int
    year_max: int
    sex_levels: tuple[int, ...]
    smoking_levels: tuple[int, ...]
    education_levels: tuple[int, ...]
    economic_levels: tuple[int, ...]
    diseases: DiseasePanel

    def __post_init__(self):
        if not self.locations:
            raise ConfigError("at least one location required")
        if len(set(self.locations)) != len(self.locations):
            raise ConfigError("location ids must be unique")
        if len(self.regions) != len(self.locations):
            raise ConfigError("one region per location required")
        if not self.cohorts:
            raise ConfigError("at least one cohort required")
        if list(self.cohorts) != sorted(set(self.cohorts)):
            raise ConfigError("cohorts must be strictly increasing")
        if self.age_min > self.age_max:
            raise ConfigError("age span is empty")
        if self.year_min > self.year_max:
            raise ConfigError("year window is empty")
        for dim in BINARY_DIMENSIONS:
            lv = self.binary_levels(dim)
            if not lv or any(v not in (0, 1) for v in lv) or list(lv) != sorted(set(lv)):
                raise ConfigError(f"levels for {dim} must be a sorted subset of {{0,1}}")

    # --- cardinalities -----------------------------------------------------
    def binary_levels(self, dim: str) -> tuple[int, ...]:
        return getattr(self, f"{dim}_levels")

    @property
    def ages(self) -> tuple[int, ...]:
        return tuple(range(self.age_min, self.age_max + 1))

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(range(self.year_min, self.year_max + 1))

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def n_cohorts(self) -> int:
        return len(self.cohorts)

    @property
    def n_ages(self) -> int:
        return self.age_max - self.age_min + 1

    @property
    def n_sex(self) -> int:
        return len(self.sex_levels)

    @property
    def n_diseases(self) -> int:
        return len(self.diseases)

    def dim_values(self, dim: str) -> tuple:
        if dim == "location":
            return self.locations
        if dim == "cohort":
            return self.cohorts
        if dim == "age":
            return self.ages
        if dim in BINARY_DIMENSIONS:
            return self.binary_levels(dim)
        raise GridError(f"unknown dimension {dim!r}")

    @cached_property
    def location_index(self) -> dict[str, int]:
        return {loc: i for i, loc in enumerate(self.locations)}

    @cached_property
    def cohort_index(self) -> dict[int, int]:
        return {c: i for i, c in enumerate(self.cohorts)}

    @cached_property
    def region_map(self) -> dict[str, tuple[str, ...]]:
        """region -> ordered tuple of its location ids."""
        out: dict[str, list[str]] = {}
        for loc, reg in zip(self.locations, self.regions):
            out.setdefault(reg, []).append(loc)
        return {r: tuple(v) for r, v in out.items()}

    def region_of(self, location: str) -> str:
        return self.regions[self.location_index[location]]

    # --- validation ---------------------------------------------------------
    def validate_profile(self, p: CovariateProfile) -> None:
        if p.location not in self.location_index:
            raise GridError(f"unknown location {p.location!r}")
        if p.cohort not in self.cohort_index:
            raise GridError(f"unknown cohort {p.cohort}")
        if not self.age_min <= p.age <= self.age_max:
            raise GridError(f"age {p.age} outside span {self.age_min}-{self.age_max}")
        for dim in BINARY_DIMENSIONS:
            if p.value(dim) not in self.binary_levels(dim):
                raise GridError(f"{dim} level {p.value(dim)} not configured")

    # --- serialization ------------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "locations": [[l, r] for l, r in zip(self.locations, self.regions)],
            "cohorts": list(self.cohorts),
            "ages": [self.age_min, self.age_max],
            "years": [self.year_min, self.year_max],
            "levels": {dim: list(self.binary_levels(dim)) for dim in BINARY_DIMENSIONS},
            "diseases": [[i, n] for i, n in zip(self.diseases.ids, self.diseases.names)],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GridShape":
        locs = tuple(str(x[0]) for x in d["locations"])
        regs = tuple(str(x[1]) for x in d["locations"])
        panel = DiseasePanel(
            ids=tuple(str(x[0]) for x in d["diseases"]),
            names=tuple(str(x[1]) for x in d["diseases"]),
        )
        return cls(
            locations=locs,
            regions=regs,
            cohorts=tuple(int(c) for c in d["cohorts"]),
            age_min=int(d["ages"][0]),
            age_max=int(d["ages"][1]),
            year_min=int(d["years"][0]),
            year_max=int(d["years"][1]),
            sex_levels=tuple(int(v) for v in d["levels"]["sex"]),
            smoking_levels=tuple(int(v) for v in d["levels"]["smoking"]),
            education_levels=tuple(int(v) for v in d["levels"]["education"]),
            economic_levels=tuple(int(v) for v in d["levels"]["economic"]),
            diseases=panel,
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GridConfig:
    """Full configuration: grid shape plus generation-side inputs."""

    shape: GridShape
    kernel: KernelSpec | None = None
    synth: SynthSettings = field(default_factory=SynthSettings)
    source_path: str | None = None

    def __post_init__(self):
        if self.kernel is not None and self.kernel.n_locations != self.shape.n_locations:
            raise ConfigError(
                f"kernel matrices are {self.kernel.n_locations}x{self.kernel.n_locations} "
                f"but the grid has {self.shape.n_locations} locations"
            )

    def require_kernel(self) -> KernelSpec:
        if self.kernel is None:
            raise ConfigError("this operation needs kernel distance matrices in the config")
        return self.kernel

    def grid_digest(self) -> str:
        return self.shape.digest()


# ---------------------------------------------------------------------------
# key-value text format
# ---------------------------------------------------------------------------

_LIST_KEYS = {"locations", "cohorts", "diseases", "kernel", "sex", "smoking", "education", "economic"}
_RANGE_KEYS = {"ages", "years"}
_INT_SYNTH = {"b_draws", "survey_n", "weight_replicates", "particles"}
_FLOAT_SYNTH = {
    "dispersion", "gamma_scale", "intercept_mean", "intercept_sd", "effect_sd",
    "level_scale", "trend_scale", "weight_concentration", "margins_mean",
    "margins_cv", "weight_alpha",
}


def _parse_range(raw: str, key: str) -> tuple[int, int]:
    parts = raw.split("-")
    if len(parts) != 2:
        raise ConfigError(f"{key} must look like 'lo-hi', got {raw!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None
    return lo, hi


def load_distance_matrix(path: Path, n_locations: int) -> np.ndarray:
    """Dense row-major whitespace-separated text matrix; 'inf' allowed."""
    try:
        m = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except OSError as e:
        raise ConfigError(f"cannot read kernel matrix {path}: {e}") from None
    except ValueError as e:
        raise ConfigError(f"malformed kernel matrix {path}: {e}") from None
    if m.shape != (n_locations, n_locations):
        raise ConfigError(
            f"kernel matrix {path} is {m.shape}, expected ({n_locations}, {n_locations})"
        )
    return m


def parse_grid_config(path: str | Path) -> GridConfig:
    """Parse the key-value grid configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None

    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key, value = key.strip().lower(), value.strip()
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    def split_list(key: str) -> list[str]:
        return [item.strip() for item in raw[key].split(",") if item.strip()]

    for required in ("locations", "cohorts", "ages", "diseases"):
        if required not in raw:
            raise ConfigError(f"{path}: missing required key {required!r}")

    loc_ids: list[str] = []
    loc_regions: list[str] = []
    for entry in split_list("locations"):
        if ":" in entry:
            lid, region = entry.split(":", 1)
        else:
            lid, region = entry, entry
        loc_ids.append(lid.strip())
        loc_regions.append(region.strip())

    try:
        cohorts = tuple(sorted(int(c) for c in split_list("cohorts")))
    except ValueError as e:
        raise ConfigError(f"{path}: cohorts: {e}") from None

    age_min, age_max = _parse_range(raw["ages"], "ages")

    d_ids, d_names = [], []
    for entry in split_list("diseases"):
        if ":" in entry:
            did, name = entry.split(":", 1)
        else:
            did, name = entry, entry
        d_ids.append(did.strip())
        d_names.append(name.strip())

    levels: dict[str, tuple[int, ...]] = {}
    for dim in BINARY_DIMENSIONS:
        if dim in raw:
            try:
                levels[dim] = tuple(sorted(int(v) for v in split_list(dim)))
            except ValueError as e:
                raise ConfigError(f"{path}: {dim}: {e}") from None
        else:
            levels[dim] = (0, 1)

    if "years" in raw:
        year_min, year_max = _parse_range(raw["years"], "years")
    else:
        year_min = cohorts[0] + age_min
        year_max = cohorts[-1] + age_max

    shape = GridShape(
        locations=tuple(loc_ids),
        regions=tuple(loc_regions),
        cohorts=cohorts,
        age_min=age_min,
        age_max=age_max,
        year_min=year_min,
        year_max=year_max,
        sex_levels=levels["sex"],
        smoking_levels=levels["smoking"],
        education_levels=levels["education"],
        economic_levels=levels["economic"],
        diseases=DiseasePanel(ids=tuple(d_ids), names=tuple(d_names)),
    )

    if "n_a" in raw and int(raw["n_a"]) != shape.n_locations:
        raise ConfigError(
            f"{path}: n_a = {raw['n_a']} does not match {shape.n_locations} configured locations"
        )

    kernel = None
    if "kernel" in raw:
        weights, matrices = [], []
        for entry in split_list("kernel"):
            if ":" not in entry:
                raise ConfigError(f"{path}: kernel entries must be 'weight:file'")
            w_str, rel = entry.split(":", 1)
            try:
                weights.append(float(w_str))
            except ValueError as e:
                raise ConfigError(f"{path}: kernel weight: {e}") from None
            matrices.append(load_distance_matrix(path.parent / rel.strip(), shape.n_locations))
        kernel = KernelSpec(weights=tuple(weights), matrices=tuple(matrices))

    synth_kwargs = {}
    for key in _INT_SYNTH:
        if key in raw:
            try:
                synth_kwargs[key] = int(raw[key])
            except ValueError as e:
                raise ConfigError(f"{path}: {key}: {e}") from None
    for key in _FLOAT_SYNTH:
        if key in raw:
            try:
                synth_kwargs[key] = float(raw[key])
            except ValueError as e:
                raise ConfigError(f"{path}: {key}: {e}") from None
    if "margins_mode" in raw:
        synth_kwargs["margins_mode"] = raw["margins_mode"]

    known = (
        _LIST_KEYS | _RANGE_KEYS | _INT_SYNTH | _FLOAT_SYNTH
        | {"margins_mode", "n_a"}
    )
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys: {', '.join(sorted(unknown))}")

    if not math.isfinite(synth_kwargs.get("dispersion", 0.0)):
        raise ConfigError(f"{path}: dispersion must be finite")

    return GridConfig(
        shape=shape,
        kernel=kernel,
        synth=SynthSettings(**synth_kwargs),
        source_path=str(path),
    )
