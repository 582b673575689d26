"""Covariate-grid enumeration and conditioning.

Cell ids are mixed-radix over the dimension order
(location, cohort, age, sex, smoking, education, economic), location-major,
with each dimension's configured values in ascending order.  The id <->
profile mapping is an exact bijection over the full Cartesian product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from .config import BINARY_DIMENSIONS, BINARY_LABELS, DIMENSIONS, CovariateProfile, GridShape
from .errors import EmptySubgroupError, GridError, UnknownLocationError

# Guard against configs whose product of cardinalities is no longer a
# plausible in-memory grid.
MAX_CELLS = 1 << 40


@dataclass(frozen=True)
class ConditioningSet:
    """A partial covariate assignment; absent dimensions are FREE.

    Values are kept as sorted tuples; a single-value tuple is a FIXED
    dimension, a longer one a SET restriction.
    """

    constraints: tuple[tuple[str, tuple], ...] = ()

    @classmethod
    def from_dict(cls, spec: Mapping[str, object], shape: GridShape) -> "ConditioningSet":
        constraints = []
        for dim in DIMENSIONS:
            if dim not in spec:
                continue
            raw = spec[dim]
            values = (raw,) if np.isscalar(raw) or isinstance(raw, str) else tuple(raw)
            if not values:
                raise GridError(f"empty constraint for dimension {dim!r}")
            valid = shape.dim_values(dim)
            for v in values:
                if v not in valid:
                    raise GridError(f"{dim} value {v!r} is not on the grid")
            constraints.append((dim, tuple(sorted(set(values)))))
        unknown = set(spec) - set(DIMENSIONS)
        if unknown:
            raise GridError(f"unknown dimensions: {', '.join(sorted(unknown))}")
        return cls(constraints=tuple(constraints))

    @cached_property
    def _map(self) -> dict[str, tuple]:
        return dict(self.constraints)

    def is_constrained(self, dim: str) -> bool:
        return dim in self._map

    def is_fixed(self, dim: str) -> bool:
        return dim in self._map and len(self._map[dim]) == 1

    def values(self, dim: str, shape: GridShape) -> tuple:
        """Allowed values for a dimension under this conditioning."""
        return self._map.get(dim, shape.dim_values(dim))

    def conjoin(self, other: "ConditioningSet") -> "ConditioningSet":
        """Intersection of two conditionings; empty intersections raise."""
        merged = []
        for dim in DIMENSIONS:
            a, b = self._map.get(dim), other._map.get(dim)
            if a is None and b is None:
                continue
            if a is None or b is None:
                merged.append((dim, a if b is None else b))
                continue
            common = tuple(sorted(set(a) & set(b)))
            if not common:
                raise EmptySubgroupError(f"conflicting constraints on {dim!r}")
            merged.append((dim, common))
        return ConditioningSet(constraints=tuple(merged))

    def matches(self, profile: CovariateProfile) -> bool:
        return all(profile.value(dim) in vals for dim, vals in self.constraints)

    def to_json_dict(self) -> dict:
        return {dim: list(vals) for dim, vals in self.constraints}


@dataclass(frozen=True)
class GridIndex:
    """Bijection between cell ids and covariate profiles."""

    shape: GridShape

    @cached_property
    def dim_value_arrays(self) -> dict[str, tuple]:
        return {dim: self.shape.dim_values(dim) for dim in DIMENSIONS}

    @cached_property
    def radices(self) -> tuple[int, ...]:
        return tuple(len(self.dim_value_arrays[dim]) for dim in DIMENSIONS)

    @cached_property
    def strides(self) -> tuple[int, ...]:
        strides = [1] * len(DIMENSIONS)
        for i in range(len(DIMENSIONS) - 2, -1, -1):
            strides[i] = strides[i + 1] * self.radices[i + 1]
        return tuple(strides)

    @cached_property
    def n_cells(self) -> int:
        n = 1
        for r in self.radices:
            n *= r
        if n > MAX_CELLS:
            raise GridError(f"grid of {n} cells exceeds the {MAX_CELLS} cell bound")
        return n

    @cached_property
    def _value_index(self) -> dict[str, dict]:
        return {dim: {v: i for i, v in enumerate(vals)}
                for dim, vals in self.dim_value_arrays.items()}

    def profile_to_id(self, p: CovariateProfile) -> int:
        self.shape.validate_profile(p)
        cid = 0
        for dim, stride in zip(DIMENSIONS, self.strides):
            cid += self._value_index[dim][p.value(dim)] * stride
        return cid

    def id_to_profile(self, cell_id: int) -> CovariateProfile:
        if not 0 <= cell_id < self.n_cells:
            raise GridError(f"cell id {cell_id} outside 0..{self.n_cells - 1}")
        values = {}
        rem = int(cell_id)
        for dim, stride in zip(DIMENSIONS, self.strides):
            idx, rem = divmod(rem, stride)
            values[dim] = self.dim_value_arrays[dim][idx]
        return CovariateProfile(**values)

    # --- vectorized per-cell attributes -------------------------------------
    @cached_property
    def cell_location_idx(self) -> np.ndarray:
        ids = np.arange(self.n_cells, dtype=np.int64)
        return (ids // self.strides[0]) % self.radices[0]

    @cached_property
    def cell_cohort_idx(self) -> np.ndarray:
        ids = np.arange(self.n_cells, dtype=np.int64)
        return (ids // self.strides[1]) % self.radices[1]

    @cached_property
    def cell_age(self) -> np.ndarray:
        ids = np.arange(self.n_cells, dtype=np.int64)
        return self.shape.age_min + (ids // self.strides[2]) % self.radices[2]

    @cached_property
    def cell_sex_idx(self) -> np.ndarray:
        ids = np.arange(self.n_cells, dtype=np.int64)
        return (ids // self.strides[3]) % self.radices[3]

    @cached_property
    def cell_category(self) -> np.ndarray:
        """Risk-category code per cell (smoking*4 + education*2 + economic)."""
        ids = np.arange(self.n_cells, dtype=np.int64)
        smoking = np.asarray(self.dim_value_arrays["smoking"], dtype=np.int64)[
            (ids // self.strides[4]) % self.radices[4]]
        education = np.asarray(self.dim_value_arrays["education"], dtype=np.int64)[
            (ids // self.strides[5]) % self.radices[5]]
        economic = np.asarray(self.dim_value_arrays["economic"], dtype=np.int64)[
            (ids // self.strides[6]) % self.radices[6]]
        return smoking * 4 + education * 2 + economic

    @cached_property
    def cell_year(self) -> np.ndarray:
        cohorts = np.asarray(self.shape.cohorts, dtype=np.int64)
        return cohorts[self.cell_cohort_idx] + self.cell_age

    # --- selection -----------------------------------------------------------
    def ids_matching(self, cond: ConditioningSet) -> np.ndarray:
        """Ascending cell ids of all profiles compatible with `cond`."""
        ids = np.zeros(1, dtype=np.int64)
        vindex = self._value_index
        for dim, stride in zip(DIMENSIONS, self.strides):
            allowed = cond.values(dim, self.shape)
            offsets = np.array(sorted(vindex[dim][v] for v in allowed), dtype=np.int64) * stride
            ids = (ids[:, None] + offsets[None, :]).reshape(-1)
        return ids

    def ids_for_pairs(
        self, cond: ConditioningSet, pairs: list[tuple[int, int]]
    ) -> np.ndarray:
        """Cells matching `cond` whose (cohort, age) is one of `pairs`."""
        chunks = []
        allowed_c = set(cond.values("cohort", self.shape))
        allowed_a = set(cond.values("age", self.shape))
        for cohort, age in pairs:
            if cohort not in allowed_c or age not in allowed_a:
                continue
            point = ConditioningSet(constraints=(("cohort", (cohort,)), ("age", (age,))))
            chunks.append(self.ids_matching(cond.conjoin(point)))
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(chunks))


def enumerate_grid(shape: GridShape) -> GridIndex:
    """Build the deterministic location-major grid index."""
    index = GridIndex(shape=shape)
    index.n_cells  # force the size guard
    return index


def conditioning_from_filter_items(shape: GridShape, items: list[str]) -> ConditioningSet:
    """Parse repeated '<dimension>:<value>' filter strings.

    'region' expands to the region's locations; values within a dimension
    union, dimensions intersect.  Binary factors accept 0/1 or their labels.
    """
    selected: dict[str, set] = {}
    for item in items:
        if ":" not in item:
            raise GridError(f"filter {item!r} is not '<dimension>:<value>'")
        dim, raw = item.split(":", 1)
        dim, raw = dim.strip().lower(), raw.strip()
        if dim == "region":
            lhus = shape.region_map.get(raw)
            if lhus is None:
                raise UnknownLocationError(f"unknown region {raw!r}")
            selected.setdefault("location", set()).update(lhus)
            continue
        if dim == "location":
            if raw not in shape.location_index:
                raise UnknownLocationError(f"unknown location {raw!r}")
            selected.setdefault("location", set()).add(raw)
            continue
        if dim in ("cohort", "age"):
            try:
                value = int(raw)
            except ValueError:
                raise GridError(f"filter {dim!r} needs an integer, got {raw!r}") from None
        elif dim in BINARY_DIMENSIONS:
            labels = {v: k for k, v in BINARY_LABELS[dim].items()}
            if raw in labels:
                value = labels[raw]
            else:
                try:
                    value = int(raw)
                except ValueError:
                    raise GridError(
                        f"invalid value {raw!r} for filter {dim!r}; use 0/1 or a level label"
                    ) from None
        else:
            raise GridError(f"unknown filter dimension {dim!r}")
        if value not in shape.dim_values(dim):
            raise GridError(f"{dim} value {raw!r} is not on the grid")
        selected.setdefault(dim, set()).add(value)
    return ConditioningSet.from_dict(selected, shape)
