"""Turning conditioning sets into prevalence curves with credible bands.

For every stored particle b the subgroup prevalence is the self-normalized
weighted sum over the selected cells,

    prev_b = sum_cells pi_b(cell) * w_b(cell) / sum_cells w_b(cell),

so weight-replicate uncertainty widens the bands coherently with parameter
uncertainty.  Bands are central empirical quantiles with linear interpolation
between order statistics.

A year-view point at year t aggregates every (cohort c, age a) cell with
c + a = t; an age-view point fixes the age and sums over cohorts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import BINARY_DIMENSIONS, BINARY_LABELS, DIMENSIONS, GridShape
from .errors import EmptySubgroupError, GridError, StratificationError
from .grid import ConditioningSet
from .store import ParticleStore, dequantize_probs
from .synth import DemographicMargins

MAX_STRATA = 5
DEFAULT_BAND_LEVEL = 0.90

SCALE_NONE = "none"
SCALE_PER_100K = "per100k"
SCALE_ABSOLUTE = "absolute"
PER_100K_FACTOR = 100_000.0


@dataclass(frozen=True)
class AggregateResult:
    """Per-particle subgroup prevalences and the subgroup mass behind them."""

    prevalence: np.ndarray  # (P,)
    weight: np.ndarray      # (P,) sum of selected cell weights per particle


def aggregate_cells(
    store: ParticleStore,
    disease_index: int,
    cell_ids: np.ndarray,
    replicate_resolved: bool = True,
) -> AggregateResult:
    """Self-normalized aggregation over an explicit cell selection."""
    if cell_ids.size == 0:
        raise EmptySubgroupError("no cells selected")
    # sorted unique ids covering a contiguous range slice without copying
    if cell_ids[-1] - cell_ids[0] + 1 == cell_ids.size:
        sel = slice(int(cell_ids[0]), int(cell_ids[-1]) + 1)
    else:
        sel = cell_ids
    probs_q = store.probs[sel, :, disease_index]
    if replicate_resolved:
        w = store.weights[sel]
    else:
        mean_w = store.weights[sel].astype(np.float64).mean(axis=1, keepdims=True)
        w = np.broadcast_to(mean_w, probs_q.shape)
    den = w.sum(axis=0, dtype=np.float64)
    if np.any(den <= 0):
        raise EmptySubgroupError("selected cells carry zero probability mass")
    if cell_ids.size == 1:
        # a single-term sum is the cell's own particles, bit for bit
        return AggregateResult(prevalence=dequantize_probs(probs_q[0]), weight=den)
    # einsum casts chunk-wise to float64, identical to materialized casts
    num = np.einsum("cp,cp->p", probs_q, w, dtype=np.float64)
    return AggregateResult(prevalence=num / (den * 65535.0), weight=den)


def aggregate_prevalence(
    store: ParticleStore,
    disease_id: str,
    cond: ConditioningSet,
    replicate_resolved: bool = True,
) -> AggregateResult:
    """Aggregate over every grid cell compatible with the conditioning set."""
    j = store.disease_index(disease_id)
    ids = store.grid.ids_matching(cond)
    if ids.size == 0:
        raise EmptySubgroupError("conditioning selects no grid cell")
    return aggregate_cells(store, j, ids, replicate_resolved)


def credible_band(particles: np.ndarray, level: float) -> tuple[float, float]:
    """Central empirical interval, type-7 (linear) quantiles."""
    particles = np.asarray(particles, dtype=np.float64)
    if particles.size == 0:
        raise ValueError("credible_band needs a non-empty particle vector")
    if not 0.0 < level < 1.0:
        raise ValueError("band level must be in (0, 1)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(particles, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


@dataclass(frozen=True)
class PrevalenceQuery:
    disease: str
    view: str  # "year" or "age"
    conditioning: ConditioningSet = field(default_factory=ConditioningSet)
    stratify_by: str | None = None
    bands: bool = True
    band_level: float = DEFAULT_BAND_LEVEL
    scale: str = SCALE_NONE
    replicate_resolved: bool = True

    def __post_init__(self):
        if self.view not in ("year", "age"):
            raise GridError(f"view must be 'year' or 'age', got {self.view!r}")
        if not 0.0 < self.band_level < 1.0:
            raise GridError("band level must be in (0, 1)")
        if self.scale not in (SCALE_NONE, SCALE_PER_100K, SCALE_ABSOLUTE):
            raise GridError(f"unknown scale {self.scale!r}")
        if self.stratify_by is not None and self.stratify_by not in DIMENSIONS:
            raise GridError(f"cannot stratify by unknown dimension {self.stratify_by!r}")


@dataclass(frozen=True)
class CurveSeries:
    """One displayed curve; None entries mark axis points with no cells."""

    label: str
    mean: tuple
    lo: tuple | None
    hi: tuple | None
    weight: tuple
    conditioning: ConditioningSet  # base filters plus this stratum


@dataclass(frozen=True)
class PrevalenceCurve:
    disease: str
    disease_name: str
    view: str
    axis: tuple[int, ...]
    series: tuple[CurveSeries, ...]
    bands: bool
    band_level: float
    scale: str
    conditioning: ConditioningSet
    stratify_by: str | None
    shape: GridShape

    def __post_init__(self):
        if any(self.axis[i] >= self.axis[i + 1] for i in range(len(self.axis) - 1)):
            raise GridError("curve axis must be strictly increasing")


def _stratum_label(dim: str, value) -> str:
    if dim in BINARY_DIMENSIONS:
        return BINARY_LABELS[dim][int(value)]
    return str(value)


def _point_pairs(shape: GridShape, view: str, cond: ConditioningSet) -> list[tuple[int, list]]:
    """Axis values with their (cohort, age) pairs, before emptiness pruning."""
    cohorts = cond.values("cohort", shape)
    ages = set(cond.values("age", shape))
    points = []
    if view == "year":
        for t in shape.years:
            pairs = [(c, t - c) for c in cohorts if (t - c) in ages]
            points.append((t, pairs))
    else:
        for a in sorted(ages):
            points.append((a, [(c, a) for c in cohorts]))
    return points


def curve(store: ParticleStore, query: PrevalenceQuery) -> PrevalenceCurve:
    """Prevalence over years or ages, optionally stratified (max 5 curves)."""
    shape = store.shape
    j = store.disease_index(query.disease)
    cond = query.conditioning

    strata: list[tuple[str, ConditioningSet]] = []
    if query.stratify_by is None:
        strata.append(("all", cond))
    else:
        dim = query.stratify_by
        if cond.is_fixed(dim):
            raise StratificationError(
                f"cannot stratify by {dim!r}: it is fixed to a single value by the filters"
            )
        levels = cond.values(dim, shape)
        if len(levels) > MAX_STRATA:
            shown = ", ".join(str(v) for v in levels[:MAX_STRATA + 1])
            raise StratificationError(
                f"stratifying by {dim!r} would draw {len(levels)} curves; the display cap "
                f"is {MAX_STRATA}. Restrict {dim!r} with filters to at most {MAX_STRATA} "
                f"of its values first (levels: {shown}{'...' if len(levels) > MAX_STRATA + 1 else ''})."
            )
        for value in levels:
            stratum = ConditioningSet(constraints=((dim, (value,)),))
            strata.append((_stratum_label(dim, value), cond.conjoin(stratum)))

    points = _point_pairs(shape, query.view, cond)

    per_series: list[list] = [[] for _ in strata]
    for _, pairs in points:
        for s_idx, (_, sub_cond) in enumerate(strata):
            ids = store.grid.ids_for_pairs(sub_cond, pairs)
            if ids.size == 0:
                per_series[s_idx].append(None)
                continue
            agg = aggregate_cells(store, j, ids, query.replicate_resolved)
            entry = {
                "mean": float(agg.prevalence.mean()),
                "weight": float(agg.weight.mean()),
            }
            if query.bands:
                entry["lo"], entry["hi"] = credible_band(agg.prevalence, query.band_level)
            per_series[s_idx].append(entry)

    keep = [i for i in range(len(points))
            if any(series[i] is not None for series in per_series)]
    if not keep:
        raise EmptySubgroupError(
            "the selected filters match no population cell at any axis point; "
            "relax the conditioning or switch views"
        )

    axis = tuple(points[i][0] for i in keep)
    series_out = []
    for (label, sub_cond), values in zip(strata, per_series):
        kept = [values[i] for i in keep]
        series_out.append(CurveSeries(
            label=label,
            mean=tuple(None if v is None else v["mean"] for v in kept),
            lo=tuple(None if v is None else v["lo"] for v in kept) if query.bands else None,
            hi=tuple(None if v is None else v["hi"] for v in kept) if query.bands else None,
            weight=tuple(None if v is None else v["weight"] for v in kept),
            conditioning=sub_cond,
        ))

    return PrevalenceCurve(
        disease=query.disease,
        disease_name=shape.diseases.names[j],
        view=query.view,
        axis=axis,
        series=tuple(series_out),
        bands=query.bands,
        band_level=query.band_level,
        scale=SCALE_NONE,
        conditioning=cond,
        stratify_by=query.stratify_by,
        shape=shape,
    )


def _subgroup_population(
    margins: DemographicMargins,
    shape: GridShape,
    cond: ConditioningSet,
    view: str,
    axis_value: int,
) -> float:
    """Census population of the demographic subgroup behind one curve point."""
    loc_idx = [shape.location_index[l] for l in cond.values("location", shape)]
    sex_idx = [shape.sex_levels.index(s) for s in cond.values("sex", shape)]
    ages = set(cond.values("age", shape))
    cohorts = cond.values("cohort", shape)
    if view == "year":
        coh_idx = [shape.cohort_index[c] for c in cohorts if (axis_value - c) in ages]
    else:
        coh_idx = [shape.cohort_index[c] for c in cohorts]
    if not coh_idx:
        return 0.0
    sub = margins.counts[np.ix_(loc_idx, coh_idx, sex_idx)]
    return float(sub.sum())


def expected_cases(
    prevalence_curve: PrevalenceCurve,
    margins: DemographicMargins | None,
    scale: str,
) -> PrevalenceCurve:
    """Rescale a proportion curve to cases per 100,000 or absolute counts.

    Absolute counts multiply by the census population of the *demographic*
    subgroup (location, cohort, sex); risk-factor filters do not shrink the
    population base because the margins only resolve demographics.
    """
    if scale == SCALE_NONE:
        return prevalence_curve
    if prevalence_curve.scale != SCALE_NONE:
        raise GridError("curve is already scaled")
    if scale == SCALE_ABSOLUTE and margins is None:
        raise GridError("absolute case scaling needs demographic margins")

    new_series = []
    for s in prevalence_curve.series:
        factors = []
        for axis_value in prevalence_curve.axis:
            if scale == SCALE_PER_100K:
                factors.append(PER_100K_FACTOR)
            else:
                pop = _subgroup_population(
                    margins, prevalence_curve.shape, s.conditioning,
                    prevalence_curve.view, axis_value,
                )
                if pop <= 0:
                    raise EmptySubgroupError(
                        f"margins hold no population for the subgroup at {axis_value}"
                    )
                factors.append(pop)

        def scaled(vals):
            return tuple(None if v is None else v * f for v, f in zip(vals, factors))

        new_series.append(replace(
            s,
            mean=scaled(s.mean),
            lo=scaled(s.lo) if s.lo is not None else None,
            hi=scaled(s.hi) if s.hi is not None else None,
        ))
    return replace(prevalence_curve, series=tuple(new_series), scale=scale)


def curve_payload(c: PrevalenceCurve) -> dict:
    """JSON-ready representation shared by the HTTP API and the CLI."""
    payload = {
        "disease": c.disease,
        "disease_name": c.disease_name,
        "view": c.view,
        "axis": list(c.axis),
        "bands": c.bands,
        "scale": c.scale,
        "conditioning": c.conditioning.to_json_dict(),
        "stratify_by": c.stratify_by,
        "series": [],
    }
    if c.bands:
        payload["band_level"] = c.band_level
    for s in c.series:
        entry = {"label": s.label, "mean": list(s.mean), "weight": list(s.weight)}
        if c.bands:
            entry["lo"] = list(s.lo)
            entry["hi"] = list(s.hi)
        payload["series"].append(entry)
    return payload
