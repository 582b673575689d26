"""HTTP JSON interface over a loaded particle store.

Endpoints
    GET /api/v1/metadata     catalog of diseases, regions/LHUs, dimensions
    GET /api/v1/prevalence   curve JSON for a conditioning set
    GET /healthz             store digest and uptime

The service is stateless: the store is immutable after load, every response
is a pure function of (store, margins, request), and all responses carry an
ETag derived from the store digest.  Filters arrive as repeated
``f=<dimension>:<value>`` query parameters so that any exact view is a
shareable URL.  Only aggregated curves ever leave the service; there is no
endpoint exposing per-cell particles.
"""

from __future__ import annotations

import json
import time
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .config import BINARY_DIMENSIONS, BINARY_LABELS, DIMENSIONS, RESULT_LICENSE
from .errors import (
    EmptySubgroupError,
    GridError,
    StratificationError,
    UnknownDiseaseError,
    UnknownLocationError,
)
from .grid import conditioning_from_filter_items
from .query import (
    DEFAULT_BAND_LEVEL,
    MAX_STRATA,
    SCALE_ABSOLUTE,
    SCALE_NONE,
    SCALE_PER_100K,
    PrevalenceQuery,
    curve,
    curve_payload,
    expected_cases,
)
from .store import ParticleStore
from .synth import DemographicMargins

_SCALES = (SCALE_NONE, SCALE_PER_100K, SCALE_ABSOLUTE)


def _json_response(payload: dict, status: int = 200) -> Response:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    return Response(content=body, status_code=status, media_type="application/json")


def parse_filters(shape, raw_filters: list[str]) -> ConditioningSet:
    """Repeated f=<dimension>:<value> parameters -> conditioning set."""
    try:
        return conditioning_from_filter_items(shape, raw_filters)
    except UnknownLocationError as e:
        raise HTTPException(404, detail=str(e)) from None
    except GridError as e:
        raise HTTPException(400, detail=str(e)) from None


def build_metadata(store: ParticleStore) -> dict:
    shape = store.shape
    return {
        "diseases": [{"id": i, "name": n}
                     for i, n in zip(shape.diseases.ids, shape.diseases.names)],
        "regions": {r: list(lhus) for r, lhus in sorted(shape.region_map.items())},
        "locations": [{"id": l, "region": r} for l, r in zip(shape.locations, shape.regions)],
        "cohorts": list(shape.cohorts),
        "ages": {"min": shape.age_min, "max": shape.age_max},
        "years": {"min": shape.year_min, "max": shape.year_max},
        "dimensions": {
            dim: {
                "levels": list(shape.binary_levels(dim)),
                "labels": {str(v): BINARY_LABELS[dim][v] for v in shape.binary_levels(dim)},
            }
            for dim in BINARY_DIMENSIONS
        },
        "stratifiable": [dim for dim in DIMENSIONS
                         if 2 <= len(shape.dim_values(dim)) <= MAX_STRATA],
        "max_strata": MAX_STRATA,
        "band_level_default": DEFAULT_BAND_LEVEL,
        "scales": list(_SCALES),
        "particles": store.n_particles,
        "license": RESULT_LICENSE,
        "store_digest": store.digest,
    }


def create_app(
    store: ParticleStore,
    margins: DemographicMargins | None = None,
    origins: list[str] | None = None,
    request_log: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="prevkit", docs_url=None, redoc_url=None)
    started = time.monotonic()
    etag = f'"{store.digest}"'
    metadata_payload = build_metadata(store)

    if origins:
        app.add_middleware(
            CORSMiddleware, allow_origins=list(origins), allow_methods=["GET"],
            allow_headers=["*"],
        )

    @app.middleware("http")
    async def log_and_tag(request: Request, call_next):
        t0 = time.perf_counter()
        if request.method == "GET" and request.headers.get("if-none-match") == etag \
                and request.url.path != "/healthz":
            response = Response(status_code=304)
        else:
            response = await call_next(request)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        if request.url.path != "/healthz":
            response.headers["ETag"] = etag
        if request_log is not None:
            record = {
                "ts": datetime.now(timezone.utc).isoformat(),
                "path": request.url.path,
                "query": str(request.url.query),
                "latency_ms": round(latency_ms, 3),
                "status": response.status_code,
            }
            with open(request_log, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return response

    @app.get("/api/v1/metadata")
    def metadata() -> Response:
        return _json_response(metadata_payload)

    @app.get("/api/v1/prevalence")
    def prevalence(
        disease: str | None = None,
        view: str = "year",
        f: list[str] = Query(default=[]),
        stratify: str | None = None,
        bands: str = "true",
        level: float = DEFAULT_BAND_LEVEL,
        scale: str = SCALE_NONE,
    ) -> Response:
        if disease is None:
            raise HTTPException(400, detail="missing required parameter 'disease'")
        if disease not in store.disease_ids:
            raise HTTPException(404, detail=f"unknown disease {disease!r}")
        if view not in ("year", "age"):
            raise HTTPException(400, detail="parameter 'view' must be 'year' or 'age'")
        if bands not in ("true", "false"):
            raise HTTPException(400, detail="parameter 'bands' must be 'true' or 'false'")
        if not 0.0 < level < 1.0:
            raise HTTPException(400, detail="parameter 'level' must be in (0, 1)")
        if scale not in _SCALES:
            raise HTTPException(400, detail=f"parameter 'scale' must be one of {_SCALES}")
        if stratify is not None and stratify not in DIMENSIONS:
            raise HTTPException(400, detail=f"unknown stratify dimension {stratify!r}")
        if scale == SCALE_ABSOLUTE and margins is None:
            raise HTTPException(400, detail="this service has no margins loaded; "
                                            "absolute scaling is unavailable")

        cond = parse_filters(store.shape, f)
        query = PrevalenceQuery(
            disease=disease, view=view, conditioning=cond, stratify_by=stratify,
            bands=bands == "true", band_level=level,
        )
        try:
            result = curve(store, query)
            result = expected_cases(result, margins, scale)
        except (EmptySubgroupError, StratificationError) as e:
            raise HTTPException(422, detail=str(e)) from None
        except UnknownDiseaseError as e:
            raise HTTPException(404, detail=str(e)) from None
        except GridError as e:
            raise HTTPException(400, detail=str(e)) from None
        payload = curve_payload(result)
        payload["store_digest"] = store.digest
        return _json_response(payload)

    @app.get("/healthz")
    def healthz() -> Response:
        return _json_response({
            "status": "ok",
            "store_digest": store.digest,
            "uptime_s": round(time.monotonic() - started, 3),
            "cells": store.n_cells,
            "particles": store.n_particles,
        })

    return app
