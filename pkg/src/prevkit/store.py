"""Binary particle-store container and the precomputation that fills it.

One container format serves three artifact kinds (particle store, parameter
ensemble, joint weights):

    magic "PREVSTOR" | version u16 | header_len u32 | header JSON
    | sha256 of everything above | payload arrays | sha256 of payload

everything little-endian.  The particle payload is one fixed-size record per
(cell, particle): n_d probabilities quantized to 16-bit fixed point plus the
cell weight as float32.  A u64 byte-offset index precedes the records so a
reader can seek straight to any cell.

Probabilities are quantized as round(p * 65535), so the absolute error is at
most 1/(2*65535) ~ 7.63e-6.  Reads reproduce written bytes exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import rng
from .config import DESIGN_LAYOUT, GridShape, N_PREDICTORS
from .errors import ConfigError, StoreFormatError
from .grid import GridIndex, enumerate_grid
from .synth import PosteriorEnsemble
from .weights import JointWeights, WeightTable

MAGIC = b"PREVSTOR"
VERSION = 1
QUANT_MAX = np.uint16(65535)

KIND_STORE = "particle-store"
KIND_ENSEMBLE = "parameter-ensemble"
KIND_WEIGHTS = "joint-weights"


def quantize_probs(p: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(p, 0.0, 1.0) * 65535.0).astype(np.uint16)


def dequantize_probs(q: np.ndarray) -> np.ndarray:
    return q.astype(np.float64) / 65535.0


# ---------------------------------------------------------------------------
# generic container
# ---------------------------------------------------------------------------

def _dtype_to_json(dt: np.dtype):
    if dt.names is None:
        return dt.str
    out = []
    for name in dt.names:
        sub, _ = dt.fields[name]
        if sub.subdtype is not None:
            base, shape = sub.subdtype
            out.append([name, base.str, list(shape)])
        else:
            out.append([name, sub.str])
    return out


def _dtype_from_json(spec) -> np.dtype:
    if isinstance(spec, str):
        return np.dtype(spec)
    fields = []
    for entry in spec:
        if len(entry) == 3:
            fields.append((entry[0], entry[1], tuple(entry[2])))
        else:
            fields.append((entry[0], entry[1]))
    return np.dtype(fields)


def write_container(path: str | Path, kind: str, meta: dict,
                    arrays: list[tuple[str, np.ndarray]]) -> str:
    """Write a container file; returns the header digest (hex)."""
    header = {
        "kind": kind,
        "meta": meta,
        "arrays": [
            {"name": name, "dtype": _dtype_to_json(arr.dtype), "shape": list(arr.shape)}
            for name, arr in arrays
        ],
    }
    header_json = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = MAGIC + struct.pack("<HI", VERSION, len(header_json)) + header_json
    head_digest = hashlib.sha256(head).digest()

    payload_hash = hashlib.sha256()
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(head_digest)
        for _, arr in arrays:
            blob = np.ascontiguousarray(arr).tobytes()
            payload_hash.update(blob)
            fh.write(blob)
        fh.write(payload_hash.digest())
    return head_digest.hex()


def read_container(path: str | Path, expect_kind: str | None = None
                   ) -> tuple[dict, dict[str, np.ndarray], str]:
    """Read and verify a container; returns (header, arrays, header digest)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise StoreFormatError(f"cannot read {path}: {e}") from None
    if len(blob) < len(MAGIC) + 6 + 32:
        raise StoreFormatError(f"{path}: truncated container")
    if blob[: len(MAGIC)] != MAGIC:
        raise StoreFormatError(f"{path}: bad magic, not a prevkit container")
    version, header_len = struct.unpack_from("<HI", blob, len(MAGIC))
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported container version {version}")
    head_end = len(MAGIC) + 6 + header_len
    if len(blob) < head_end + 32:
        raise StoreFormatError(f"{path}: truncated header")
    head_digest = blob[head_end:head_end + 32]
    if hashlib.sha256(blob[:head_end]).digest() != head_digest:
        raise StoreFormatError(f"{path}: header digest mismatch (corrupt header)")
    try:
        header = json.loads(blob[len(MAGIC) + 6:head_end])
    except json.JSONDecodeError as e:
        raise StoreFormatError(f"{path}: unreadable header: {e}") from None
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise StoreFormatError(
            f"{path}: container holds {header.get('kind')!r}, expected {expect_kind!r}"
        )

    offset = head_end + 32
    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        dt = _dtype_from_json(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dt.itemsize
        if offset + nbytes > len(blob) - 32:
            raise StoreFormatError(f"{path}: truncated payload")
        arrays[spec["name"]] = np.frombuffer(
            blob, dtype=dt, count=int(np.prod(shape, dtype=np.int64)), offset=offset
        ).reshape(shape)
        offset += nbytes
    payload_digest = blob[-32:]
    if offset != len(blob) - 32:
        raise StoreFormatError(f"{path}: trailing bytes after payload")
    if hashlib.sha256(blob[head_end + 32:-32]).digest() != payload_digest:
        raise StoreFormatError(f"{path}: payload digest mismatch (corrupt payload)")
    return header, arrays, head_digest.hex()


# ---------------------------------------------------------------------------
# thinning
# ---------------------------------------------------------------------------

def thin_sample(ensemble: PosteriorEnsemble, count: int) -> PosteriorEnsemble:
    """Evenly strided subsequence of length `count`, stride floor(B/count)."""
    b = ensemble.n_draws
    if count < 1:
        raise ConfigError("thinned size must be >= 1")
    if count > b:
        raise ConfigError(f"cannot thin {b} draws down to {count}")
    stride = b // count
    idx = np.arange(count, dtype=np.int64) * stride
    return PosteriorEnsemble(
        beta0=ensemble.beta0[idx], lam0=ensemble.lam0[idx], lam1=ensemble.lam1[idx],
        xi0=ensemble.xi0[idx], xi1=ensemble.xi1[idx], gamma=ensemble.gamma[idx],
        base_cohort=ensemble.base_cohort,
        seed=ensemble.seed,
        dispersion=ensemble.dispersion,
        b_original=ensemble.b_original,
        thin_stride=ensemble.thin_stride * stride,
    )


def thinning_indices(b: int, count: int) -> np.ndarray:
    if count > b or count < 1:
        raise ConfigError(f"cannot thin {b} draws down to {count}")
    return np.arange(count, dtype=np.int64) * (b // count)


# ---------------------------------------------------------------------------
# precomputation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParticleBlock:
    """Stored joint sample of one covariate cell."""

    cell_id: int
    probs: np.ndarray    # (P, n_d) uint16
    weights: np.ndarray  # (P,) float32


def _design_matrix(grid: GridIndex, cell_ids: np.ndarray) -> np.ndarray:
    shape = grid.shape
    ages = grid.cell_age[cell_ids].astype(np.float64)
    half = (shape.age_max - shape.age_min) / 2.0
    mid = (shape.age_max + shape.age_min) / 2.0
    age_std = np.zeros_like(ages) if half == 0 else (ages - mid) / half
    cat = grid.cell_category[cell_ids]
    sex = np.asarray(shape.sex_levels, dtype=np.float64)[grid.cell_sex_idx[cell_ids]]
    x = np.empty((cell_ids.size, N_PREDICTORS))
    x[:, 0] = 1.0
    x[:, 1] = age_std
    x[:, 2] = sex
    x[:, 3] = cat // 4
    x[:, 4] = (cat // 2) % 2
    x[:, 5] = cat % 2
    return x


def _compute_chunk(
    grid: GridIndex,
    ensemble: PosteriorEnsemble,
    joint: JointWeights,
    seed: int,
    cell_ids: np.ndarray,
    out_probs: np.ndarray,
    out_weights: np.ndarray,
) -> None:
    """Fill positional output views (len(cell_ids), ...) for one cell chunk."""
    shape = grid.shape
    p_count = ensemble.n_draws
    li = grid.cell_location_idx[cell_ids]
    ci = grid.cell_cohort_idx[cell_ids]
    si = grid.cell_sex_idx[cell_ids]
    cat = grid.cell_category[cell_ids]
    dc = (np.asarray(shape.cohorts, dtype=np.float64)[ci]
          - ensemble.base_cohort)
    x = _design_matrix(grid, cell_ids)

    eps = np.empty((cell_ids.size, p_count))
    for row, cid in enumerate(cell_ids):
        eps[row] = rng.substream(seed, rng.CELL_COMORBIDITY, int(cid)).standard_normal(p_count)

    # per-particle joint weights: demographic share x age share x category
    # replicate (particle b carries replicate b mod W)
    reps = joint.table.replicates[li, ci, si, :, cat]          # (m, W)
    bmod = np.arange(p_count) % joint.n_replicates
    w = joint.share[li, ci, si][:, None] * joint.age_factor * reps[:, bmod]
    out_weights[:] = w.astype(np.float32)

    for b in range(p_count):
        coeff = (
            ensemble.beta0[b][:, :, None]
            + ensemble.lam0[b][:, :, None] * ensemble.xi0[b][:, :, li]
            + dc[None, None, :] * ensemble.lam1[b][:, :, None] * ensemble.xi1[b][:, :, li]
        )                                                      # (n_d, n_p, m)
        eta = np.einsum("jhm,mh->mj", coeff, x)
        eta += ensemble.gamma[b][None, :] * eps[:, b, None]
        with np.errstate(over="ignore"):
            probs = 1.0 / (1.0 + np.exp(-eta))
        out_probs[:, b, :] = quantize_probs(probs)


def precompute_cell(
    grid: GridIndex,
    ensemble: PosteriorEnsemble,
    joint: JointWeights,
    cell_id: int,
    seed: int,
) -> ParticleBlock:
    """Particles of one cell; bit-identical to the batch precompute."""
    if not 0 <= cell_id < grid.n_cells:
        raise ConfigError(f"cell id {cell_id} outside the grid")
    n_d = grid.shape.n_diseases
    probs = np.empty((1, ensemble.n_draws, n_d), dtype=np.uint16)
    weights = np.empty((1, ensemble.n_draws), dtype=np.float32)
    ids = np.asarray([cell_id], dtype=np.int64)
    _compute_chunk(grid, ensemble, joint, seed, ids, probs, weights)
    return ParticleBlock(cell_id=cell_id, probs=probs[0], weights=weights[0])


def precompute_store(
    grid: GridIndex,
    ensemble: PosteriorEnsemble,
    joint: JointWeights,
    seed: int,
    threads: int = 1,
    chunk_size: int = 4096,
) -> tuple[dict, np.ndarray, np.ndarray]:
    """Fill probability and weight arrays for every grid cell.

    Returns (store meta, probs (n_cells, P, n_d) u16, weights (n_cells, P) f32).
    Deterministic for any thread count: every cell derives its own substream.
    """
    n_cells = grid.n_cells
    n_d = grid.shape.n_diseases
    p_count = ensemble.n_draws
    probs = np.empty((n_cells, p_count, n_d), dtype=np.uint16)
    weights = np.empty((n_cells, p_count), dtype=np.float32)

    spans = [(s, min(s + chunk_size, n_cells)) for s in range(0, n_cells, chunk_size)]

    def run(span):
        s, e = span
        ids = np.arange(s, e, dtype=np.int64)
        _compute_chunk(grid, ensemble, joint, seed, ids, probs[s:e], weights[s:e])

    if threads <= 1 or len(spans) == 1:
        for span in spans:
            run(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for f in [pool.submit(run, span) for span in spans]:
                f.result()

    meta = {
        "grid": grid.shape.to_json_dict(),
        "grid_digest": grid.shape.digest(),
        "particles": p_count,
        "b_original": ensemble.b_original,
        "thin_stride": ensemble.thin_stride,
        "weight_replicates": joint.n_replicates,
        "design_layout": ",".join(DESIGN_LAYOUT),
        "seed": seed,
        "ensemble_seed": ensemble.seed,
        "dispersion": ensemble.dispersion,
        "n_cells": n_cells,
        "n_diseases": n_d,
    }
    return meta, probs, weights


# ---------------------------------------------------------------------------
# particle-store file
# ---------------------------------------------------------------------------

def _particle_dtype(n_d: int) -> np.dtype:
    return np.dtype([("probs", "<u2", (n_d,)), ("weight", "<f4")])


def write_store(path: str | Path, meta: dict, probs: np.ndarray, weights: np.ndarray) -> str:
    """Serialize a full store; returns the header digest."""
    n_cells, p_count, n_d = probs.shape
    if weights.shape != (n_cells, p_count):
        raise ConfigError("probs and weights disagree on (cells, particles)")
    if int(meta.get("n_cells", n_cells)) != n_cells:
        raise ConfigError("meta n_cells does not match payload")
    record = np.empty((n_cells, p_count), dtype=_particle_dtype(n_d))
    record["probs"] = probs
    record["weight"] = weights
    block_size = record.dtype.itemsize * p_count
    index = np.arange(n_cells, dtype=np.uint64) * np.uint64(block_size)
    return write_container(path, KIND_STORE, meta,
                           [("index", index), ("particles", record)])


@dataclass(frozen=True)
class ParticleStore:
    """A loaded, immutable store; shareable across any number of readers."""

    meta: dict
    shape: GridShape
    grid: GridIndex
    probs: np.ndarray    # (n_cells, P, n_d) uint16
    weights: np.ndarray  # (n_cells, P) float32
    digest: str          # header digest, the cache validator

    @property
    def n_particles(self) -> int:
        return self.probs.shape[1]

    @property
    def n_cells(self) -> int:
        return self.probs.shape[0]

    @cached_property
    def disease_ids(self) -> tuple[str, ...]:
        return self.shape.diseases.ids

    def disease_index(self, disease_id: str) -> int:
        return self.shape.diseases.index(disease_id)


def read_store(path: str | Path) -> ParticleStore:
    """Load and verify a store; any corruption refuses the whole load."""
    header, arrays, digest = read_container(path, expect_kind=KIND_STORE)
    meta = header["meta"]
    shape = GridShape.from_json_dict(meta["grid"])
    if meta.get("grid_digest") != shape.digest():
        raise StoreFormatError(f"{path}: embedded grid digest mismatch")
    grid = enumerate_grid(shape)
    record = arrays["particles"]
    n_cells = int(meta["n_cells"])
    if record.shape[0] != n_cells or n_cells != grid.n_cells:
        raise StoreFormatError(f"{path}: store does not cover the grid exactly once")
    expected_index = np.arange(n_cells, dtype=np.uint64) * np.uint64(
        record.dtype.itemsize * record.shape[1])
    if not np.array_equal(arrays["index"], expected_index):
        raise StoreFormatError(f"{path}: cell offset index is inconsistent")
    return ParticleStore(
        meta=meta,
        shape=shape,
        grid=grid,
        probs=np.ascontiguousarray(record["probs"]),
        weights=np.ascontiguousarray(record["weight"]),
        digest=digest,
    )


def store_from_arrays(meta: dict, probs: np.ndarray, weights: np.ndarray) -> ParticleStore:
    """In-memory store (used by tests and the precompute-then-serve path)."""
    shape = GridShape.from_json_dict(meta["grid"])
    return ParticleStore(
        meta=meta, shape=shape, grid=enumerate_grid(shape),
        probs=probs, weights=weights,
        digest=hashlib.sha256(
            json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest(),
    )


# ---------------------------------------------------------------------------
# ensemble and joint-weight files (same container, parameter-level payload)
# ---------------------------------------------------------------------------

def write_ensemble(path: str | Path, ensemble: PosteriorEnsemble, grid_digest: str) -> str:
    meta = {
        "seed": ensemble.seed,
        "dispersion": ensemble.dispersion,
        "b_original": ensemble.b_original,
        "thin_stride": ensemble.thin_stride,
        "base_cohort": ensemble.base_cohort,
        "grid_digest": grid_digest,
    }
    arrays = [(name, getattr(ensemble, name))
              for name in ("beta0", "lam0", "lam1", "xi0", "xi1", "gamma")]
    return write_container(path, KIND_ENSEMBLE, meta, arrays)


def read_ensemble(path: str | Path, expected_grid_digest: str | None = None) -> PosteriorEnsemble:
    header, arrays, _ = read_container(path, expect_kind=KIND_ENSEMBLE)
    meta = header["meta"]
    if expected_grid_digest is not None and meta["grid_digest"] != expected_grid_digest:
        raise StoreFormatError(f"{path}: ensemble was built for a different grid")
    return PosteriorEnsemble(
        beta0=arrays["beta0"].astype(np.float64),
        lam0=arrays["lam0"].astype(np.float64),
        lam1=arrays["lam1"].astype(np.float64),
        xi0=arrays["xi0"].astype(np.float64),
        xi1=arrays["xi1"].astype(np.float64),
        gamma=arrays["gamma"].astype(np.float64),
        base_cohort=int(meta["base_cohort"]),
        seed=int(meta["seed"]),
        dispersion=float(meta["dispersion"]),
        b_original=int(meta["b_original"]),
        thin_stride=int(meta["thin_stride"]),
    )


def write_joint_weights(path: str | Path, joint: JointWeights, grid_digest: str) -> str:
    meta = {
        "prior_alpha": joint.table.prior_alpha,
        "weight_replicates": joint.n_replicates,
        "seed": joint.table.seed,
        "n_ages": joint.n_ages,
        "grid_digest": grid_digest,
    }
    arrays = [
        ("share", joint.share),
        ("mean", joint.table.mean),
        ("replicates", joint.table.replicates),
        ("counts", joint.table.counts),
        ("pooled_from", joint.table.pooled_from),
    ]
    return write_container(path, KIND_WEIGHTS, meta, arrays)


def read_joint_weights(path: str | Path, expected_grid_digest: str | None = None) -> JointWeights:
    header, arrays, _ = read_container(path, expect_kind=KIND_WEIGHTS)
    meta = header["meta"]
    if expected_grid_digest is not None and meta["grid_digest"] != expected_grid_digest:
        raise StoreFormatError(f"{path}: weights were built for a different grid")
    table = WeightTable(
        mean=arrays["mean"].astype(np.float64),
        replicates=arrays["replicates"].astype(np.float64),
        counts=arrays["counts"].astype(np.int64),
        pooled_from=arrays["pooled_from"].astype(np.int8),
        prior_alpha=float(meta["prior_alpha"]),
        seed=int(meta["seed"]),
    )
    return JointWeights(
        share=arrays["share"].astype(np.float64),
        table=table,
        n_ages=int(meta["n_ages"]),
    )
