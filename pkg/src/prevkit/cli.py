"""Pipeline driver: generate -> precompute -> serve -> query -> validate.

Every subcommand writes a JSON run manifest (atomically, on success) holding
the resolved configuration, seeds, input/output digests and stage timings, so
a run is reproducible from the manifest alone.

Exit codes: 0 ok, 2 validation failure, 3 input error, 4 store corruption.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click

from .config import GridConfig, parse_grid_config
from .errors import (
    ConfigError,
    EmptySubgroupError,
    PrevkitError,
    StoreFormatError,
    StratificationError,
    ValidationFailure,
)
from .grid import conditioning_from_filter_items, enumerate_grid
from .query import (
    DEFAULT_BAND_LEVEL,
    SCALE_ABSOLUTE,
    SCALE_NONE,
    SCALE_PER_100K,
    PrevalenceQuery,
    curve,
    curve_payload,
    expected_cases,
)
from .store import (
    precompute_store,
    read_ensemble,
    read_joint_weights,
    read_store,
    thin_sample,
    write_ensemble,
    write_joint_weights,
    write_store,
)
from .synth import (
    draw_posterior_ensemble,
    generate_margins,
    generate_survey,
    generate_truth,
    read_margins_csv,
    write_margins_csv,
    write_survey_csv,
)
from .validation import TruthBundle, read_truth_bundle, run_validation, write_truth_bundle
from .weights import build_weight_table, demographic_decomposition, dump_weight_table


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _resolved_config(config: GridConfig) -> dict:
    return {
        "grid": config.shape.to_json_dict(),
        "grid_digest": config.grid_digest(),
        "synth": config.synth.to_json_dict(),
        "source_path": config.source_path,
    }


class _Timer:
    def __init__(self):
        self.timings_ms: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def lap(self, stage: str) -> None:
        now = time.perf_counter()
        self.timings_ms[stage] = round((now - self._t0) * 1000.0, 3)
        self._t0 = now


@click.group()
def cli():
    """Prevalence-curve pipeline: synthetic posterior to served curves."""


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", required=True, type=click.IntRange(min=0))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--dump-weights", "dump_path", type=click.Path(dir_okay=False), default=None,
              help="Also write a delimited debug dump of the weight table.")
def generate(config_path, seed, out_dir, dump_path):
    """Emit ensemble, margins, survey and joint-weight files plus a manifest."""
    config = parse_grid_config(config_path)
    shape, synth = config.shape, config.synth
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()

    truth = generate_truth(config, seed)
    timer.lap("truth")
    ensemble = draw_posterior_ensemble(truth, synth.b_draws, synth.dispersion, seed)
    timer.lap("ensemble")
    margins = generate_margins(config, seed)
    survey = generate_survey(truth, margins, config, synth.survey_n, seed)
    timer.lap("margins_survey")
    table = build_weight_table(survey, shape, synth.weight_alpha, synth.weight_replicates, seed)
    joint = demographic_decomposition(margins, table, shape)
    timer.lap("weights")

    digest = config.grid_digest()
    paths = {
        "ensemble": out / "ensemble.bin",
        "margins": out / "margins.csv",
        "survey": out / "survey.csv",
        "weights": out / "weights.bin",
        "truth": out / "truth.json",
    }
    write_ensemble(paths["ensemble"], ensemble, digest)
    write_margins_csv(margins, shape, paths["margins"])
    write_survey_csv(survey, shape, paths["survey"])
    write_joint_weights(paths["weights"], joint, digest)
    bundle = TruthBundle(
        grid_digest=digest, seed=seed, ensemble_seed=seed, weights_seed=seed,
        margins_seed=seed, survey_seed=seed, store_seed=seed,
        b_draws=synth.b_draws, dispersion=synth.dispersion, particles=synth.particles,
        survey_n=synth.survey_n, weight_alpha=synth.weight_alpha,
        weight_replicates=synth.weight_replicates,
    )
    write_truth_bundle(paths["truth"], bundle)
    if dump_path:
        dump_weight_table(table, shape, dump_path)
    timer.lap("write")

    grid = enumerate_grid(shape)
    write_manifest(out / "manifest.json", {
        "subcommand": "generate",
        "config": _resolved_config(config),
        "seeds": {"root": seed},
        "grid_cells": grid.n_cells,
        "b_draws": synth.b_draws,
        "inputs": {"config": file_sha256(config_path)},
        "outputs": {name: file_sha256(p) for name, p in paths.items()},
        "timings_ms": timer.timings_ms,
    })
    click.echo(f"generated {grid.n_cells}-cell grid inputs in {out} "
               f"(B={synth.b_draws}, survey n={synth.survey_n})")


@cli.command()
@click.option("--grid", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ensemble", "ensemble_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--particles", default=300, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", required=True, type=click.IntRange(min=0))
@click.option("--threads", default=1, show_default=True, type=click.IntRange(min=1))
def precompute(config_path, ensemble_path, weights_path, out_path, particles, seed, threads):
    """Thin the ensemble and precompute the per-cell joint particles."""
    config = parse_grid_config(config_path)
    digest = config.grid_digest()
    timer = _Timer()

    ensemble = read_ensemble(ensemble_path, expected_grid_digest=digest)
    joint = read_joint_weights(weights_path, expected_grid_digest=digest)
    timer.lap("load")
    thinned = thin_sample(ensemble, particles)
    grid = enumerate_grid(config.shape)
    meta, probs, weights = precompute_store(grid, thinned, joint, seed, threads=threads)
    timer.lap("precompute")
    write_store(out_path, meta, probs, weights)
    timer.lap("write")

    write_manifest(Path(out_path + ".manifest.json"), {
        "subcommand": "precompute",
        "config": _resolved_config(config),
        "seeds": {"store": seed, "ensemble": ensemble.seed},
        "particles": particles,
        "thin_stride": thinned.thin_stride,
        "cells": grid.n_cells,
        "threads": threads,
        "inputs": {
            "config": file_sha256(config_path),
            "ensemble": file_sha256(ensemble_path),
            "weights": file_sha256(weights_path),
        },
        "outputs": {"store": file_sha256(out_path)},
        "timings_ms": timer.timings_ms,
    })
    click.echo(f"precomputed {grid.n_cells} cells x {particles} particles -> {out_path}")


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--margins", "margins_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8710, show_default=True, type=int)
@click.option("--origin", "origins", multiple=True, help="Allowed CORS origin (repeatable).")
@click.option("--request-log", type=click.Path(dir_okay=False), default=None)
def serve(store_path, margins_path, host, port, origins, request_log):
    """Serve the store over HTTP (inherits uvicorn's graceful shutdown)."""
    import uvicorn

    from .api import create_app

    store = read_store(store_path)
    margins = read_margins_csv(margins_path, store.shape) if margins_path else None
    app = create_app(store, margins=margins, origins=list(origins) or None,
                     request_log=request_log)
    click.echo(f"serving store {store.digest[:12]}... on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command(name="query")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--margins", "margins_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--disease", required=True)
@click.option("--view", default="year", show_default=True, type=click.Choice(["year", "age"]))
@click.option("--filter", "filters", multiple=True, metavar="DIM:VALUE",
              help="Conditioning filter (repeatable), e.g. --filter smoking:1.")
@click.option("--stratify", default=None)
@click.option("--bands/--no-bands", default=True, show_default=True)
@click.option("--level", default=DEFAULT_BAND_LEVEL, show_default=True, type=float)
@click.option("--scale", default=SCALE_NONE, show_default=True,
              type=click.Choice([SCALE_NONE, SCALE_PER_100K, SCALE_ABSOLUTE]))
@click.option("--json", "as_json", flag_value=True, default=True, help="JSON output (default).")
@click.option("--table", "as_json", flag_value=False, help="Aligned-table output.")
def query_cmd(store_path, margins_path, disease, view, filters, stratify, bands, level,
              scale, as_json):
    """Print one prevalence curve, exactly as the HTTP API would return it."""
    store = read_store(store_path)
    margins = read_margins_csv(margins_path, store.shape) if margins_path else None
    if scale == SCALE_ABSOLUTE and margins is None:
        raise ConfigError("--scale absolute needs --margins")
    cond = conditioning_from_filter_items(store.shape, list(filters))
    q = PrevalenceQuery(disease=disease, view=view, conditioning=cond,
                        stratify_by=stratify, bands=bands, band_level=level)
    result = expected_cases(curve(store, q), margins, scale)
    payload = curve_payload(result)
    payload["store_digest"] = store.digest
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True, indent=2))
    else:
        _print_table(payload)


def _print_table(payload: dict) -> None:
    axis_name = payload["view"]
    headers = [axis_name]
    for s in payload["series"]:
        headers.append(f"{s['label']} mean")
        if payload["bands"]:
            headers.append(f"{s['label']} lo")
            headers.append(f"{s['label']} hi")
    rows = []
    for i, axis_value in enumerate(payload["axis"]):
        row = [str(axis_value)]
        for s in payload["series"]:
            for key in (("mean", "lo", "hi") if payload["bands"] else ("mean",)):
                v = s[key][i]
                row.append("-" if v is None else f"{v:.6g}")
        rows.append(row)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    click.echo("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in rows:
        click.echo("  ".join(v.ljust(w) for v, w in zip(row, widths)))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--pairs", default=500, show_default=True, type=click.IntRange(min=1))
@click.option("--oracle-cells", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=None, type=click.IntRange(min=0))
def validate(config_path, store_path, truth_path, report_path, pairs, oracle_cells, seed):
    """Check band coverage against the synthetic truth and spot-check cells."""
    config = parse_grid_config(config_path)
    store = read_store(store_path)
    bundle = read_truth_bundle(truth_path)
    timer = _Timer()
    report, passed = run_validation(config, store, bundle, n_pairs=pairs,
                                    n_oracle_cells=oracle_cells, seed=seed)
    timer.lap("validate")
    report["timings_ms"] = timer.timings_ms
    write_manifest(Path(report_path), report)

    cov = report["coverage"]
    if cov.get("skipped"):
        click.echo(f"coverage: skipped ({cov['notice']})")
    else:
        click.echo(f"coverage: {cov['inside']}/{cov['pairs']} = {cov['fraction']:.3f} "
                   f"(accept {cov['bounds'][0]}..{cov['bounds'][1]})")
    orc = report["oracle"]
    click.echo(f"oracle: max prob diff {orc['max_prob_diff']:.3g}, "
               f"max weight diff {orc['max_weight_diff']:.3g} over {orc['cells_checked']} cells")
    if not passed:
        raise ValidationFailure(f"see report {report_path}")
    click.echo(f"validation passed; report written to {report_path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as e:
        e.show()
        return 3
    except click.Abort:
        click.echo("aborted", err=True)
        return 3
    except ValidationFailure as e:
        click.echo(f"validation failed: {e}", err=True)
        return 2
    except StoreFormatError as e:
        click.echo(f"store error: {e}", err=True)
        return 4
    except (ConfigError, EmptySubgroupError, StratificationError) as e:
        click.echo(f"error: {e}", err=True)
        return 3
    except PrevkitError as e:
        click.echo(f"error: {e}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
