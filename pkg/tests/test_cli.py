import json
from pathlib import Path

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from prevkit.api import create_app
from prevkit.cli import cli, main
from prevkit.store import read_store
from prevkit.synth import read_margins_csv

from conftest import DESK_CONFIG_PATH

CONFIG = str(Path(DESK_CONFIG_PATH).resolve())


def _write_fast_config(tmp_path: Path) -> str:
    """Desk grid with a lighter posterior so CLI tests stay fast.

    Particle count stays at 150+: the 90% band of n particles covers an
    exchangeable draw at rate ~(1 - 2*(1 + 0.05*(n-1))/(n+1)), which drops
    below the 0.85 validation gate for small n.
    """
    text = Path(CONFIG).read_text()
    text = text.replace("b_draws = 3000", "b_draws = 1500")
    text = text.replace("particles = 300", "particles = 150")
    text = text.replace("weight_replicates = 100", "weight_replicates = 10")
    text = text.replace("survey_n = 6000", "survey_n = 2000")
    text = text.replace(
        "kernel = 0.6:kernels/geodesic.txt, 0.4:kernels/pollution.txt",
        f"kernel = 0.6:{Path(CONFIG).parent}/kernels/geodesic.txt, "
        f"0.4:{Path(CONFIG).parent}/kernels/pollution.txt",
    )
    p = tmp_path / "fast.cfg"
    p.write_text(text)
    return str(p)


def _run(args):
    result = CliRunner().invoke(cli, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _write_fast_config(tmp)
    out = tmp / "run"
    _run(["generate", "--config", cfg, "--seed", "11", "--out", str(out),
          "--dump-weights", str(tmp / "wdump.csv")])
    _run(["precompute", "--grid", cfg, "--ensemble", str(out / "ensemble.bin"),
          "--weights", str(out / "weights.bin"), "--out", str(out / "store.bin"),
          "--particles", "150", "--seed", "11"])
    return {"cfg": cfg, "out": out, "tmp": tmp}


def test_generate_writes_manifest_and_artifacts(pipeline_dir):
    out = pipeline_dir["out"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "generate"
    assert manifest["grid_cells"] == 480
    assert manifest["b_draws"] == 1500
    assert set(manifest["outputs"]) == {"ensemble", "margins", "survey", "weights", "truth"}
    for name in ("ensemble.bin", "margins.csv", "survey.csv", "weights.bin", "truth.json"):
        assert (out / name).exists()
    assert json.loads((out / "truth.json").read_text())["b_draws"] == 1500


def test_generate_same_seed_reproduces_identical_digests(pipeline_dir, tmp_path):
    cfg = pipeline_dir["cfg"]
    out2 = tmp_path / "again"
    _run(["generate", "--config", cfg, "--seed", "11", "--out", str(out2)])
    m1 = json.loads((pipeline_dir["out"] / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["outputs"] == m2["outputs"]


def test_generate_different_seed_changes_digests(pipeline_dir, tmp_path):
    cfg = pipeline_dir["cfg"]
    out2 = tmp_path / "other"
    _run(["generate", "--config", cfg, "--seed", "12", "--out", str(out2)])
    m1 = json.loads((pipeline_dir["out"] / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["outputs"]["ensemble"] != m2["outputs"]["ensemble"]


def test_precompute_manifest_and_reproducibility(pipeline_dir, tmp_path):
    out = pipeline_dir["out"]
    cfg = pipeline_dir["cfg"]
    manifest = json.loads((out / "store.bin.manifest.json").read_text())
    assert manifest["cells"] == 480
    assert manifest["particles"] == 150
    assert manifest["thin_stride"] == 10  # 1500 draws thinned to 150

    again = tmp_path / "store2.bin"
    _run(["precompute", "--grid", cfg, "--ensemble", str(out / "ensemble.bin"),
          "--weights", str(out / "weights.bin"), "--out", str(again),
          "--particles", "150", "--seed", "11"])
    m2 = json.loads((str(again) + ".manifest.json" and Path(str(again) + ".manifest.json")).read_text())
    assert manifest["outputs"]["store"] == m2["outputs"]["store"]


def test_precompute_default_particle_count_is_300():
    assert next(p for p in precompute_params() if p.name == "particles").default == 300


def precompute_params():
    from prevkit.cli import precompute as cmd
    return cmd.params


def test_query_json_equals_api_response(pipeline_dir):
    out = pipeline_dir["out"]
    args = ["query", "--store", str(out / "store.bin"), "--margins",
            str(out / "margins.csv"), "--disease", "diabetes", "--view", "age",
            "--filter", "smoking:1", "--filter", "region:Veneto",
            "--stratify", "education", "--scale", "per100k", "--json"]
    cli_payload = json.loads(_run(args).output)

    store = read_store(out / "store.bin")
    margins = read_margins_csv(out / "margins.csv", store.shape)
    client = TestClient(create_app(store, margins=margins))
    api_payload = client.get("/api/v1/prevalence", params={
        "disease": "diabetes", "view": "age",
        "f": ["smoking:1", "region:Veneto"], "stratify": "education",
        "scale": "per100k",
    }).json()
    assert cli_payload == api_payload


def test_query_table_output(pipeline_dir):
    out = pipeline_dir["out"]
    result = _run(["query", "--store", str(out / "store.bin"), "--disease",
                   "tumors", "--view", "year", "--table"])
    lines = result.output.splitlines()
    assert lines[0].split()[0] == "year"
    assert len(lines) == 1 + 5  # header + years 2010..2014


def test_query_full_conditioning_single_cell(pipeline_dir):
    out = pipeline_dir["out"]
    args = ["query", "--store", str(out / "store.bin"), "--disease", "tumors",
            "--view", "age", "--filter", "location:VE01", "--filter", "cohort:1956",
            "--filter", "age:53", "--filter", "sex:1", "--filter", "smoking:0",
            "--filter", "education:1", "--filter", "economic:0", "--json"]
    payload = json.loads(_run(args).output)
    assert payload["axis"] == [53]
    assert len(payload["series"]) == 1


def test_validate_passes_and_is_deterministic(pipeline_dir):
    out = pipeline_dir["out"]
    cfg = pipeline_dir["cfg"]
    report1 = out / "report1.json"
    report2 = out / "report2.json"
    for rp in (report1, report2):
        _run(["validate", "--config", cfg, "--store", str(out / "store.bin"),
              "--truth", str(out / "truth.json"), "--report", str(rp),
              "--pairs", "300", "--oracle-cells", "8"])
    r1 = json.loads(report1.read_text())
    r2 = json.loads(report2.read_text())
    assert r1["passed"] is True
    assert r1["coverage"] == r2["coverage"]
    assert r1["oracle"] == r2["oracle"]
    assert r1["oracle"]["max_prob_diff"] == 0.0
    assert r1["oracle"]["max_weight_diff"] == 0.0


def test_validate_skips_coverage_on_degenerate_run(tmp_path):
    cfg_text = Path(CONFIG).read_text()
    cfg_text = cfg_text.replace("dispersion = 0.05", "dispersion = 0")
    cfg_text = cfg_text.replace("gamma_scale = 0.5", "gamma_scale = 0")
    cfg_text = cfg_text.replace("b_draws = 3000", "b_draws = 50")
    cfg_text = cfg_text.replace("particles = 300", "particles = 25")
    cfg_text = cfg_text.replace("weight_replicates = 100", "weight_replicates = 1")
    cfg_text = cfg_text.replace("survey_n = 6000", "survey_n = 1000")
    cfg_text = cfg_text.replace(
        "kernel = 0.6:kernels/geodesic.txt, 0.4:kernels/pollution.txt",
        f"kernel = 0.6:{Path(CONFIG).parent}/kernels/geodesic.txt, "
        f"0.4:{Path(CONFIG).parent}/kernels/pollution.txt",
    )
    cfg = tmp_path / "degenerate.cfg"
    cfg.write_text(cfg_text)
    out = tmp_path / "run"
    _run(["generate", "--config", str(cfg), "--seed", "3", "--out", str(out)])
    _run(["precompute", "--grid", str(cfg), "--ensemble", str(out / "ensemble.bin"),
          "--weights", str(out / "weights.bin"), "--out", str(out / "store.bin"),
          "--particles", "25", "--seed", "3"])
    result = _run(["validate", "--config", str(cfg), "--store", str(out / "store.bin"),
                   "--truth", str(out / "truth.json"), "--report",
                   str(out / "report.json"), "--pairs", "50"])
    assert "skipped" in result.output
    report = json.loads((out / "report.json").read_text())
    assert report["coverage"]["skipped"] is True
    assert report["passed"] is True


def test_exit_code_3_on_bad_input(tmp_path):
    assert main(["generate", "--config", "/nonexistent.cfg", "--seed", "1",
                 "--out", str(tmp_path / "x")]) == 3
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("locations = A\n")  # missing required keys
    assert main(["generate", "--config", str(bad_cfg), "--seed", "1",
                 "--out", str(tmp_path / "y")]) == 3


def test_exit_code_4_on_corrupt_store(pipeline_dir, tmp_path):
    out = pipeline_dir["out"]
    blob = bytearray((out / "store.bin").read_bytes())
    blob[25] ^= 0xFF
    bad = tmp_path / "bad_store.bin"
    bad.write_bytes(bytes(blob))
    assert main(["query", "--store", str(bad), "--disease", "tumors"]) == 4


def test_exit_code_3_on_empty_subgroup(pipeline_dir):
    out = pipeline_dir["out"]
    code = main(["query", "--store", str(out / "store.bin"), "--disease", "tumors",
                 "--view", "year", "--filter", "cohort:1956", "--filter", "age:52"])
    assert code == 3
