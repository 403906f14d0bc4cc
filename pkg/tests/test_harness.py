import json
import math
import os

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from harness.app import cli
from harness.config import (
    HarnessSettings,
    continuation_config,
    dump_config,
    load_config,
    make_sampler,
    parse_config,
    standard_config,
    validate_experiment,
    with_overrides,
)
from harness.runner import (
    ERRORS_COLUMNS,
    LEVELS_COLUMNS,
    QQ_COLUMNS,
    THETA_COLUMNS,
    WORK_COLUMNS,
    Manifest,
    compare_algorithms,
    diagnose,
    load_manifest,
    run_experiment,
)
from mlmc.records import RunRecord
from shared.errors import ConfigError, ManifestMismatchError
from shared.utils import read_json

SYNTHETIC = {
    "name": "synthetic-smoke",
    "sampler": {"name": "synthetic"},
    "algorithm": {"name": "cmlmc"},
    "tolerances": [0.05],
    "repetitions": 3,
    "base_seed": 100,
}

UNREACHABLE = {
    "name": "capped",
    "sampler": {"name": "synthetic"},
    "algorithm": {"name": "cmlmc", "cmlmc": {"max_levels": 2, "tol_max": 0.01}},
    "tolerances": [0.001],
    "repetitions": 1,
}


def with_fields(base, **fields):
    data = json.loads(json.dumps(base))
    data.update(fields)
    return data


def write_config(path, data):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f)
    return str(path)


@pytest.mark.parametrize("data, field_path", [
    (with_fields(SYNTHETIC, tolerances=[0.01, -1.0]), "tolerances.1"),
    (with_fields(SYNTHETIC, tolerances=[]), "tolerances"),
    (with_fields(SYNTHETIC, repetitions=0), "repetitions"),
    (with_fields(SYNTHETIC, bogus=1), "bogus"),
    (with_fields(SYNTHETIC, sampler={"name": "heston"}), "sampler.name"),
    ({k: v for k, v in SYNTHETIC.items() if k != "tolerances"}, "tolerances"),
    ([1, 2], "config"),
])
def test_parse_config_reports_field_path(data, field_path):
    """Test schema violations name the offending field"""
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert exc.value.field_path == field_path


def test_load_config_round_trip(tmp_path):
    cfg = parse_config(with_fields(SYNTHETIC, algorithm={"name": "smlmc", "smlmc": {"m_tilde": 10}}))
    path = tmp_path / "cfg.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(str(path)) == cfg


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"))


def test_continuation_config_uses_sampler_preset():
    cfg = parse_config({"sampler": {"name": "elliptic"}, "tolerances": [0.01]})
    sampler = make_sampler(cfg)
    cont = continuation_config(cfg, sampler, 0.01)
    assert cont.tol_max == 0.5
    assert cont.fit_levels == 3
    assert [lvl.mesh_size for lvl in cont.initial_hierarchy] == pytest.approx([0.25, 0.125, 0.0625])
    assert cont.rate_prior.mode() == pytest.approx((2.0, 3.5))


def test_continuation_config_overrides():
    cfg = parse_config({"sampler": {"name": "gbm"}, "tolerances": [0.2],
                        "algorithm": {"cmlmc": {"confidence": 0.95, "l_inc": 3}}})
    cont = continuation_config(cfg, make_sampler(cfg), 0.2)
    assert cont.tol_max == 0.2
    assert cont.l_inc == 3
    assert cont.c_alpha == pytest.approx(1.96, abs=1e-3)


def test_standard_config():
    cfg = parse_config({"sampler": {"name": "gbm"}, "tolerances": [0.01],
                        "algorithm": {"name": "smlmc", "smlmc": {"m_tilde": 10, "theta": 0.4}}})
    std = standard_config(cfg, 0.01)
    assert (std.m_tilde, std.theta, std.c_alpha) == (10, 0.4, 2.0)


def test_validate_experiment_errors():
    bad_levels = with_fields(SYNTHETIC, algorithm={"name": "cmlmc", "cmlmc": {"initial_hierarchy": [
        {"mesh_size": 1.0, "samples": 10}, {"mesh_size": 0.3, "samples": 10}, {"mesh_size": 0.25, "samples": 10},
    ]}})
    with pytest.raises(ConfigError) as exc:
        validate_experiment(parse_config(bad_levels))
    assert exc.value.field_path == "initial_hierarchy.1.mesh_size"

    bad_schedule = with_fields(SYNTHETIC, algorithm={"name": "cmlmc", "cmlmc": {"r1": 1.05}})
    with pytest.raises(ConfigError) as exc:
        validate_experiment(parse_config(bad_schedule))
    assert exc.value.field_path.startswith("algorithm.cmlmc")

    with pytest.raises(ConfigError) as exc:
        validate_experiment(parse_config(with_fields(SYNTHETIC, sampler={"name": "gbm", "params": {"h0": 0.3}})))
    assert exc.value.field_path == "sampler.params"


def test_overrides_and_variant_labels():
    cfg = with_overrides(parse_config(SYNTHETIC), seed=5, reuse_samples=True)
    assert cfg.base_seed == 5
    assert cfg.reuse_samples
    assert cfg.variant_label() == "cmlmc-reuse"
    smlmc = parse_config(with_fields(SYNTHETIC, algorithm={"name": "smlmc", "smlmc": {"m_tilde": 10}}))
    assert smlmc.variant_label() == "smlmc-m10-t0.5-reuse"


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("MLMC_THREADS", "3")
    monkeypatch.setenv("MLMC_LOG_LEVEL", "DEBUG")
    settings = HarnessSettings()
    assert settings.threads == 3
    assert settings.log_level == "DEBUG"


def test_run_experiment_writes_outputs(tmp_path):
    out = str(tmp_path / "run")
    manifest = run_experiment(parse_config(SYNTHETIC), threads=1, out_dir=out)

    assert manifest.reference == pytest.approx(2.0)
    assert manifest.failed == 0
    assert len(manifest.runs) == 3
    assert [r.seed for r in manifest.runs] == [100, 101, 102]
    for rep in range(3):
        assert os.path.exists(os.path.join(out, "records", f"tol00_rep{rep:03d}.json"))
    assert os.path.exists(os.path.join(out, "summaries", "tol00.json"))
    assert os.path.exists(os.path.join(out, "metrics.prom"))

    for name, columns in (("errors.csv", ERRORS_COLUMNS), ("work.csv", WORK_COLUMNS), ("qq.csv", QQ_COLUMNS),
                          ("theta.csv", THETA_COLUMNS), ("levels.csv", LEVELS_COLUMNS)):
        table = pd.read_csv(os.path.join(out, name))
        assert list(table.columns) == columns
    assert len(pd.read_csv(os.path.join(out, "errors.csv"))) == 3

    stored = load_manifest(out)
    assert stored.config_hash == manifest.config_hash
    assert stored.runs[0].record_sha256 is not None


def test_run_experiment_is_deterministic_across_threads(tmp_path):
    """Record payloads do not depend on the number of worker threads"""
    cfg = parse_config(SYNTHETIC)
    one = run_experiment(cfg, threads=1, out_dir=str(tmp_path / "one"))
    many = run_experiment(cfg, threads=3, out_dir=str(tmp_path / "many"))

    assert one.config_hash == many.config_hash
    for a, b in zip(one.runs, many.runs):
        rec_a = RunRecord.model_validate(read_json(os.path.join(one.output_dir, a.record)))
        rec_b = RunRecord.model_validate(read_json(os.path.join(many.output_dir, b.record)))
        assert rec_a.deterministic_payload() == rec_b.deterministic_payload()


def test_failed_runs_are_recorded(tmp_path):
    manifest = run_experiment(parse_config(UNREACHABLE), out_dir=str(tmp_path / "capped"))
    assert manifest.failed == 1
    assert manifest.runs[0].status == "tolerance_unreachable"
    assert manifest.summaries == []
    assert pd.read_csv(os.path.join(manifest.output_dir, "errors.csv")).empty


def test_compare_algorithms(tmp_path):
    cmlmc = run_experiment(parse_config(with_fields(SYNTHETIC, repetitions=2)), out_dir=str(tmp_path / "c"))
    smlmc_cfg = with_fields(SYNTHETIC, repetitions=2, algorithm={"name": "smlmc"})
    smlmc = run_experiment(parse_config(smlmc_cfg), out_dir=str(tmp_path / "s"))

    table = compare_algorithms([cmlmc, smlmc])
    assert list(table["variant"]) == ["cmlmc", "smlmc-m25-t0.5-reuse"]
    assert table.loc[0, "normalized_median"] == pytest.approx(1.0)
    assert (table["p5_work"] <= table["p95_work"]).all()


def test_compare_rejects_mismatched_grids():
    base = dict(name="a", variant="cmlmc", algorithm="cmlmc", sampler="gbm", config_hash="x", config={},
                tolerances=[0.01], repetitions=1, base_seed=0, reference=1.0, output_dir=".")
    other = dict(base, variant="smlmc", algorithm="smlmc", tolerances=[0.02])
    with pytest.raises(ManifestMismatchError):
        compare_algorithms([Manifest(**base), Manifest(**other)])


def test_diagnose_from_records(tmp_path):
    manifest = run_experiment(parse_config(SYNTHETIC), out_dir=str(tmp_path / "run"))
    written = diagnose(manifest)
    assert any(path.endswith("accuracy.csv") for path in written)
    accuracy = pd.read_csv(os.path.join(manifest.output_dir, "diagnostics", "accuracy.csv"))
    assert {"level", "variance", "qw_factor"} <= set(accuracy.columns)
    assert not accuracy.empty


def test_cli_validate(tmp_path):
    runner = CliRunner()
    good = write_config(tmp_path / "good.yaml", SYNTHETIC)
    result = runner.invoke(cli, ["validate", "--config", good])
    assert result.exit_code == 0

    bad = write_config(tmp_path / "bad.yaml", with_fields(SYNTHETIC, tolerances=[0.01, -1.0]))
    result = runner.invoke(cli, ["validate", "--config", bad])
    assert result.exit_code == 1
    assert "tolerances.1" in result.output


def test_cli_run_compare_and_diag(tmp_path):
    runner = CliRunner()
    config = write_config(tmp_path / "cmlmc.yaml", with_fields(SYNTHETIC, repetitions=2))
    out_c = str(tmp_path / "c")
    result = runner.invoke(cli, ["run", "--config", config, "--out", out_c, "--threads", "2"])
    assert result.exit_code == 0, result.output
    assert os.path.exists(os.path.join(out_c, "manifest.json"))

    out_r = str(tmp_path / "r")
    result = runner.invoke(cli, ["run", "--config", config, "--out", out_r, "--reuse-samples", "true"])
    assert result.exit_code == 0, result.output
    assert load_manifest(out_r).variant == "cmlmc-reuse"

    result = runner.invoke(cli, ["compare", out_c, out_r, "--out", str(tmp_path / "cmp")])
    assert result.exit_code == 0, result.output
    assert os.path.exists(tmp_path / "cmp" / "comparison.csv")

    result = runner.invoke(cli, ["diag", out_c])
    assert result.exit_code == 0, result.output


def test_cli_run_reports_failed_runs(tmp_path):
    config = write_config(tmp_path / "capped.yaml", UNREACHABLE)
    result = CliRunner().invoke(cli, ["run", "--config", config, "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_complexity_fit_across_tolerance_grid(tmp_path):
    cfg = parse_config(with_fields(SYNTHETIC, tolerances=[0.05, 0.025, 0.0125], repetitions=2))
    manifest = run_experiment(cfg, out_dir=str(tmp_path / "grid"))

    assert manifest.complexity is not None
    assert manifest.complexity.s2 == pytest.approx(2.0)
    assert math.isfinite(manifest.complexity.s1_hat)
    assert load_manifest(manifest.output_dir).complexity == manifest.complexity
    for path in manifest.summaries:
        stored = read_json(os.path.join(manifest.output_dir, path))
        assert stored["fitted_complexity"][0] == pytest.approx(manifest.complexity.s1_hat)

    written = diagnose(manifest)
    assert any(path.endswith("complexity.json") for path in written)
    refit = read_json(os.path.join(manifest.output_dir, "diagnostics", "complexity.json"))
    assert refit["s1_hat"] == pytest.approx(manifest.complexity.s1_hat)


def test_single_tolerance_has_no_complexity_fit(tmp_path):
    manifest = run_experiment(parse_config(SYNTHETIC), out_dir=str(tmp_path / "run"))
    assert manifest.complexity is None
    stored = read_json(os.path.join(manifest.output_dir, manifest.summaries[0]))
    assert stored["fitted_complexity"] is None
