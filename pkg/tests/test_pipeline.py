import csv
import hashlib
import json

import pytest

from ffm_l0 import cli, pipeline
from ffm_l0.pipeline import PipelineConfig, PipelineError, parse_mf_range

FAST = {
    "learning_rate": {"a1": 0.00316, "a2": 0.0316},
    "epochs": 20,
    "tabu": {"restarts": 1, "max_iterations": 2000},
    "sweep_grid": [10, 40],
}


def fast_config(out, **extra):
    return PipelineConfig.from_dict({**FAST, "output_dir": str(out), **extra})


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    pipeline.stage_train(fast_config(out))
    return out


def test_unknown_config_key():
    with pytest.raises(ValueError, match="unknown config keys"):
        PipelineConfig.from_dict({"mf": 80, "Mf": 80})


@pytest.mark.parametrize("bad", [{"epochs": -1}, {"k": 0}, {"penalty": 0}, {"solver": "qa"},
                                 {"split_ratio": [3]}, {"tabu": {"tenur": 3}},
                                 {"learning_rate": {"a1": 0.1}}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        PipelineConfig.from_dict(bad)


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(pipeline.OUTPUT_ENV, str(tmp_path / "envout"))
    assert PipelineConfig().output_dir == str(tmp_path / "envout")


def test_mf_above_expanded_size_fails_before_compute(tmp_path):
    with pytest.raises(PipelineError, match=r"\[config\].*800"):
        pipeline.run_full(fast_config(tmp_path, mf=800))
    assert not (tmp_path / "model.json").exists()


def test_parse_mf_range():
    assert parse_mf_range("10:100:10") == list(range(10, 101, 10))
    assert parse_mf_range("40,80") == [40, 80]
    assert parse_mf_range("3:5") == [3, 4, 5]
    with pytest.raises(ValueError):
        parse_mf_range("1:5:0")


def test_select_without_checkpoint_names_artifact(tmp_path):
    with pytest.raises(PipelineError, match="model.json"):
        pipeline.stage_select(fast_config(tmp_path))


def test_report_without_selection_names_artifact(trained_dir, tmp_path):
    (tmp_path / "model.json").write_bytes((trained_dir / "model.json").read_bytes())
    with pytest.raises(PipelineError, match="selection.json"):
        pipeline.stage_report(fast_config(tmp_path))


def test_checkpoint_seed_mismatch(trained_dir):
    with pytest.raises(PipelineError, match="different data, seed or split"):
        pipeline.stage_select(fast_config(trained_dir, seed=1))


def test_staged_rerun_reuses_checkpoint(trained_dir, capsys):
    before = _sha(trained_dir / "model.json")
    assert cli.main(["select", "--mf", "40", "--out", str(trained_dir), "--config",
                     str(_write_cfg(trained_dir))]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["mf"] == 40 and summary["cardinality"]["passed"]
    assert _sha(trained_dir / "model.json") == before
    mask = json.loads((trained_dir / "mask.json").read_text())
    assert [sum(row) for row in mask["q"]] == [40] * 4
    assert (trained_dir / "qubo_mf40.txt").is_file()


def _write_cfg(directory):
    path = directory / "fast.json"
    path.write_text(json.dumps(FAST))
    return path


def test_solve_qubo_on_export(trained_dir, tmp_path, capsys):
    if not (trained_dir / "qubo_mf40.txt").is_file():
        pipeline.stage_select(fast_config(trained_dir), mf=40)
    out = tmp_path / "res.json"
    code = cli.main(["solve-qubo", str(trained_dir / "qubo_mf40.txt"), "--blocks", "4",
                     "--restarts", "1", "--iterations", "2000", "--output", str(out)])
    assert code == 0
    result = json.loads(out.read_text())
    assert len(result["best_q"]) == 2964 and len(result["block_energies"]) == 4
    assert result["best_energy"] == pytest.approx(sum(result["block_energies"]), rel=1e-9)


def test_solve_qubo_small_file_brute(tmp_path, capsys):
    (tmp_path / "toy.qubo").write_text("0 0 -1\n1 1 -1\n0 1 3\n")
    assert cli.main(["solve-qubo", str(tmp_path / "toy.qubo"), "--solver", "brute"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["best_energy"] == -1.0 and result["best_q"] == [0, 1]


def test_sweep_subcommand_rows(trained_dir, capsys):
    assert cli.main(["sweep", "--mf", "10:100:10", "--out", str(trained_dir), "--config",
                     str(_write_cfg(trained_dir))]) == 0
    rows = list(csv.DictReader((trained_dir / "figure1.csv").open()))
    assert [int(r["mf"]) for r in rows] == list(range(10, 101, 10))
    assert len(json.loads(capsys.readouterr().out)) == 10


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert cli.main(["select", "--out", str(tmp_path / "empty")]) == 1
    assert "missing upstream artifact model.json" in capsys.readouterr().err
    assert cli.main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 1
    assert "[ingest]" in capsys.readouterr().err
    (tmp_path / "bad.json").write_text('{"colour": 1}')
    assert cli.main(["train", "--config", str(tmp_path / "bad.json")]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_run_full_equals_chained_stages(tmp_path):
    a, b = tmp_path / "full", tmp_path / "chained"
    report = pipeline.run_full(fast_config(a))
    cfg = fast_config(b)
    pipeline.stage_train(cfg)
    pipeline.stage_select(cfg)
    pipeline.stage_sweep(cfg)
    pipeline.stage_report(cfg)
    assert _sha(a / "report.json") == _sha(b / "report.json")
    for name in ("figure1.csv", "figure2.csv", "figure3.csv", "mask.json", "model.json"):
        assert _sha(a / name) == _sha(b / name), name
    assert report["selection"]["mf"] == 80
    assert len(report["selection"]["eval"]["per_group"]) == 4
    manifest = json.loads((a / "manifest.json").read_text())
    assert set(manifest["seeds"]["solver_by_mf"]) == {"10", "40", "80"}
