"""
Parancssori belépési pont és kilépési kódok
"""
import argparse

import pytest

import src.main as cli
from src.core.errors import AcceptanceError


def test_parser_alpha_list():
    args = cli.build_parser().parse_args(["flex", "--preset", "flex-k2", "--alpha", "0.1,0.3"])
    assert args.verb == "flex"
    assert args.alpha == [0.1, 0.3]


def test_parser_rejects_config_and_preset():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["stage", "--config", "a.yaml", "--preset", "flex-k2"])


def test_overrides_reach_config(tmp_path):
    args = argparse.Namespace(
        config=None, preset="flex-k2", out=str(tmp_path), seed=5,
        alpha=[0.1], threads=2, log_level="DEBUG"
    )
    config = cli.load_config(args)
    assert config.get('output.dir') == str(tmp_path)
    assert config.get('seed') == 5
    assert config.get('alpha') == [0.1]
    assert config.get('threads') == 2
    assert config.get('logging.level') == "DEBUG"


def test_export_writes_fields(tmp_path):
    code = cli.main(["export", "--preset", "ma-density-k1", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    assert (tmp_path / "config.yaml").exists()
    assert (tmp_path / "fields.grid" / "v.txt").exists()
    assert (tmp_path / "fields.csv").exists()


def test_missing_config_file(tmp_path):
    assert cli.main(["stage", "--config", str(tmp_path / "nincs.yaml")]) == cli.EXIT_ERROR


def test_empty_sweep_is_config_error(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("stage:\n  lambdas: []\n", encoding="utf-8")
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "out")]) == cli.EXIT_ERROR


def test_failed_acceptance_exit_code(tmp_path, monkeypatch):
    def failing(cfg, verb, out):
        raise AcceptanceError("Deficit ráta kívül esik")

    monkeypatch.setattr(cli, "run_experiment", failing)
    code = cli.main(["stage", "--out", str(tmp_path)])
    assert code == cli.EXIT_ASSERTION


def test_unwritable_output_is_input_error(tmp_path):
    blocker = tmp_path / "foglalt"
    blocker.write_text("", encoding="utf-8")
    code = cli.main(["export", "--preset", "ma-density-k1", "--out", str(blocker / "run")])
    assert code == cli.EXIT_INPUT


def test_corrupt_field_dump_is_input_error(tmp_path):
    dump = tmp_path / "prev" / "fields.grid"
    dump.mkdir(parents=True)
    (dump / "v.txt").write_text("8 8 0.125 0 0 2\nnem szám\n", encoding="utf-8")
    path = tmp_path / "verify.yaml"
    path.write_text(f"verify:\n  fields_dir: {tmp_path / 'prev'}\n", encoding="utf-8")

    code = cli.main(["verify", "--config", str(path), "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_INPUT


def test_malformed_yaml_is_config_error(tmp_path):
    path = tmp_path / "hibas.yaml"
    path.write_text("stage: [1, 2\n", encoding="utf-8")
    assert cli.main(["stage", "--config", str(path), "--out", str(tmp_path / "out")]) == cli.EXIT_ERROR


def test_config_directory_is_config_error(tmp_path):
    assert cli.main(["stage", "--config", str(tmp_path)]) == cli.EXIT_ERROR
