"""CLI subcommands driven through click's test runner."""

import json

import yaml
from click.testing import CliRunner

from thmbench.cli import main
from thmbench.storage import read_json

from conftest import FIXTURE_MONTH, fixture_config_dict


def write_config(tmp_path) -> str:
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(fixture_config_dict(tmp_path)))
    return str(path)


def invoke(*args):
    runner = CliRunner()
    result = runner.invoke(main, list(args), catch_exceptions=False)
    return result


def test_harvest_subcommand(tmp_path):
    config_path = write_config(tmp_path)
    result = invoke("harvest", "--config", config_path)
    assert result.exit_code == 0
    assert "harvested 3 papers" in result.output
    papers = read_json(tmp_path / "data" / FIXTURE_MONTH / "papers.json")
    assert len(papers) == 3


def test_build_then_layout_check_and_report(tmp_path):
    config_path = write_config(tmp_path)
    result = invoke("build", "--config", config_path)
    assert result.exit_code == 0
    assert f"{FIXTURE_MONTH}/gate: done" in result.output

    check = invoke("layout-check", "--config", config_path)
    assert check.exit_code == 0
    assert json.loads(check.output)["ok"] is True

    report = invoke("report", "--config", config_path)
    assert report.exit_code == 0
    composition = (tmp_path / "results" / "reports" / "composition.csv")
    assert composition.exists()
    assert "3,2,1" in composition.read_text()


def test_eval_subcommand_writes_results(tmp_path):
    config_path = write_config(tmp_path)
    invoke("build", "--config", config_path)
    result = invoke("eval", "--config", config_path,
                    "--month", FIXTURE_MONTH, "--model", "fixture-model",
                    "--seed", "42")
    assert result.exit_code == 0
    assert "accuracy=1.000" in result.output
    out = (tmp_path / "results" / FIXTURE_MONTH
           / f"accuracy_test_fixture-model_{FIXTURE_MONTH}_default.json")
    assert out.exists()
    payload = json.loads(out.read_text())
    assert payload["summary"]["all"] == payload["overall"]


def test_eval_resume_flag(tmp_path):
    config_path = write_config(tmp_path)
    invoke("build", "--config", config_path)
    first = invoke("eval", "--config", config_path, "--month", FIXTURE_MONTH,
                   "--model", "fixture-model", "--seed", "42")
    assert first.exit_code == 0
    again = invoke("eval", "--config", config_path, "--month", FIXTURE_MONTH,
                   "--model", "fixture-model", "--seed", "42", "--resume")
    assert again.exit_code == 0
    assert "accuracy=1.000" in again.output


def test_gate_subcommand_revalidates(tmp_path):
    config_path = write_config(tmp_path)
    invoke("build", "--config", config_path)
    result = invoke("gate", "--config", config_path)
    assert result.exit_code == 0
    assert "1/1 items kept" in result.output


def test_layout_check_fails_on_missing_month(tmp_path):
    config_path = write_config(tmp_path)
    result = invoke("layout-check", "--config", config_path,
                    "--month", "2031-12")
    assert result.exit_code == 1
