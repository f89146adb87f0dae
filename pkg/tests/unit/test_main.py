"""Unit tests for the command-line surface."""

import argparse
import json

import pytest

from dlf_distill.main import _experiment_config, _parse_param, build_parser, main
from dlf_distill.models.config import DesignStrategy, EmMode
from dlf_distill.models.dataset import Task


class TestParser:
    """Test argument parsing."""

    def test_command_is_required(self) -> None:
        """Test that running without a subcommand is a usage error."""
        with pytest.raises(SystemExit) as excinfo:
            main([])

        assert excinfo.value.code == 2

    def test_unknown_choice_is_usage_error(self, tmp_path) -> None:
        """Test that an invalid enum value exits with code 2."""
        with pytest.raises(SystemExit) as excinfo:
            main(["gen-synth", "--kind", "spirals", "--out", str(tmp_path / "x.csv")])

        assert excinfo.value.code == 2

    @pytest.mark.parametrize(
        ("text", "expected"),
        [("n=50", ("n", 50)), ("noise=0.2", ("noise", 0.2)), ("name=abc", ("name", "abc"))],
    )
    def test_parse_param(self, text, expected) -> None:
        """Test KEY=VALUE parsing with JSON values."""
        assert _parse_param(text) == expected

    def test_parse_param_needs_equals(self) -> None:
        """Test that a bare word is refused."""
        with pytest.raises(argparse.ArgumentTypeError):
            _parse_param("n50")

    def test_lambda_flag_maps_to_penalty(self) -> None:
        """Test the --lambda spelling."""
        args = build_parser().parse_args(
            ["run", "--lambda", "0.5", "--q", "4", "--seeds", "1", "2"]
        )

        assert args.penalty == 0.5
        assert args.q == 4
        assert args.seeds == [1, 2]


class TestExperimentConfig:
    """Test building a config from flags."""

    def test_flags_override_config_file(self, tmp_path) -> None:
        """Test that flags win over the JSON file and the CSV replaces synthetic data."""
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps({"synthetic": {"kind": "blobs"}, "em": {"mode": "minibatch"}}),
            encoding="utf-8",
        )
        args = build_parser().parse_args(
            [
                "run",
                "--config",
                str(config_path),
                "--em-mode",
                "fullbatch",
                "--design",
                "new-mixup",
                "--design-ratio",
                "0.5",
            ]
        )

        config = _experiment_config(args, tmp_path / "data.csv", Task.CLASSIFICATION)

        assert config.synthetic is None
        assert config.data_path == tmp_path / "data.csv"
        assert config.task is Task.CLASSIFICATION
        assert config.em.mode is EmMode.FULL_BATCH
        assert config.design.strategy is DesignStrategy.NEW_MIXUP
        assert config.design.ratio == 0.5


class TestExitCodes:
    """Test success and failure reporting."""

    def test_gen_synth_succeeds(self, tmp_path, capsys) -> None:
        """Test that gen-synth writes data and truth and returns 0."""
        out = tmp_path / "linear.csv"

        code = main(["gen-synth", "--kind", "linear-regression", "--param", "n=20", "--out", str(out)])

        assert code == 0
        assert out.exists()
        assert (tmp_path / "linear.truth.json").exists()
        assert "wrote 20 rows" in capsys.readouterr().out

    def test_missing_teachers_reports_stage(self, tmp_path, capsys) -> None:
        """Test that a failing stage returns 1 with a labelled message."""
        code = main(
            [
                "distill",
                "--teachers",
                str(tmp_path / "absent.json"),
                "--data",
                str(tmp_path / "absent.csv"),
                "--out",
                str(tmp_path / "student.json"),
            ]
        )

        assert code == 1
        assert "error: [load]" in capsys.readouterr().err

    def test_invalid_synth_params_report_stage(self, tmp_path, capsys) -> None:
        """Test that generator validation errors are reported, not raised."""
        code = main(
            ["gen-synth", "--kind", "blobs", "--param", "classes=1", "--out", str(tmp_path / "b.csv")]
        )

        assert code == 1
        assert "[gen-synth] InvalidParamsError" in capsys.readouterr().err
