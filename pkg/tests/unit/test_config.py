"""Unit tests for configuration management."""

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from dlf_distill.core.config import Settings, get_settings
from dlf_distill.models.config import (
    DesignStrategy,
    EmMode,
    ExperimentConfig,
    InitMethod,
    SynthConfig,
    SynthKind,
    load_config,
)
from dlf_distill.models.dataset import Task


class TestSettings:
    """Test configuration settings."""

    def test_default_settings(self) -> None:
        """Test default configuration values."""
        settings = Settings()

        assert settings.app_name == "dlf-distill"
        assert settings.app_version == "0.1.0"
        assert settings.app_env == "development"
        assert settings.log_level == "INFO"
        assert settings.output_dir == Path("runs")
        assert settings.concrete_csv is None

    def test_get_settings_returns_cached_instance(self) -> None:
        """Test that get_settings returns the same cached instance."""
        settings1 = get_settings()
        settings2 = get_settings()

        assert settings1 is settings2

    def test_environment_overrides(self, monkeypatch) -> None:
        """Test that DLF_ variables override defaults."""
        monkeypatch.setenv("DLF_OUTPUT_DIR", "/tmp/elsewhere")
        monkeypatch.setenv("DLF_DEFAULT_SEED", "7")

        settings = Settings()

        assert settings.output_dir == Path("/tmp/elsewhere")
        assert settings.default_seed == 7

    def test_settings_with_custom_values(self) -> None:
        """Test settings with custom values."""
        settings = Settings(app_env="production", debug=False, log_level="ERROR")

        assert settings.app_env == "production"
        assert settings.debug is False
        assert settings.log_level == "ERROR"


class TestExperimentConfig:
    """Test the experiment schema."""

    def test_defaults(self) -> None:
        """Test documented defaults for a synthetic regression run."""
        config = ExperimentConfig(synthetic=SynthConfig(kind=SynthKind.LINEAR_REGRESSION))

        assert config.task is Task.REGRESSION
        assert config.latent_dim == 10
        assert config.em.mode is EmMode.MINI_BATCH
        assert config.design.strategy is DesignStrategy.TEACHER_TRAIN
        assert config.pretrain.init is InitMethod.MMD
        assert config.seeds == [0]

    def test_classification_latent_default(self) -> None:
        """Test the classification latent dimension."""
        config = ExperimentConfig(task="classification", synthetic={"kind": "blobs"})

        assert config.latent_dim == 8

    def test_needs_exactly_one_data_source(self) -> None:
        """Test that data_path and synthetic are mutually exclusive and required."""
        with pytest.raises(ValidationError):
            ExperimentConfig()
        with pytest.raises(ValidationError):
            ExperimentConfig(data_path="x.csv", synthetic={"kind": "blobs"})

    def test_unknown_fields_are_rejected(self) -> None:
        """Test that typos in a section fail validation."""
        with pytest.raises(ValidationError):
            ExperimentConfig(synthetic={"kind": "blobs"}, em={"epoch": 3})

    def test_dotted_overrides(self, small_config) -> None:
        """Test field-by-field overrides and that None leaves a value alone."""
        config = small_config.with_overrides(
            **{"em.mode": "fullbatch", "student.latent_dim": 4, "design.ratio": None}
        )

        assert config.em.mode is EmMode.FULL_BATCH
        assert config.latent_dim == 4
        assert config.design.ratio == small_config.design.ratio
        assert small_config.em.mode is EmMode.MINI_BATCH

    def test_override_is_validated(self, small_config) -> None:
        """Test that an out-of-range override is refused."""
        with pytest.raises(ValidationError):
            small_config.with_overrides(**{"design.ratio": 1.5})

    def test_load_config(self, tmp_path) -> None:
        """Test reading a JSON config file."""
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps({"synthetic": {"kind": "dlf-gp", "params": {"m": 10}}, "seeds": [1, 2]}),
            encoding="utf-8",
        )

        config = load_config(path)

        assert config.synthetic.kind is SynthKind.DLF_GP
        assert config.synthetic.params == {"m": 10}
        assert config.seeds == [1, 2]
