"""Shared test fixtures and configuration."""

import pytest

from dlf_distill.core.config import get_settings
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.config import ExperimentConfig, SynthConfig, SynthKind
from dlf_distill.models.dataset import Dataset
from dlf_distill.services.synth_service import gen_synth


@pytest.fixture(autouse=True)
def clear_settings_cache():
    """
    Clear the cached settings around every test.

    Tests that set ``DLF_*`` environment variables then see fresh values.
    """
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> SeededRng:
    """Seeded generator shared by a single test."""
    return SeededRng(0)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Isolated output directory, also exported as ``DLF_OUTPUT_DIR``."""
    out = tmp_path / "runs"
    monkeypatch.setenv("DLF_OUTPUT_DIR", str(out))
    get_settings.cache_clear()
    return out


@pytest.fixture
def linear_data() -> Dataset:
    """Small 1-D linear regression dataset."""
    return gen_synth(SynthKind.LINEAR_REGRESSION, {"n": 120}, seed=3).dataset


@pytest.fixture
def blobs_data() -> Dataset:
    """Small 3-class, 2-D blobs dataset."""
    return gen_synth(SynthKind.BLOBS, {"n": 300}, seed=3).dataset


@pytest.fixture
def small_config() -> ExperimentConfig:
    """Tiny regression experiment that runs in a few seconds."""
    return ExperimentConfig(
        synthetic=SynthConfig(kind=SynthKind.LINEAR_REGRESSION, params={"n": 80}),
        teacher={"hidden_layers": [16], "count": 3, "epochs": 15, "lr": 1e-2, "batch_size": 32},
        student={"hidden_layers": [8], "latent_dim": 2},
        pretrain={"epochs": 10, "lr": 1e-2},
        em={"batch_size": 16, "epochs": 5, "lr": 1e-2},
        seeds=[1],
    )


@pytest.fixture
def small_classification_config() -> ExperimentConfig:
    """Tiny 3-class blobs experiment."""
    return ExperimentConfig(
        task="classification",
        synthetic=SynthConfig(kind=SynthKind.BLOBS, params={"n": 150}),
        teacher={"hidden_layers": [16], "count": 3, "epochs": 15, "lr": 1e-2, "batch_size": 32},
        student={"hidden_layers": [8], "latent_dim": 2},
        pretrain={"epochs": 10, "lr": 1e-2},
        em={"batch_size": 16, "epochs": 5, "lr": 1e-2},
        seeds=[1],
    )
