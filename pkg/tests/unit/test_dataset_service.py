"""Unit tests for CSV ingestion and splitting."""

import numpy as np
import pytest

from dlf_distill.models.dataset import Dataset, Standardizer, Task
from dlf_distill.services.dataset_service import (
    EmptyFileError,
    MissingValueError,
    ParseError,
    TooFewRowsError,
    load_csv,
    load_points,
    save_csv,
    split,
)


def _write(tmp_path, text: str, name: str = "data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    """Test reading headed CSV files."""

    def test_three_rows(self, tmp_path) -> None:
        """Test features, targets and column names."""
        path = _write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")

        dataset = load_csv(path)

        assert len(dataset) == 3
        assert dataset.column_names == ["a", "b", "y"]
        np.testing.assert_array_equal(dataset.features, [[1, 2], [4, 5], [7, 8]])
        np.testing.assert_array_equal(dataset.targets, [3, 6, 9])

    def test_parse_error_reports_line(self, tmp_path) -> None:
        """Test that a non-numeric cell is located by line and column."""
        path = _write(tmp_path, "a,y\n1,2\nabc,3\n")

        with pytest.raises(ParseError) as excinfo:
            load_csv(path)

        assert excinfo.value.line == 3
        assert excinfo.value.column == "a"

    def test_header_only(self, tmp_path) -> None:
        """Test that a file with no data rows is refused."""
        with pytest.raises(EmptyFileError):
            load_csv(_write(tmp_path, "a,y\n"))

    def test_empty_file(self, tmp_path) -> None:
        """Test that an empty file is refused."""
        with pytest.raises(EmptyFileError):
            load_csv(_write(tmp_path, ""))

    def test_blank_cell(self, tmp_path) -> None:
        """Test that a missing value is refused."""
        with pytest.raises(MissingValueError):
            load_csv(_write(tmp_path, "a,y\n1,\n"))

    def test_classification_labels_must_be_integers(self, tmp_path) -> None:
        """Test that fractional labels are refused for classification."""
        with pytest.raises(ParseError):
            load_csv(_write(tmp_path, "a,y\n1,0\n2,1.5\n"), Task.CLASSIFICATION)

    def test_save_then_load(self, tmp_path, linear_data) -> None:
        """Test that a saved dataset reads back unchanged."""
        path = tmp_path / "linear.csv"

        save_csv(linear_data, path)
        loaded = load_csv(path)

        np.testing.assert_array_equal(loaded.features, linear_data.features)
        np.testing.assert_array_equal(loaded.targets, linear_data.targets)


class TestLoadPoints:
    """Test reading feature-only files."""

    def test_reads_matrix(self, tmp_path) -> None:
        """Test a small two-column file."""
        points = load_points(_write(tmp_path, "x0,x1\n0.5,1\n-2,3\n"))

        np.testing.assert_array_equal(points, [[0.5, 1.0], [-2.0, 3.0]])

    def test_parse_error(self, tmp_path) -> None:
        """Test that a bad cell is located."""
        with pytest.raises(ParseError) as excinfo:
            load_points(_write(tmp_path, "x0,x1\n1,2\n3,nope\n"))

        assert excinfo.value.line == 3
        assert excinfo.value.column == "x1"


class TestSplit:
    """Test seeded train/test splitting."""

    def test_ten_rows(self) -> None:
        """Test that 10 rows at ratio 0.9 split 9/1."""
        dataset = Dataset(features=np.arange(10.0)[:, None], targets=np.arange(10.0))

        train, test = split(dataset, 0.9, seed=0)

        assert (len(train), len(test)) == (9, 1)
        merged = np.sort(np.concatenate([train.targets, test.targets]))
        np.testing.assert_array_equal(merged, np.arange(10.0))

    def test_seed_is_reproducible(self, linear_data) -> None:
        """Test that the same seed gives the same split."""
        a, _ = split(linear_data, 0.5, seed=4)
        b, _ = split(linear_data, 0.5, seed=4)

        np.testing.assert_array_equal(a.targets, b.targets)

    def test_keeps_both_parts_non_empty(self) -> None:
        """Test that extreme ratios still leave one row on each side."""
        dataset = Dataset(features=np.zeros((3, 1)), targets=np.zeros(3))

        train, test = split(dataset, 0.01)

        assert (len(train), len(test)) == (1, 2)

    def test_too_few_rows(self) -> None:
        """Test that one row cannot be split."""
        with pytest.raises(TooFewRowsError):
            split(Dataset(features=np.zeros((1, 1)), targets=np.zeros(1)))


class TestStandardizer:
    """Test the z-score transform."""

    def test_fit_and_invert(self, linear_data) -> None:
        """Test that transformed features are standardized and invertible."""
        std = Standardizer.fit(linear_data.features, linear_data.targets)

        z = std.transform_features(linear_data.features)

        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(std.inverse_features(z), linear_data.features, atol=1e-12)
        np.testing.assert_allclose(
            std.inverse_targets(std.transform_targets(linear_data.targets)),
            linear_data.targets,
            atol=1e-12,
        )

    def test_constant_column_keeps_unit_scale(self) -> None:
        """Test that a constant feature is not divided by zero."""
        std = Standardizer.fit(np.ones((4, 1)))

        assert std.feature_scale[0] == 1.0
