"""Dataset ingestion and train/test splitting."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd

from dlf_distill.core.errors import DistillError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.dataset import Dataset, Task

logger = get_logger(__name__)


class DatasetError(DistillError):
    """Base exception for dataset ingestion errors."""

    pass


class ParseError(DatasetError):
    """A cell could not be parsed as a number.

    ``line`` is the 1-based line number in the file (the header is line 1).
    """

    def __init__(self, line: int, column: str, value: str) -> None:
        self.line = line
        self.column = column
        self.value = value
        super().__init__(f"line {line}, column {column!r}: cannot parse {value!r} as a number")


class MissingValueError(DatasetError):
    """A cell is empty."""

    pass


class EmptyFileError(DatasetError):
    """The file has no data rows."""

    pass


class TooFewRowsError(DatasetError):
    """Not enough rows to split."""

    pass


def load_csv(path: Path, task: Task = Task.REGRESSION) -> Dataset:
    """
    Read a headed CSV whose last column is the target.

    Args:
        path: CSV file with a header row
        task: classification targets must be integers in ``[0, c)``

    Returns:
        Dataset with float64 features

    Raises:
        EmptyFileError: If the file is empty or has only a header
        MissingValueError: If any cell is blank
        ParseError: If a cell is not numeric
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise EmptyFileError(f"{path} is empty") from exc
    if frame.empty or frame.shape[1] < 2:
        raise EmptyFileError(f"{path} has no data rows or fewer than two columns")

    values = np.empty(frame.shape, dtype=np.float64)
    for col_idx, column in enumerate(frame.columns):
        cells = frame[column].str.strip()
        blank = cells == ""
        if blank.any():
            row = int(np.flatnonzero(blank.to_numpy())[0])
            raise MissingValueError(f"line {row + 2}, column {column!r} is empty")
        parsed = pd.to_numeric(cells, errors="coerce")
        bad = parsed.isna() | ~np.isfinite(parsed.to_numpy(dtype=np.float64))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(line=row + 2, column=str(column), value=str(cells.iloc[row]))
        values[:, col_idx] = parsed.to_numpy(dtype=np.float64)

    targets = values[:, -1]
    if task is Task.CLASSIFICATION:
        non_integral = (targets != np.round(targets)) | (targets < 0)
        if non_integral.any():
            row = int(np.flatnonzero(non_integral)[0])
            raise ParseError(
                line=row + 2, column=str(frame.columns[-1]), value=str(frame.iloc[row, -1])
            )

    dataset = Dataset(
        features=values[:, :-1],
        targets=targets,
        column_names=[str(c) for c in frame.columns],
        task=task,
    )
    logger.info("Dataset loaded", path=str(path), rows=len(dataset), dim=dataset.dim)
    return dataset


def save_csv(dataset: Dataset, path: Path) -> None:
    """Write a dataset in the same layout ``load_csv`` reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.features, columns=dataset.column_names[:-1])
    frame[dataset.column_names[-1]] = dataset.targets
    frame.to_csv(path, index=False, float_format="%.17g")


def split(dataset: Dataset, ratio: float = 0.9, seed: int = 0) -> tuple[Dataset, Dataset]:
    """
    Seeded shuffle split into disjoint, exhaustive train and test parts.

    The train part has ``floor(ratio * n)`` rows, kept within ``[1, n - 1]``.
    """
    n = len(dataset)
    if n < 2:
        raise TooFewRowsError(f"need at least 2 rows to split, got {n}")
    n_train = min(max(math.floor(ratio * n), 1), n - 1)
    order = SeededRng(seed).permutation(n)
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


def load_points(path: Path) -> np.ndarray:
    """
    Read a headed CSV of features only, without a target column.

    Raises:
        EmptyFileError: If the file has no data rows
        MissingValueError: If any cell is blank
        ParseError: If a cell is not numeric
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise EmptyFileError(f"{path} is empty") from exc
    if frame.empty:
        raise EmptyFileError(f"{path} has no data rows")
    cells = frame.apply(lambda column: column.str.strip())
    blank = (cells == "").to_numpy()
    if blank.any():
        row, col = (int(i[0]) for i in np.nonzero(blank))
        raise MissingValueError(f"line {row + 2}, column {frame.columns[col]!r} is empty")
    parsed = cells.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(parsed)
    if bad.any():
        row, col = (int(i[0]) for i in np.nonzero(bad))
        raise ParseError(line=row + 2, column=str(frame.columns[col]), value=str(cells.iat[row, col]))
    return parsed
