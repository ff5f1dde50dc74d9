"""Dataset loading, standardization and the seeded train/test/fold split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

FEATURE_NAMES = ["age", "sex", "bmi", "bp", "s1", "s2", "s3", "s4", "s5", "s6"]
TARGET_NAME = "target"
MIN_SAMPLES = 8
N_FOLDS = 5


class DataError(ValueError):
    """Raised for malformed input files or degenerate data."""


@dataclass(frozen=True)
class RawDataset:
    feature_names: list[str]
    features: np.ndarray  # (n_samples, n_features)
    target: np.ndarray  # (n_samples,)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def subset(self, indices) -> "RawDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return RawDataset(list(self.feature_names), self.features[idx], self.target[idx])


@dataclass(frozen=True)
class StandardizationStats:
    """Per-column mean and population std; features first, target last."""

    mean: np.ndarray
    std: np.ndarray

    def inverse_target(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) * self.std[-1] + self.mean[-1]


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    train_indices: np.ndarray
    test_indices: np.ndarray
    folds: list[np.ndarray] = field(default_factory=list)


def default_data_path() -> Path:
    """Path of the bundled diabetes export (442 rows, raw units)."""
    return Path(str(resources.files("ffm_l0") / "data" / "diabetes.csv"))


def load_dataset(path) -> RawDataset:
    """Read a comma- or tab-delimited file with header ``age,sex,...,s6,target``.

    Column order is matched by name (case-insensitive), so a reordered
    header is accepted. Row numbers in error messages are 1-based data rows.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        delimiter = "\t" if header_line.count("\t") > header_line.count(",") else ","
        header = [h.strip().lower() for h in next(csv.reader([header_line], delimiter=delimiter))]
        expected = FEATURE_NAMES + [TARGET_NAME]
        if len(header) != len(expected):
            raise DataError(f"expected {len(expected)} columns, header has {len(header)}")
        missing = [name for name in expected if name not in header]
        if missing:
            raise DataError(f"header is missing columns: {missing}")
        order = [header.index(name) for name in expected]

        rows = []
        for row_no, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(expected):
                raise DataError(f"row {row_no}: expected {len(expected)} columns, found {len(row)}")
            values = []
            for col in order:
                cell = row[col].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"row {row_no}, column {header[col]!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(f"row {row_no}, column {header[col]!r}: non-finite value")
                values.append(value)
            rows.append(values)

    if len(rows) < MIN_SAMPLES:
        raise DataError(f"need at least {MIN_SAMPLES} rows, found {len(rows)}")
    table = np.array(rows, dtype=np.float64)
    return RawDataset(list(FEATURE_NAMES), table[:, :-1], table[:, -1])


def standardize(data: RawDataset, stats: StandardizationStats | None = None):
    """Return ``(standardized_data, stats)``.

    When ``stats`` is None they are computed from ``data`` (population std);
    otherwise the given stats are applied unchanged, as for a test split.
    """
    table = np.column_stack([data.features, data.target])
    if stats is None:
        mean = table.mean(axis=0)
        std = table.std(axis=0)
        names = data.feature_names + [TARGET_NAME]
        zero = [names[j] for j in np.flatnonzero(std <= 0.0)]
        if zero:
            raise DataError(f"zero-variance column(s): {zero}")
        stats = StandardizationStats(mean, std)
    scaled = (table - stats.mean) / stats.std
    return RawDataset(list(data.feature_names), scaled[:, :-1], scaled[:, -1]), stats


def make_split(n: int, seed: int, ratio: tuple[int, int] = (3, 1)) -> SplitSpec:
    """Seeded train/test split plus 5 round-robin CV folds over the train part.

    The train part is the first ``ceil(n * a / (a + b))`` entries of a seeded
    permutation for ``ratio = (a, b)``.
    """
    if n < MIN_SAMPLES:
        raise DataError(f"need n >= {MIN_SAMPLES}, got {n}")
    a, b = ratio
    if a <= 0 or b <= 0:
        raise DataError(f"split ratio parts must be positive, got {ratio}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = -(-a * n // (a + b))
    train = perm[:n_train]
    folds = [train[k::N_FOLDS] for k in range(N_FOLDS)]
    return SplitSpec(seed, train, perm[n_train:], folds)
