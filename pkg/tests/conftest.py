import numpy as np
import pytest

from ffm_l0.data import default_data_path, load_dataset, make_split, standardize
from ffm_l0.encoding import encode, fit_bins


@pytest.fixture(scope="session")
def reference_raw():
    return load_dataset(default_data_path())


@pytest.fixture(scope="session")
def reference_split(reference_raw):
    """Seed-0 split, standardized with train stats, encoded with train bins."""
    split = make_split(reference_raw.n_samples, 0)
    train, stats = standardize(reference_raw.subset(split.train_indices))
    test, _ = standardize(reference_raw.subset(split.test_indices), stats)
    bins = fit_bins(train)
    return {
        "split": split,
        "stats": stats,
        "train": train,
        "test": test,
        "bins": bins,
        "enc_train": encode(train, bins),
        "enc_test": encode(test, bins),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_csv(path, header, rows, sep=","):
    lines = [sep.join(header)] + [sep.join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
