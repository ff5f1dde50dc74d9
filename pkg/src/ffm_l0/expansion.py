"""Expanded features: first-order features and all pairwise cross terms on one axis.

With 0-based indices, ``s < D`` is feature ``s`` itself and ``s >= D`` enumerates
pairs ``l1 < l2`` lexicographically: (0, 1) -> D, (0, 2) -> D + 1, ...,
(D - 2, D - 1) -> D (D + 1) / 2 - 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ffm import FfmParams


@dataclass(frozen=True)
class ExpandedIndex:
    n_features: int
    first: np.ndarray  # (S,) l1, or the feature itself for s < D
    second: np.ndarray  # (S,) l2, or -1 for s < D

    @property
    def size(self) -> int:
        return len(self.first)

    @property
    def n_cross(self) -> int:
        return self.size - self.n_features

    def pair_of(self, s: int) -> tuple[int, int]:
        if not self.n_features <= s < self.size:
            raise IndexError(f"{s} is not a cross-term index")
        return int(self.first[s]), int(self.second[s])

    def index_of(self, l1: int, l2: int | None = None) -> int:
        d = self.n_features
        if l2 is None:
            if not 0 <= l1 < d:
                raise IndexError(l1)
            return l1
        if l1 > l2:
            l1, l2 = l2, l1
        if l1 == l2 or l1 < 0 or l2 >= d:
            raise IndexError((l1, l2))
        return d + l1 * d - l1 * (l1 + 1) // 2 + (l2 - l1 - 1)

    def is_same_field(self, field_of) -> np.ndarray:
        """True for cross terms whose two features share a field (identically zero on one-hot rows)."""
        field_of = np.asarray(field_of)
        out = np.zeros(self.size, dtype=bool)
        cross = self.second >= 0
        out[cross] = field_of[self.first[cross]] == field_of[self.second[cross]]
        return out


def build_index(n_features: int) -> ExpandedIndex:
    if n_features < 2:
        raise ValueError("need at least two features")
    l1, l2 = np.triu_indices(n_features, k=1)  # row-major, i.e. lexicographic
    first = np.concatenate([np.arange(n_features), l1])
    second = np.concatenate([np.full(n_features, -1), l2])
    return ExpandedIndex(n_features, first, second)


def expand_row(x_row, index: ExpandedIndex) -> np.ndarray:
    return expand(np.asarray(x_row)[None, :], index)[0]


def expand(x: np.ndarray, index: ExpandedIndex) -> np.ndarray:
    """Expanded design matrix, shape (n_samples, S)."""
    x = np.asarray(x)
    if x.shape[1] != index.n_features:
        raise ValueError(f"rows have {x.shape[1]} features, index expects {index.n_features}")
    d = index.n_features
    return np.hstack([x, x[:, index.first[d:]] * x[:, index.second[d:]]])


def extract_alpha(params: FfmParams, index: ExpandedIndex) -> np.ndarray:
    d = index.n_features
    pw = params.pair_weights()
    return np.concatenate([params.w, pw[index.first[d:], index.second[d:]]])


def write_alpha_csv(path, alpha: np.ndarray, index: ExpandedIndex) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["s", "l1", "l2", "alpha"])
        for s in range(index.size):
            l2 = "" if index.second[s] < 0 else int(index.second[s])
            out.writerow([s, int(index.first[s]), l2, repr(float(alpha[s]))])
