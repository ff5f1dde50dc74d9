"""Quartile categorization of quantitative columns and one-hot field encoding.

Every original column becomes a *field*; its categories become binary
features laid out field-major, group-minor. Indices are 0-based throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, RawDataset

N_QUANTILE_GROUPS = 4
BINARY_FEATURES = ("sex",)


@dataclass(frozen=True)
class FeatureBins:
    name: str
    kind: str  # "quantile" or "binary"
    edges: np.ndarray  # quantile: upper boundary of each lower group; binary: the two values
    train_counts: np.ndarray

    @property
    def n_groups(self) -> int:
        return len(self.edges) + 1 if self.kind == "quantile" else len(self.edges)

    def assign(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.kind == "quantile":
            # values <= edges[0] -> 0, values > edges[-1] -> last group
            return np.searchsorted(self.edges, values, side="left")
        groups = np.full(values.shape, -1, dtype=np.int64)
        for g, level in enumerate(self.edges):
            groups[values == level] = g
        if np.any(groups < 0):
            unseen = np.unique(values[groups < 0])
            raise DataError(f"unseen value(s) {unseen.tolist()} for binary feature {self.name!r}")
        return groups


@dataclass(frozen=True)
class QuartileBins:
    features: list[FeatureBins]

    @property
    def group_counts(self) -> list[int]:
        return [fb.n_groups for fb in self.features]

    def to_json(self, path) -> None:
        payload = {
            fb.name: {
                "kind": fb.kind,
                "boundaries": fb.edges.tolist(),
                "train_counts": fb.train_counts.tolist(),
            }
            for fb in self.features
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


@dataclass(frozen=True)
class EncodedDataset:
    x: np.ndarray  # (n_samples, D) uint8 one-hot per field
    field_of: np.ndarray  # (D,) field index of each feature
    group_of_feature: np.ndarray  # (D,) within-field group id
    field_names: list[str]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def n_fields(self) -> int:
        return len(self.field_names)

    def field_index(self, name_or_index) -> int:
        if isinstance(name_or_index, str):
            try:
                return self.field_names.index(name_or_index.lower())
            except ValueError:
                raise DataError(f"unknown field {name_or_index!r}") from None
        idx = int(name_or_index)
        if not 0 <= idx < self.n_fields:
            raise DataError(f"field index {idx} out of range 0..{self.n_fields - 1}")
        return idx

    def feature_label(self, l: int) -> str:
        return f"{self.field_names[self.field_of[l]]}={self.group_of_feature[l]}"

    def subset(self, indices) -> "EncodedDataset":
        return EncodedDataset(self.x[np.asarray(indices)], self.field_of,
                              self.group_of_feature, self.field_names)


@dataclass(frozen=True)
class GroupMembership:
    focus_field: int
    n_groups: int
    p: np.ndarray  # (n_samples, G) one-hot

    @property
    def group_ids(self) -> np.ndarray:
        return np.argmax(self.p, axis=1)


def fit_bins(train: RawDataset, n_groups: int = N_QUANTILE_GROUPS,
             binary_features=BINARY_FEATURES) -> QuartileBins:
    """Fit equal-population rank blocks per quantitative column.

    Values are sorted ascending with a stable tie-break on sample order and
    the sorted positions are cut into ``n_groups`` contiguous blocks whose
    sizes differ by at most one. The boundary of a block is its largest value.
    """
    out = []
    n = train.n_samples
    for j, name in enumerate(train.feature_names):
        col = train.features[:, j]
        if name in binary_features:
            levels = np.unique(col)
            if len(levels) != 2:
                raise DataError(f"binary feature {name!r} has {len(levels)} distinct values, need 2")
            fb = FeatureBins(name, "binary", levels, np.zeros(2, dtype=np.int64))
        else:
            if n < n_groups:
                raise DataError(f"column {name!r}: need at least {n_groups} values")
            if np.all(col == col[0]):
                raise DataError(f"column {name!r} is constant; quartiles undefined")
            ordered = col[np.argsort(col, kind="stable")]
            block_ends = np.cumsum([len(b) for b in np.array_split(np.arange(n), n_groups)])
            edges = ordered[block_ends[:-1] - 1]
            fb = FeatureBins(name, "quantile", edges, np.zeros(n_groups, dtype=np.int64))
        counts = np.bincount(fb.assign(col), minlength=fb.n_groups)
        out.append(FeatureBins(fb.name, fb.kind, fb.edges, counts))
    return QuartileBins(out)


def encode(data: RawDataset, bins: QuartileBins) -> EncodedDataset:
    """One-hot encode ``data`` with previously fitted bins (no refit)."""
    names = [fb.name for fb in bins.features]
    if list(data.feature_names) != names:
        raise DataError(f"schema mismatch: {data.feature_names} vs fitted {names}")
    counts = bins.group_counts
    offsets = np.concatenate([[0], np.cumsum(counts)])
    x = np.zeros((data.n_samples, offsets[-1]), dtype=np.uint8)
    rows = np.arange(data.n_samples)
    for j, fb in enumerate(bins.features):
        x[rows, offsets[j] + fb.assign(data.features[:, j])] = 1
    field_of = np.repeat(np.arange(len(counts)), counts)
    group_of = np.concatenate([np.arange(c) for c in counts])
    return EncodedDataset(x, field_of, group_of, names)


def group_membership(encoded: EncodedDataset, focus_field) -> GroupMembership:
    """Copy the one-hot block of ``focus_field`` out as the p matrix."""
    f = encoded.field_index(focus_field)
    cols = np.flatnonzero(encoded.field_of == f)
    return GroupMembership(f, len(cols), encoded.x[:, cols].astype(np.uint8))
