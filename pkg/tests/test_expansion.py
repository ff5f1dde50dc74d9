import csv

import numpy as np
import pytest

from ffm_l0.expansion import build_index, expand, expand_row, extract_alpha, write_alpha_csv
from ffm_l0.ffm import FfmParams, predict

from .test_ffm import _fields, _random_params, _random_rows


def test_reference_index_bounds():
    idx = build_index(38)
    assert idx.size == 741 and idx.n_cross == 703
    # 1-based (1,2) -> 39 and (37,38) -> 741 become 0-based (0,1) -> 38 and (36,37) -> 740
    assert idx.index_of(0, 1) == 38
    assert idx.index_of(36, 37) == 740
    assert idx.pair_of(38) == (0, 1) and idx.pair_of(740) == (36, 37)


def test_small_index_by_hand():
    idx = build_index(3)
    assert [idx.pair_of(s) for s in (3, 4, 5)] == [(0, 1), (0, 2), (1, 2)]
    assert idx.index_of(2, 0) == 4
    with pytest.raises(ValueError):
        build_index(1)
    with pytest.raises(IndexError):
        idx.pair_of(2)


def test_index_round_trip():
    idx = build_index(38)
    for s in range(38, idx.size):
        assert idx.index_of(*idx.pair_of(s)) == s
    assert all(idx.index_of(l) == l for l in range(38))


def test_expand_row_counts(reference_split):
    enc = reference_split["enc_train"]
    idx = build_index(enc.n_features)
    X = expand(enc.x, idx)
    assert np.all(X.sum(axis=1) == 10 + 45)
    assert not expand_row(np.zeros(38, dtype=np.uint8), idx).any()


def test_same_field_cross_terms_vanish(reference_raw, reference_split):
    from ffm_l0.encoding import encode
    from ffm_l0.data import standardize

    full, _ = standardize(reference_raw, reference_split["stats"])
    enc = encode(full, reference_split["bins"])
    idx = build_index(enc.n_features)
    same = idx.is_same_field(enc.field_of)
    assert same.sum() == 9 * 6 + 1
    assert not expand(enc.x, idx)[:, same].any()


def test_zero_params_zero_alpha():
    idx = build_index(9)
    params = FfmParams(0.0, np.zeros(9), np.zeros((9, 3, 4)), _fields())
    assert not extract_alpha(params, idx).any()


def test_prediction_identity_random(rng):
    idx = build_index(9)
    for _ in range(20):
        params = _random_params(rng)
        alpha = extract_alpha(params, idx)
        for row in _random_rows(rng, 10):
            assert abs(params.w0 + alpha @ expand_row(row, idx) - predict(params, row)) < 1e-12


def test_alpha_csv(tmp_path, rng):
    idx = build_index(9)
    alpha = extract_alpha(_random_params(rng), idx)
    write_alpha_csv(tmp_path / "a.csv", alpha, idx)
    rows = list(csv.DictReader((tmp_path / "a.csv").open()))
    assert len(rows) == idx.size
    assert rows[0]["l2"] == "" and rows[9]["l1"] == "0" and rows[9]["l2"] == "1"
    assert float(rows[20]["alpha"]) == alpha[20]
