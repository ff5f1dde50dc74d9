import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffm_l0.evaluation import (
    SelectionContext,
    SelectionMask,
    evaluate,
    predict_masked,
    predict_masked_batch,
    r_squared,
    sweep_mf,
    write_figure1,
    write_figure2,
    write_figure3,
)
from ffm_l0.expansion import build_index
from ffm_l0.solvers import TabuConfig


def test_predict_masked_by_hand():
    mask = SelectionMask(np.array([[1, 0], [1, 1], [0, 1]], dtype=np.int8))
    alpha = np.array([0.5, -1.0, 2.0])
    x = np.array([1, 1, 1])
    assert predict_masked(0.1, alpha, x, 0, mask) == pytest.approx(0.1 + 0.5 - 1.0)
    assert predict_masked(0.1, alpha, x, 1, mask) == pytest.approx(0.1 - 1.0 + 2.0)
    assert predict_masked(0.1, alpha, np.zeros(3), 1, mask) == pytest.approx(0.1)


def test_batch_matches_scalar(rng):
    S, G, n = 7, 3, 25
    mask = SelectionMask(rng.integers(0, 2, (S, G)).astype(np.int8))
    alpha, X, groups = rng.normal(size=S), rng.integers(0, 2, (n, S)), rng.integers(0, G, n)
    batch = predict_masked_batch(0.3, alpha, X, groups, mask)
    for i in range(n):
        assert batch[i] == pytest.approx(predict_masked(0.3, alpha, X[i], groups[i], mask), abs=1e-14)


def test_flat_round_trip(rng):
    q = rng.integers(0, 2, 12)
    mask = SelectionMask.from_flat(q, 3, 4)
    assert mask.q.shape == (4, 3)
    assert mask.q[1, 2] == q[2 * 4 + 1]
    assert mask.flat().tolist() == q.tolist()


def test_r_squared_cases():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    assert r_squared(y, y) == 1.0
    assert r_squared(y, np.full(4, y.mean())) == 0.0
    assert r_squared(y, np.zeros(4)) == pytest.approx(1 - 30 / 5)
    with pytest.raises(ValueError):
        r_squared(np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        r_squared(y, y[:3])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=30),
       st.floats(0.1, 10), st.floats(-10, 10), st.integers(0, 10**6))
def test_r_squared_affine_invariance(ys, scale, shift, seed):
    y = np.array(ys)
    if np.ptp(y) < 1e-3:
        return
    pred = y + np.ptp(y) * np.random.default_rng(seed).normal(size=len(y))
    assert r_squared(y * scale + shift, pred * scale + shift) == pytest.approx(r_squared(y, pred), rel=1e-9, abs=1e-9)


def test_evaluate_histogram_and_small_groups(rng):
    S, G = 6, 3
    mask = SelectionMask(rng.integers(0, 2, (S, G)).astype(np.int8))
    alpha = rng.normal(size=S)
    y_tr, y_te = rng.normal(size=20), rng.normal(size=9)
    g_tr = np.r_[np.zeros(10, int), np.ones(10, int)]  # group 2 absent from train
    g_te = np.r_[np.zeros(4, int), np.ones(4, int), [2]]  # group 2 has one test sample
    rep = evaluate(y_tr, y_tr + 0.1, g_tr, y_te, y_te * 0.5, g_te, mask, alpha)
    assert sum(rep.selection_histogram) == S
    assert sum(c * h for c, h in enumerate(rep.selection_histogram)) == mask.q.sum()
    assert rep.per_group[2].r2_train is None and rep.per_group[2].r2_test is None
    assert rep.per_group[0].n_test == 4
    assert [row[2] for row in rep.alpha_by_count] == mask.q.sum(axis=1).tolist()
    assert rep.to_dict()["alpha_by_count"][0] == [0, float(alpha[0]), int(mask.q[0].sum())]


def _toy_context(rng, n_features=5, n_train=40, n_test=15, G=2):
    index = build_index(n_features)
    S = index.size

    def design(n):
        x = rng.integers(0, 2, (n, n_features))
        from ffm_l0.expansion import expand
        return expand(x, index), np.eye(G, dtype=np.int8)[rng.integers(0, G, n)]

    Xtr, ptr = design(n_train)
    Xte, pte = design(n_test)
    alpha = rng.normal(scale=0.3, size=S)
    ytr = Xtr @ alpha + rng.normal(scale=0.1, size=n_train)
    yte = Xte @ alpha + rng.normal(scale=0.1, size=n_test)
    return SelectionContext(0.0, alpha, index, Xtr, ytr, ptr, Xte, yte, pte)


def test_full_mask_reproduces_unmasked_model(rng):
    ctx = _toy_context(rng)
    pred_tr, pred_te = ctx.predictions(SelectionMask.full(ctx.index.size, ctx.n_groups))
    np.testing.assert_allclose(pred_tr, ctx.w0 + ctx.X_train @ ctx.alpha, atol=1e-12)
    np.testing.assert_allclose(pred_te, ctx.w0 + ctx.X_test @ ctx.alpha, atol=1e-12)


def test_sweep_rows(rng):
    ctx = _toy_context(rng)
    rows = sweep_mf(ctx, [0, 3, ctx.index.size], TabuConfig(seed=1))
    assert [r.mf for r in rows] == [0, 3, 15]
    assert all(r.cardinality_ok for r in rows)
    empty = ctx.y_train - ctx.w0
    assert rows[0].r2_train == pytest.approx(r_squared(ctx.y_train, np.full_like(empty, ctx.w0)))
    assert rows[2].r2_train == pytest.approx(r_squared(ctx.y_train, ctx.X_train @ ctx.alpha))


def test_figure_writers(tmp_path, rng):
    ctx = _toy_context(rng)
    rows = sweep_mf(ctx, [2, 4], TabuConfig(seed=1))
    write_figure1(tmp_path / "f1.csv", rows)
    f1 = list(csv.DictReader((tmp_path / "f1.csv").open()))
    assert [int(r["mf"]) for r in f1] == [2, 4]
    assert float(f1[1]["r2_test"]) == rows[1].r2_test

    _, _, mask = ctx.select(4, TabuConfig(seed=1))
    write_figure2(tmp_path / "f2.csv", ctx, mask)
    f2 = list(csv.DictReader((tmp_path / "f2.csv").open()))
    assert len(f2) == len(ctx.y_train) + len(ctx.y_test)
    assert {r["split"] for r in f2} == {"train", "test"}

    write_figure3(tmp_path / "f3.csv", ctx.report(mask), ctx.index)
    f3 = list(csv.DictReader((tmp_path / "f3.csv").open()))
    assert len(f3) == ctx.index.size
    assert sum(int(r["n_groups_selected"]) for r in f3) == 4 * ctx.n_groups
