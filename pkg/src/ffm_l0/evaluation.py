"""Masked prediction, overall and per-group R^2, and selection analyses."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .expansion import ExpandedIndex
from .qubo import QuboBuildInputs, build_qubo
from .solvers import TabuConfig, solve_joint, verify_cardinality


@dataclass(frozen=True)
class SelectionMask:
    q: np.ndarray  # (S, G) binary

    @classmethod
    def from_flat(cls, flat, n_groups: int, n_expanded: int) -> "SelectionMask":
        return cls(np.asarray(flat, dtype=np.int8).reshape(n_groups, n_expanded).T.copy())

    @classmethod
    def full(cls, n_expanded: int, n_groups: int) -> "SelectionMask":
        return cls(np.ones((n_expanded, n_groups), dtype=np.int8))

    @property
    def column_sums(self) -> list[int]:
        return [int(c) for c in self.q.sum(axis=0)]

    def flat(self) -> np.ndarray:
        return self.q.T.reshape(-1)


def predict_masked(w0: float, alpha, x_expanded_row, group: int, mask: SelectionMask) -> float:
    return float(w0 + np.sum(np.asarray(alpha) * np.asarray(x_expanded_row) * mask.q[:, group]))


def predict_masked_batch(w0: float, alpha, X, groups, mask: SelectionMask) -> np.ndarray:
    groups = np.asarray(groups)
    return w0 + np.einsum("ns,ns->n", np.asarray(X, dtype=np.float64) * alpha, mask.q.T[groups])


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("y_true and y_pred need equal, nonzero lengths")
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("R^2 is undefined for a constant target")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / ss_tot)


def _maybe_r2(y_true, y_pred):
    if len(y_true) < 2 or np.ptp(y_true) == 0:
        return None
    return r_squared(y_true, y_pred)


@dataclass
class GroupScore:
    group: int
    r2_train: float | None
    r2_test: float | None
    n_train: int
    n_test: int


@dataclass
class EvalReport:
    r2_train: float
    r2_test: float
    per_group: list[GroupScore]
    selection_histogram: list[int]
    alpha_by_count: list[tuple[int, float, int]] = field(repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["alpha_by_count"] = [list(row) for row in self.alpha_by_count]
        return out


def evaluate(y_train, pred_train, groups_train, y_test, pred_test, groups_test,
             mask: SelectionMask, alpha) -> EvalReport:
    """Per-group scores use each group's own mean as the null model; a group
    with fewer than two samples (or a constant target) gets ``None``."""
    groups_train = np.asarray(groups_train)
    groups_test = np.asarray(groups_test)
    y_train, y_test = np.asarray(y_train), np.asarray(y_test)
    n_groups = mask.q.shape[1]
    per_group = []
    for g in range(n_groups):
        tr = groups_train == g
        te = groups_test == g
        per_group.append(GroupScore(
            g,
            _maybe_r2(y_train[tr], np.asarray(pred_train)[tr]),
            _maybe_r2(y_test[te], np.asarray(pred_test)[te]),
            int(tr.sum()), int(te.sum()),
        ))
    counts = mask.q.sum(axis=1)
    histogram = np.bincount(counts, minlength=n_groups + 1)
    alpha_by_count = [(s, float(alpha[s]), int(counts[s])) for s in range(len(alpha))]
    return EvalReport(r_squared(y_train, pred_train), r_squared(y_test, pred_test),
                      per_group, [int(h) for h in histogram], alpha_by_count)


@dataclass
class SelectionContext:
    """Everything fixed across an M_f sweep: frozen FFM weights and both splits."""

    w0: float
    alpha: np.ndarray
    index: ExpandedIndex
    X_train: np.ndarray
    y_train: np.ndarray
    p_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    p_test: np.ndarray
    penalty: float = 10.0

    @property
    def n_groups(self) -> int:
        return self.p_train.shape[1]

    def build(self, mf: int):
        return build_qubo(QuboBuildInputs(self.y_train, self.w0, self.alpha, self.X_train,
                                          self.p_train, mf, self.penalty))

    def select(self, mf: int, config: TabuConfig = TabuConfig(), method: str = "tabu"):
        """Build and solve for one M_f; returns ``(problem, result, mask)``."""
        problem = self.build(mf)
        result = solve_joint(problem, self.n_groups, self.index.size, config, method)
        return problem, result, SelectionMask.from_flat(result.best_q, self.n_groups, self.index.size)

    def predictions(self, mask: SelectionMask):
        gtr = np.argmax(self.p_train, axis=1)
        gte = np.argmax(self.p_test, axis=1)
        return (predict_masked_batch(self.w0, self.alpha, self.X_train, gtr, mask),
                predict_masked_batch(self.w0, self.alpha, self.X_test, gte, mask))

    def report(self, mask: SelectionMask) -> EvalReport:
        pred_tr, pred_te = self.predictions(mask)
        return evaluate(self.y_train, pred_tr, np.argmax(self.p_train, axis=1),
                        self.y_test, pred_te, np.argmax(self.p_test, axis=1), mask, self.alpha)


@dataclass
class SweepRow:
    mf: int
    r2_train: float
    r2_test: float
    energy: float
    cardinality_ok: bool


def sweep_mf(context: SelectionContext, mf_values, config: TabuConfig = TabuConfig(),
             method: str = "tabu") -> list[SweepRow]:
    rows = []
    for mf in mf_values:
        _, result, mask = context.select(int(mf), config, method)
        pred_tr, pred_te = context.predictions(mask)
        ok = verify_cardinality(result.best_q, context.n_groups, context.index.size, int(mf)).passed
        rows.append(SweepRow(int(mf), r_squared(context.y_train, pred_tr),
                             r_squared(context.y_test, pred_te), result.best_energy, ok))
    return rows


def write_figure1(path, rows: list[SweepRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["mf", "r2_train", "r2_test"])
        for row in rows:
            out.writerow([row.mf, repr(row.r2_train), repr(row.r2_test)])


def write_figure2(path, context: SelectionContext, mask: SelectionMask) -> None:
    pred_tr, pred_te = context.predictions(mask)
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["split", "group", "y_true", "y_pred"])
        for split, y, pred, p in (("train", context.y_train, pred_tr, context.p_train),
                                  ("test", context.y_test, pred_te, context.p_test)):
            for yi, pi, g in zip(y.tolist(), pred.tolist(), np.argmax(p, axis=1).tolist()):
                out.writerow([split, g, repr(yi), repr(pi)])


def write_figure3(path, report: EvalReport, index: ExpandedIndex) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["s", "l1", "l2", "alpha", "n_groups_selected"])
        for s, a, count in report.alpha_by_count:
            l2 = "" if index.second[s] < 0 else int(index.second[s])
            out.writerow([s, int(index.first[s]), l2, repr(a), count])
