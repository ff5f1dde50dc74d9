"""Field-aware factorization machine on binary one-hot rows.

Prediction for a binary row ``x``::

    y_hat = w0 + sum_l w[l] x[l] + sum_{l1<l2} <v[l1, f(l2)], v[l2, f(l1)]> x[l1] x[l2]

Training is per-sample SGD on the squared residual with learning rate
``a1 * exp(-a2 * epoch)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .encoding import EncodedDataset

DEFAULT_K = 4
DEFAULT_EPOCHS = 300
INIT_SCALE = 0.01

_HALF_DECADES = [1e-4, 1e-4 * math.sqrt(10), 1e-3, 1e-3 * math.sqrt(10),
                 1e-2, 1e-2 * math.sqrt(10), 1e-1]
# optimum reported for the reference diabetes run
REFERENCE_A1 = 1e-3 * math.sqrt(10)
REFERENCE_A2 = 1e-2 * math.sqrt(10)


class TrainingDiverged(FloatingPointError):
    """SGD produced a non-finite parameter."""


@dataclass(frozen=True)
class FfmParams:
    w0: float
    w: np.ndarray  # (D,)
    v: np.ndarray  # (D, F, K)
    field_of: np.ndarray  # (D,)

    @property
    def n_features(self) -> int:
        return self.v.shape[0]

    @property
    def n_fields(self) -> int:
        return self.v.shape[1]

    @property
    def k(self) -> int:
        return self.v.shape[2]

    def n_parameters(self) -> tuple[int, int, int]:
        return 1, self.w.size, self.v.size

    def pair_weights(self) -> np.ndarray:
        """Symmetric (D, D) matrix of cross weights; the diagonal is meaningless."""
        a = self.v[:, self.field_of, :]  # a[l1, l2] = v[l1, f(l2)]
        return np.einsum("ijk,jik->ij", a, a)

    def to_dict(self) -> dict:
        return {
            "w0": float(self.w0),
            "w": self.w.tolist(),
            "v": self.v.tolist(),
            "K": self.k,
            "D": self.n_features,
            "F": self.n_fields,
            "field_of": self.field_of.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FfmParams":
        v = np.asarray(payload["v"], dtype=np.float64)
        if v.shape != (payload["D"], payload["F"], payload["K"]):
            raise ValueError(f"latent tensor shape {v.shape} disagrees with D/F/K")
        return cls(float(payload["w0"]), np.asarray(payload["w"], dtype=np.float64), v,
                   np.asarray(payload["field_of"], dtype=np.int64))


@dataclass(frozen=True)
class LrSchedule:
    a1: float
    a2: float
    total_epochs: int = DEFAULT_EPOCHS

    def __post_init__(self):
        if not self.a1 > 0 or not self.a2 >= 0:
            raise ValueError(f"need a1 > 0 and a2 >= 0, got a1={self.a1}, a2={self.a2}")
        if self.total_epochs < 0:
            raise ValueError("total_epochs must be >= 0")

    def eta(self, epoch):
        return self.a1 * np.exp(-self.a2 * np.asarray(epoch, dtype=np.float64))

    def etas(self) -> np.ndarray:
        return self.eta(np.arange(self.total_epochs))


@dataclass(frozen=True)
class CvGrid:
    a1_candidates: list[float] = field(default_factory=lambda: list(_HALF_DECADES))
    a2_candidates: list[float] = field(default_factory=lambda: list(_HALF_DECADES))

    def __post_init__(self):
        for name in ("a1_candidates", "a2_candidates"):
            vals = getattr(self, name)
            if not vals or any(not c > 0 for c in vals):
                raise ValueError(f"{name} must be non-empty and positive")

    def pairs(self):
        return itertools.product(sorted(self.a1_candidates), sorted(self.a2_candidates))


@dataclass
class TrainResult:
    params: FfmParams
    schedule: LrSchedule
    seed: int
    online_mse: np.ndarray  # mean squared pre-update error per epoch


def init_params(n_features: int, field_of, k: int = DEFAULT_K, rng=None) -> FfmParams:
    """Zero bias and linear weights, latent entries drawn from N(0, 0.01**2)."""
    field_of = np.asarray(field_of, dtype=np.int64)
    n_fields = int(field_of.max()) + 1
    rng = np.random.default_rng(rng)
    v = rng.normal(0.0, INIT_SCALE, size=(n_features, n_fields, k))
    return FfmParams(0.0, np.zeros(n_features), v, field_of)


def cross_weight(params: FfmParams, l1: int, l2: int) -> float:
    if l1 == l2:
        raise ValueError("cross weight needs two distinct features")
    f = params.field_of
    return float(params.v[l1, f[l2]] @ params.v[l2, f[l1]])


def predict(params: FfmParams, x_row) -> float:
    active = np.flatnonzero(np.asarray(x_row))
    y = params.w0 + params.w[active].sum()
    for i, l1 in enumerate(active):
        for l2 in active[i + 1:]:
            y += cross_weight(params, l1, l2)
    return float(y)


def predict_batch(params: FfmParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    pw = params.pair_weights()
    quad = np.einsum("ni,ij,nj->n", x, pw, x) - x**2 @ np.diag(pw)
    return params.w0 + x @ params.w + 0.5 * quad


def loss_gradient(params: FfmParams, x_row, y: float):
    """Gradient of the squared residual ``(y - y_hat)**2`` for one row.

    Returns ``(error, g_w0, g_w, g_v)``.
    """
    x_row = np.asarray(x_row, dtype=np.float64)
    f = params.field_of
    e = y - predict(params, x_row)
    g_w = -2.0 * e * x_row
    g_v = np.zeros_like(params.v)
    active = np.flatnonzero(x_row)
    for i, l1 in enumerate(active):
        for l2 in active[i + 1:]:
            xx = x_row[l1] * x_row[l2]
            g_v[l1, f[l2]] += -2.0 * e * xx * params.v[l2, f[l1]]
            g_v[l2, f[l1]] += -2.0 * e * xx * params.v[l1, f[l2]]
    return e, -2.0 * e, g_w, g_v


def sgd_step(params: FfmParams, x_row, y: float, eta: float) -> FfmParams:
    if not eta > 0:
        raise ValueError("eta must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        _, g0, gw, gv = loss_gradient(params, x_row, y)
        new = replace(params, w0=params.w0 - eta * g0, w=params.w - eta * gw, v=params.v - eta * gv)
    if not (math.isfinite(new.w0) and np.isfinite(new.w).all() and np.isfinite(new.v).all()):
        raise TrainingDiverged(f"non-finite parameter after SGD step with eta={eta}")
    return new


@numba.njit(cache=True, nogil=True)
def _sgd_epochs(indptr, indices, y, field_of, w0, w, v, etas, orders, mse_out, distinct_fields):
    """In-place SGD; returns ``(failing epoch or -1, w0)``.

    When every row has at most one active feature per field, each latent
    entry belongs to exactly one active pair, so updating in place equals the
    simultaneous update. Otherwise gradients are buffered first.
    """
    k_dim = v.shape[2]
    max_active = 0
    for i in range(len(indptr) - 1):
        max_active = max(max_active, indptr[i + 1] - indptr[i])
    delta = np.zeros((max_active, v.shape[1], k_dim))
    n = len(y)
    for ep in range(len(etas)):
        eta = etas[ep]
        sq = 0.0
        for t in range(n):
            i = orders[ep, t]
            lo = indptr[i]
            hi = indptr[i + 1]
            y_hat = w0
            for p in range(lo, hi):
                y_hat += w[indices[p]]
            for p in range(lo, hi):
                l1 = indices[p]
                f1 = field_of[l1]
                for q in range(p + 1, hi):
                    l2 = indices[q]
                    f2 = field_of[l2]
                    acc = 0.0
                    for k in range(k_dim):
                        acc += v[l1, f2, k] * v[l2, f1, k]
                    y_hat += acc
            e = y[i] - y_hat
            sq += e * e
            g = 2.0 * eta * e
            w0 += g
            if distinct_fields:
                for p in range(lo, hi):
                    l1 = indices[p]
                    f1 = field_of[l1]
                    w[l1] += g
                    for q in range(p + 1, hi):
                        l2 = indices[q]
                        f2 = field_of[l2]
                        for k in range(k_dim):
                            a = v[l1, f2, k]
                            b = v[l2, f1, k]
                            v[l1, f2, k] = a + g * b
                            v[l2, f1, k] = b + g * a
            else:
                delta[: hi - lo] = 0.0
                for p in range(lo, hi):
                    l1 = indices[p]
                    f1 = field_of[l1]
                    for q in range(p + 1, hi):
                        l2 = indices[q]
                        f2 = field_of[l2]
                        for k in range(k_dim):
                            delta[p - lo, f2, k] += g * v[l2, f1, k]
                            delta[q - lo, f1, k] += g * v[l1, f2, k]
                for p in range(lo, hi):
                    l1 = indices[p]
                    w[l1] += g
                    v[l1] += delta[p - lo]
            if not np.isfinite(w0):
                return ep, w0
        mse_out[ep] = sq / n
        if not np.isfinite(sq):
            return ep, w0
    return -1, w0


def _csr(x: np.ndarray):
    x = np.asarray(x)
    rows, cols = np.nonzero(x)
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("FFM rows must be binary")
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=x.shape[0]))])
    return indptr.astype(np.int64), cols.astype(np.int64)


def train(encoded: EncodedDataset, y, schedule: LrSchedule, seed: int,
          k: int = DEFAULT_K) -> TrainResult:
    """Seeded per-sample SGD. The seed drives initialization and every epoch's shuffle."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(y) != encoded.x.shape[0]:
        raise ValueError("encoded rows and targets are misaligned")
    rng = np.random.default_rng(seed)
    params = init_params(encoded.n_features, encoded.field_of, k, rng)
    n_epochs = schedule.total_epochs
    orders = np.empty((n_epochs, len(y)), dtype=np.int64)
    for ep in range(n_epochs):
        orders[ep] = rng.permutation(len(y))
    indptr, indices = _csr(encoded.x)
    row_fields = encoded.field_of[indices]
    same_row = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    distinct = len(np.unique(same_row * params.n_fields + row_fields)) == len(indices)
    w = params.w.copy()
    v = params.v.copy()
    mse = np.full(n_epochs, np.nan)
    with np.errstate(over="ignore", invalid="ignore"):
        failed, w0 = _sgd_epochs(indptr, indices, y, params.field_of, 0.0, w, v,
                                 schedule.etas(), orders, mse, distinct)
    if failed >= 0 or not (np.isfinite(w).all() and np.isfinite(v).all()):
        raise TrainingDiverged(
            f"SGD diverged in epoch {max(failed, 0)} (a1={schedule.a1:g}, a2={schedule.a2:g}, seed={seed})"
        )
    return TrainResult(FfmParams(float(w0), w, v, params.field_of), schedule, seed, mse)


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    return float(1.0 - np.sum((y_true - np.asarray(y_pred)) ** 2) / ss_tot)


def grid_search_cv(encoded: EncodedDataset, y, folds, grid: CvGrid, seed: int,
                   total_epochs: int = DEFAULT_EPOCHS, k: int = DEFAULT_K):
    """Pick ``(a1, a2)`` maximizing mean held-out R^2 over the folds.

    ``folds`` index rows of ``encoded``/``y``. A diverging pair scores -inf.
    Ties go to the smaller a1, then the smaller a2. Returns
    ``((a1, a2), scores)`` where ``scores`` maps each pair to its mean R^2.
    """
    y = np.asarray(y, dtype=np.float64)
    folds = [np.asarray(fd, dtype=np.int64) for fd in folds]
    scores = {}
    best, best_score = None, -np.inf
    for a1, a2 in grid.pairs():
        schedule = LrSchedule(a1, a2, total_epochs)
        fold_r2 = []
        for j, held in enumerate(folds):
            fit_idx = np.concatenate([fd for i, fd in enumerate(folds) if i != j])
            try:
                res = train(encoded.subset(fit_idx), y[fit_idx], schedule, seed, k)
            except TrainingDiverged:
                fold_r2 = [-np.inf]
                break
            pred = predict_batch(res.params, encoded.x[held])
            r2 = r2_score(y[held], pred)
            fold_r2.append(r2 if np.isfinite(r2) else -np.inf)
        score = float(np.mean(fold_r2))
        scores[(a1, a2)] = score
        if best is None or score > best_score:
            best, best_score = (a1, a2), score
    return best, scores


def save_checkpoint(path, result: TrainResult, extra: dict | None = None) -> None:
    payload = result.params.to_dict()
    payload["schedule"] = {"a1": result.schedule.a1, "a2": result.schedule.a2,
                           "total_epochs": result.schedule.total_epochs}
    payload["seed"] = result.seed
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload) + "\n")


def load_checkpoint(path) -> tuple[FfmParams, dict]:
    payload = json.loads(Path(path).read_text())
    return FfmParams.from_dict(payload), payload
