"""End-to-end run as file-handoff stages: train -> select -> sweep -> report.

Each stage re-derives the (cheap, deterministic) preprocessing from the
config and reads the artifacts of earlier stages from the output directory,
so ``select`` or ``sweep`` can be rerun with a new M_f without retraining.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import data as data_mod
from .encoding import encode, fit_bins, group_membership
from .evaluation import (
    SelectionContext,
    sweep_mf,
    write_figure1,
    write_figure2,
    write_figure3,
)
from .expansion import build_index, expand, extract_alpha, write_alpha_csv
from .ffm import (
    CvGrid,
    LrSchedule,
    TrainingDiverged,
    grid_search_cv,
    load_checkpoint,
    predict_batch,
    r2_score,
    save_checkpoint,
    train,
)
from .qubo import write_qubo
from .solvers import TabuConfig, derive_seed, verify_cardinality

log = logging.getLogger(__name__)

OUTPUT_ENV = "FFM_L0_OUTPUT_DIR"
# published test R^2 of the continuous-feature baselines, echoed as context only
BASELINE_CONTEXT = {"random_forest_test_r2": 0.4689, "elastic_net_test_r2": 0.4728}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "runs/default")


@dataclass
class PipelineConfig:
    data_path: str | None = None  # None -> bundled diabetes export
    seed: int = 0
    split_ratio: list[int] = field(default_factory=lambda: [3, 1])
    cv_grid: dict | None = None  # {"a1": [...], "a2": [...]}; None -> half-decade grid
    learning_rate: dict | None = None  # {"a1": x, "a2": y} skips the grid search
    epochs: int = 300
    k: int = 4
    focus_field: str = "age"
    mf: int = 80
    penalty: float = 10.0
    solver: str = "tabu"
    tabu: dict = field(default_factory=dict)  # tenure / max_iterations / restarts
    sweep_grid: list[int] = field(default_factory=lambda: list(range(10, 101, 10)))
    output_dir: str = field(default_factory=_default_output_dir)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        cfg = cls(**payload)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self) -> None:
        problems = []
        if self.seed < 0:
            problems.append("seed must be >= 0")
        if len(self.split_ratio) != 2 or min(self.split_ratio) <= 0:
            problems.append("split_ratio must be two positive integers")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if self.k < 1:
            problems.append("k must be >= 1")
        if self.mf < 0:
            problems.append("mf must be >= 0")
        if not self.penalty > 0:
            problems.append("penalty must be positive")
        if self.solver not in ("tabu", "sa"):
            problems.append(f"solver must be 'tabu' or 'sa', got {self.solver!r}")
        bad_tabu = set(self.tabu) - {"tenure", "max_iterations", "restarts"}
        if bad_tabu:
            problems.append(f"unknown tabu keys: {sorted(bad_tabu)}")
        if any(int(v) < 1 for v in self.tabu.values()):
            problems.append("tabu settings must be >= 1")
        if any(m < 0 for m in self.sweep_grid):
            problems.append("sweep_grid entries must be >= 0")
        if self.learning_rate is not None:
            try:
                LrSchedule(self.learning_rate["a1"], self.learning_rate["a2"])
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"learning_rate invalid: {exc}")
        if self.cv_grid is not None:
            try:
                CvGrid(list(self.cv_grid["a1"]), list(self.cv_grid["a2"]))
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"cv_grid invalid: {exc}")
        if problems:
            raise ValueError("; ".join(problems))

    def resolved_data_path(self) -> Path:
        return Path(self.data_path) if self.data_path else data_mod.default_data_path()

    def tabu_config(self, mf: int) -> TabuConfig:
        return TabuConfig(
            tenure=self.tabu.get("tenure"),
            max_iterations=self.tabu.get("max_iterations"),
            restarts=int(self.tabu.get("restarts", 5)),
            seed=derive_seed(self.seed, mf),
        )

    def echo(self) -> dict:
        """Config as recorded in report.json (output location excluded)."""
        out = asdict(self)
        out.pop("output_dir")
        out["data_path"] = str(self.resolved_data_path().name if self.data_path is None
                               else self.data_path)
        return out


@dataclass
class Prepared:
    raw: data_mod.RawDataset
    split: data_mod.SplitSpec
    stats: data_mod.StandardizationStats
    train: data_mod.RawDataset
    test: data_mod.RawDataset
    bins: object
    enc_train: object
    enc_test: object
    folds: list[np.ndarray]  # positions within the train split
    data_sha256: str


def prepare(config: PipelineConfig) -> Prepared:
    path = config.resolved_data_path()
    try:
        raw = data_mod.load_dataset(path)
        split = data_mod.make_split(raw.n_samples, config.seed, tuple(config.split_ratio))
        train_std, stats = data_mod.standardize(raw.subset(split.train_indices))
        test_std, _ = data_mod.standardize(raw.subset(split.test_indices), stats)
    except data_mod.DataError as exc:
        raise PipelineError("ingest", str(exc)) from exc
    try:
        bins = fit_bins(train_std)
        enc_train = encode(train_std, bins)
        enc_test = encode(test_std, bins)
    except data_mod.DataError as exc:
        raise PipelineError("encode", str(exc)) from exc
    position = np.empty(raw.n_samples, dtype=np.int64)
    position[split.train_indices] = np.arange(len(split.train_indices))
    folds = [position[f] for f in split.folds]
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return Prepared(raw, split, stats, train_std, test_std, bins, enc_train, enc_test,
                    folds, digest)


def _out(config: PipelineConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, stage: str, producer: str) -> Path:
    if not path.is_file():
        raise PipelineError(stage, f"missing upstream artifact {path.name} (run `{producer}` first)")
    return path


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def stage_train(config: PipelineConfig, prepared: Prepared | None = None) -> dict:
    """Grid-search the learning-rate schedule, train on the full train split, checkpoint."""
    config.validate()
    prep = prepared or prepare(config)
    out = _out(config)
    y = prep.train.target
    cv_scores = None
    if config.learning_rate is not None:
        a1, a2 = config.learning_rate["a1"], config.learning_rate["a2"]
    else:
        grid = CvGrid(list(config.cv_grid["a1"]), list(config.cv_grid["a2"])) if config.cv_grid else CvGrid()
        (a1, a2), scores = grid_search_cv(prep.enc_train, y, prep.folds, grid, config.seed,
                                          config.epochs, config.k)
        cv_scores = [[p[0], p[1], s if np.isfinite(s) else None] for p, s in scores.items()]
        log.info("grid search picked a1=%g a2=%g", a1, a2)
    try:
        result = train(prep.enc_train, y, LrSchedule(a1, a2, config.epochs), config.seed, config.k)
    except TrainingDiverged as exc:
        raise PipelineError("train", str(exc)) from exc
    summary = {
        "r2_train": r2_score(y, predict_batch(result.params, prep.enc_train.x)),
        "r2_test": r2_score(prep.test.target, predict_batch(result.params, prep.enc_test.x)),
        "a1": a1,
        "a2": a2,
        "cv_scores": cv_scores,
        "n_parameters": list(result.params.n_parameters()),
    }
    save_checkpoint(out / "model.json", result, {
        "data_sha256": prep.data_sha256,
        "split_seed": config.seed,
        "split_ratio": list(config.split_ratio),
        "field_names": prep.enc_train.field_names,
        "summary": summary,
    })
    prep.bins.to_json(out / "bins.json")
    return summary


def _context(config: PipelineConfig, prep: Prepared, stage: str):
    out = Path(config.output_dir)
    params, payload = load_checkpoint(_require(out / "model.json", stage, "train"))
    if payload.get("data_sha256") != prep.data_sha256 or payload.get("split_seed") != config.seed \
            or payload.get("split_ratio") != list(config.split_ratio):
        raise PipelineError(stage, "model.json was trained on different data, seed or split")
    return selection_context(config, prep, params, stage), payload


def selection_context(config: PipelineConfig, prep: Prepared, params,
                      stage: str = "select") -> SelectionContext:
    """Freeze trained FFM weights into the expanded linear form for both splits."""
    index = build_index(params.n_features)
    alpha = extract_alpha(params, index)
    try:
        p_train = group_membership(prep.enc_train, config.focus_field).p
        p_test = group_membership(prep.enc_test, config.focus_field).p
    except data_mod.DataError as exc:
        raise PipelineError(stage, str(exc)) from exc
    return SelectionContext(params.w0, alpha, index, expand(prep.enc_train.x, index),
                            prep.train.target, p_train, expand(prep.enc_test.x, index),
                            prep.test.target, p_test, config.penalty)


def _check_mf(config: PipelineConfig, n_expanded: int, mf_values) -> None:
    bad = [m for m in mf_values if not 0 <= m <= n_expanded]
    if bad:
        raise PipelineError("config", f"M_f values {bad} outside 0..{n_expanded}")


def _group_ranges(prep: Prepared, focus: int) -> list[list[float]]:
    """Raw-unit [min, max] of the focus column within each training group."""
    groups = np.argmax(group_membership(prep.enc_train, focus).p, axis=1)
    raw_col = prep.raw.features[prep.split.train_indices, focus]
    return [[float(raw_col[groups == g].min()), float(raw_col[groups == g].max())]
            if np.any(groups == g) else None for g in range(groups.max() + 1)]


def stage_select(config: PipelineConfig, mf: int | None = None,
                 prepared: Prepared | None = None) -> dict:
    """Build and solve the QUBO for one M_f; write mask, figure data and selection.json."""
    config.validate()
    mf = config.mf if mf is None else mf
    prep = prepared or prepare(config)
    ctx, _ = _context(config, prep, "select")
    _check_mf(config, ctx.index.size, [mf])
    out = _out(config)
    tabu = config.tabu_config(mf)
    problem, result, mask = ctx.select(mf, tabu, config.solver)
    write_qubo(out / f"qubo_mf{mf}.txt", problem,
               {"groups": ctx.n_groups, "expanded": ctx.index.size, "mf": mf,
                "penalty": config.penalty})
    check = verify_cardinality(result.best_q, ctx.n_groups, ctx.index.size, mf)
    report = ctx.report(mask)
    write_figure2(out / "figure2.csv", ctx, mask)
    write_figure3(out / "figure3.csv", report, ctx.index)
    write_alpha_csv(out / "alpha.csv", ctx.alpha, ctx.index)
    same_field = ctx.index.is_same_field(prep.enc_train.field_of)
    selection = {
        "mf": mf,
        "penalty": config.penalty,
        "solver": config.solver,
        "solver_config": tabu.resolved(ctx.index.size).to_dict(),
        "energy": result.best_energy,
        "iterations_used": result.iterations_used,
        "cardinality": {"counts": check.counts, "passed": check.passed},
        "structurally_zero_selected": [int(c) for c in mask.q[same_field].sum(axis=0)],
        "focus_field": config.focus_field,
        "group_ranges_raw": _group_ranges(prep, prep.enc_train.field_index(config.focus_field)),
        "eval": report.to_dict(),
    }
    _write_json(out / "mask.json", {"mf": mf, "q": mask.q.T.astype(int).tolist()})
    _write_json(out / "selection.json", selection)
    if not check.passed:
        log.warning("%s", check)
    return selection


def parse_mf_range(text: str) -> list[int]:
    """``"10:100:10"`` -> [10, 20, ..., 100] (inclusive); ``"40,80"`` -> [40, 80]."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1)
        start, stop, step = parts
        if step <= 0:
            raise ValueError("step must be positive")
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",") if p.strip()]


def stage_sweep(config: PipelineConfig, mf_values=None, prepared: Prepared | None = None) -> list:
    config.validate()
    mf_values = list(config.sweep_grid if mf_values is None else mf_values)
    prep = prepared or prepare(config)
    ctx, _ = _context(config, prep, "sweep")
    _check_mf(config, ctx.index.size, mf_values)
    rows = []
    for mf in mf_values:
        rows.extend(sweep_mf(ctx, [mf], config.tabu_config(mf), config.solver))
    out = _out(config)
    write_figure1(out / "figure1.csv", rows)
    _write_json(out / "sweep.json", [asdict(r) for r in rows])
    return rows


def manifest(config: PipelineConfig, n_expanded: int | None = None) -> dict:
    mfs = sorted({config.mf, *config.sweep_grid})
    out = {
        "config": asdict(config),
        "data_path": str(config.resolved_data_path()),
        "seeds": {
            "split": config.seed,
            "ffm_init_and_shuffle": config.seed,
            "grid_search": config.seed,
            "solver_by_mf": {str(m): config.tabu_config(m).seed for m in mfs},
        },
        "defaults": {
            "ffm_init_std": 0.01,
            "cv_grid": asdict(CvGrid()) if config.cv_grid is None else config.cv_grid,
            "folds": data_mod.N_FOLDS,
            "quantile_groups": 4,
        },
    }
    if n_expanded is not None:
        out["tabu_resolved_per_block"] = config.tabu_config(config.mf).resolved(n_expanded).to_dict()
    return out


def stage_report(config: PipelineConfig) -> dict:
    out = Path(config.output_dir)
    model = json.loads(_require(out / "model.json", "report", "train").read_text())
    selection = json.loads(_require(out / "selection.json", "report", "select").read_text())
    sweep_path = out / "sweep.json"
    sweep = json.loads(sweep_path.read_text()) if sweep_path.is_file() else None
    report = {
        "config": config.echo(),
        "ffm": model["summary"],
        "selection": selection,
        "sweep": sweep,
        "baselines_context": BASELINE_CONTEXT,
    }
    _write_json(out / "report.json", report)
    _write_json(out / "manifest.json", manifest(config, len(selection["eval"]["alpha_by_count"])))
    return report


def run_full(config: PipelineConfig) -> dict:
    """All stages in order, through the same file artifacts the subcommands use."""
    config.validate()
    prep = prepare(config)
    n_expanded = prep.enc_train.n_features * (prep.enc_train.n_features + 1) // 2
    _check_mf(config, n_expanded, [config.mf, *config.sweep_grid])
    stage_train(config, prep)
    stage_select(config, prepared=prep)
    stage_sweep(config, prepared=prep)
    return stage_report(config)
