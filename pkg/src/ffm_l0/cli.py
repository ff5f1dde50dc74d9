"""Command line entry point: ``ffm-l0 {run,train,select,sweep,solve-qubo,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .data import DataError
from .qubo import QuboError, read_qubo, split_blocks
from .solvers import (
    TabuConfig,
    brute_force,
    simulated_annealing,
    solve_blocks,
    tabu_search,
)


def _add_common(p: argparse.ArgumentParser, mf_help: str = "features kept per group (M_f)"):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", help="dataset file (comma or tab delimited)")
    p.add_argument("--seed", type=int)
    p.add_argument("--mf", help=mf_help)
    p.add_argument("--field", help="focus field whose groups get separate selections")
    p.add_argument("--out", help=f"output directory (default ${pipeline.OUTPUT_ENV} or runs/default)")


def _config(args) -> pipeline.PipelineConfig:
    payload = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.data:
        payload["data_path"] = args.data
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.field:
        payload["focus_field"] = args.field
    if args.out:
        payload["output_dir"] = args.out
    if args.mf is not None and args.command != "sweep":
        payload["mf"] = int(args.mf)
    return pipeline.PipelineConfig.from_dict(payload)


def _solve_file(args) -> dict:
    problem = read_qubo(args.file)
    config = TabuConfig(args.tenure, args.iterations, args.restarts, args.seed or 0)
    if args.blocks:
        parts = split_blocks(problem, args.blocks, problem.n_vars // args.blocks)
        results = solve_blocks(parts, config, args.solver)
        q = [int(v) for r in results for v in r.best_q]
        payload = {"best_q": q, "best_energy": problem.energy(q),
                   "block_energies": [r.best_energy for r in results],
                   "iterations_used": sum(r.iterations_used for r in results),
                   "restarts_used": max(r.restarts_used for r in results)}
    elif args.solver == "tabu":
        payload = tabu_search(problem, config).to_dict()
    elif args.solver == "sa":
        payload = simulated_annealing(problem, seed=args.seed or 0).to_dict()
    else:
        payload = brute_force(problem).to_dict()
    return payload


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffm-l0", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("run", help="train, select, sweep and report in one go"))
    _add_common(sub.add_parser("train", help="grid-search and train the FFM; writes model.json"))
    _add_common(sub.add_parser("select", help="solve the selection QUBO for one M_f"))
    _add_common(sub.add_parser("sweep", help="R^2 versus M_f; writes figure1.csv"),
                mf_help="M_f grid, e.g. 10:100:10 (inclusive) or 40,80")
    _add_common(sub.add_parser("report", help="assemble report.json and manifest.json"))

    solve = sub.add_parser("solve-qubo", help="minimize a QUBO text file")
    solve.add_argument("file")
    solve.add_argument("--solver", choices=["tabu", "sa", "brute"], default="tabu")
    solve.add_argument("--blocks", type=int, help="split into this many equal independent blocks")
    solve.add_argument("--seed", type=int)
    solve.add_argument("--tenure", type=int)
    solve.add_argument("--iterations", type=int)
    solve.add_argument("--restarts", type=int, default=5)
    solve.add_argument("--output", help="write the result JSON here instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve-qubo":
            text = json.dumps(_solve_file(args)) + "\n"
            if args.output:
                Path(args.output).write_text(text)
            else:
                sys.stdout.write(text)
            return 0
        config = _config(args)
        if args.command == "run":
            report = pipeline.run_full(config)
            summary = {"ffm": {k: report["ffm"][k] for k in ("r2_train", "r2_test", "a1", "a2")},
                       "selection_r2": {k: report["selection"]["eval"][k]
                                        for k in ("r2_train", "r2_test")}}
        elif args.command == "train":
            summary = pipeline.stage_train(config)
            summary.pop("cv_scores")
        elif args.command == "select":
            sel = pipeline.stage_select(config)
            summary = {"mf": sel["mf"], "cardinality": sel["cardinality"],
                       "r2_train": sel["eval"]["r2_train"], "r2_test": sel["eval"]["r2_test"]}
        elif args.command == "sweep":
            grid = pipeline.parse_mf_range(args.mf) if args.mf else None
            summary = [vars(r) for r in pipeline.stage_sweep(config, grid)]
        else:
            report = pipeline.stage_report(config)
            summary = {"written": str(Path(config.output_dir) / "report.json"),
                       "r2_test": report["selection"]["eval"]["r2_test"]}
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
        return 0
    except pipeline.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (DataError, QuboError, ValueError, FileNotFoundError) as exc:
        stage = "solve-qubo" if args.command == "solve-qubo" else "config/ingest"
        print(f"error: [{stage}] {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
