"""Batch command-line front end.

Subcommands: plan (schedule table), tune (full annealing run), eval (one
configuration), oracle (exhaustive front on a restricted space). Exit codes:
0 success, 1 usage error, 2 data error, 3 runtime/divergence error. Primary
artifacts are written to temp files and renamed, so failed commands never
leave partial outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from typing import Any, Sequence

from .annealer import CalibrationError, RunResult, plan_schedule, run
from .corpus import (
    CvPolicy,
    DataError,
    FixedTestPolicy,
    HoldoutPolicy,
    PreparedCorpus,
    load_cr,
    load_mr,
    load_trec,
    make_splits,
    synthetic_corpus,
)
from .evaluator import (
    EvaluationCache,
    SyntheticEvaluator,
    TextCnnEvaluator,
    estimate_flops,
)
from .pareto import ArchiveEntry, brute_force_front
from .search_space import (
    DISPLAY_LABELS,
    SYNTHETIC_PREFIX,
    Configuration,
    RunConfig,
    SearchSpace,
    default_search_space,
    enumerate_space,
    load_run_config,
    parse_value,
)
from .textcnn import DivergenceError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

FORMAT_VERSION = 1

BUNDLED_SYNTHETIC = {
    "kind": "synthetic",
    "class_count": 2,
    "samples_per_class": 50,
    "vocab_size": 40,
    "test_fraction": 0.2,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); remap to usage
        raise UsageError(message)


# --- output helpers -----------------------------------------------------------


def _atomic_write(path: str, content: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_table(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def _entry_payload(entry: ArchiveEntry) -> dict[str, Any]:
    return {
        "config": entry.config.as_dict(),
        "error_rate": entry.objectives.error_rate,
        "flops": entry.objectives.flops,
        "iteration_found": entry.iteration_found,
    }


def archive_text(
    entries: list[ArchiveEntry], space: SearchSpace, top_k: int
) -> str:
    """Front table (one row per entry) plus a transposed top-k block."""
    names = list(space.names)
    lines = [f"# annealtune archive format v{FORMAT_VERSION}"]
    rows = [names + ["error_rate", "flops", "iteration_found"]]
    for entry in entries:
        rows.append(
            [str(entry.config[n]) for n in names]
            + [
                repr(entry.objectives.error_rate),
                str(entry.objectives.flops),
                str(entry.iteration_found),
            ]
        )
    lines.append(_format_table(rows))

    top = sorted(entries, key=lambda e: (e.objectives.error_rate, e.objectives.flops))
    top = top[:top_k]
    if top:
        lines.append("")
        lines.append(f"# top-{len(top)} by error rate")
        block = [["hyperparameter"] + [f"Top{i + 1}" for i in range(len(top))]]
        for name in names:
            label = DISPLAY_LABELS.get(name, name)
            block.append([label] + [str(e.config[name]) for e in top])
        block.append(["error rate"] + [repr(e.objectives.error_rate) for e in top])
        block.append(["flops"] + [str(e.objectives.flops) for e in top])
        block.append(["iteration found"] + [str(e.iteration_found) for e in top])
        lines.append(_format_table(block))
    return "\n".join(lines) + "\n"


def archive_json(
    entries: list[ArchiveEntry], top_k: int, meta: dict[str, Any]
) -> str:
    top = sorted(entries, key=lambda e: (e.objectives.error_rate, e.objectives.flops))
    payload = {
        "format_version": FORMAT_VERSION,
        **meta,
        "entries": [_entry_payload(e) for e in entries],
        "top": [_entry_payload(e) for e in top[:top_k]],
    }
    return json.dumps(payload, indent=2) + "\n"


def trace_jsonl(result: RunResult) -> str:
    lines = [json.dumps({"format_version": FORMAT_VERSION, "kind": "trace"})]
    for record in result.trace:
        lines.append(json.dumps(record.to_dict()))
    return "\n".join(lines) + "\n"


def calibration_json(result: RunResult) -> str:
    payload = {
        "format_version": FORMAT_VERSION,
        "delta_f_ave": result.calibration.delta_f_ave,
        "probe_count": result.calibration.probe_count,
        "t_init": result.calibration.t_init,
        "t_final": result.calibration.t_final,
        "schedule": {
            "cooling_rate": result.schedule.cooling_rate,
            "iteration_budget": result.schedule.iteration_budget,
            "outer_iterations": result.schedule.outer_iterations,
            "inner_iterations": result.schedule.inner_iterations,
            "outer_steps": result.schedule.outer_steps,
            "inner_steps": result.schedule.inner_steps,
        },
        "stop_reason": result.stop_reason,
        "evaluations": result.evaluations,
    }
    return json.dumps(payload, indent=2) + "\n"


# --- dataset wiring -----------------------------------------------------------


def _load_manifest(path: str) -> dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"dataset manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"dataset manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict) or "kind" not in manifest:
        raise DataError("dataset manifest must be an object with a 'kind' key")
    return manifest


def prepare_corpus(
    manifest: dict[str, Any], ratio_init: float, seed: int
) -> PreparedCorpus:
    """Build a PreparedCorpus from a dataset manifest.

    Kinds: synthetic (bundled generator), mr (pos/neg files, 10-fold CV),
    cr (tab-separated file, 10-fold CV), trec (train/test files, fixed
    test split).
    """
    kind = manifest["kind"]
    if kind == "synthetic":
        data = synthetic_corpus(
            class_count=int(manifest.get("class_count", 2)),
            samples_per_class=int(manifest.get("samples_per_class", 50)),
            vocab_size=int(manifest.get("vocab_size", 40)),
            seed=int(manifest.get("seed", seed)),
        )
        policy = HoldoutPolicy(float(manifest.get("test_fraction", 0.2)))
        return make_splits(data, policy, ratio_init, seed)
    if kind == "mr":
        data = load_mr(manifest["pos"], manifest["neg"])
        policy = CvPolicy(
            int(manifest.get("folds", 10)), int(manifest.get("fold_index", 0))
        )
        return make_splits(
            data, policy, ratio_init, seed, class_names=("negative", "positive")
        )
    if kind == "cr":
        data = load_cr(manifest["path"])
        policy = CvPolicy(
            int(manifest.get("folds", 10)), int(manifest.get("fold_index", 0))
        )
        return make_splits(
            data, policy, ratio_init, seed, class_names=("negative", "positive")
        )
    if kind == "trec":
        train, test, class_names = load_trec(manifest["train"], manifest["test"])
        return make_splits(
            train,
            FixedTestPolicy(tuple(test)),
            ratio_init,
            seed,
            class_names=class_names,
        )
    raise DataError(f"unknown dataset kind {kind!r}")


def build_evaluator(config: RunConfig, cache_path: str | None = None):
    if config.objective_kind.startswith(SYNTHETIC_PREFIX):
        name = config.objective_kind[len(SYNTHETIC_PREFIX) :]
        return SyntheticEvaluator(space=config.space, name=name)
    manifest = (
        _load_manifest(config.dataset_path)
        if config.dataset_path
        else dict(BUNDLED_SYNTHETIC)
    )
    corpus = prepare_corpus(manifest, config.ratio_init, config.seed_number)
    return TextCnnEvaluator(
        space=config.space,
        corpus=corpus,
        seed=config.seed_number,
        max_epochs=config.max_epochs,
        embedding_dim=config.embedding_dim,
        early_stop_margin=config.early_stop_margin,
        early_stop_patience=config.early_stop_patience,
        cache=EvaluationCache(cache_path),
    )


# --- subcommands ---------------------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> int:
    rates = args.cooling_rates
    rows = [
        [
            "Iteration budget",
            "T_init",
            "T_final",
            "Cooling rate",
            "#Outer iterations",
            "#Inner iterations",
        ]
    ]
    try:
        for rate in rates:
            schedule = plan_schedule(args.t_init, args.t_final, rate, args.budget)
            rows.append(
                [
                    str(args.budget),
                    f"{args.t_init:g}",
                    f"{args.t_final:g}",
                    f"{rate:g}",
                    f"{schedule.outer_reported:.1f}",
                    f"{schedule.inner_reported:.1f}",
                ]
            )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(_format_table(rows))
    return EXIT_OK


def _write_run_outputs(
    result: RunResult, space: SearchSpace, out_dir: str, top_k: int, meta: dict
) -> list[str]:
    front = result.archive.front()
    paths = {
        "archive.txt": archive_text(front, space, top_k),
        "archive.json": archive_json(front, top_k, meta),
        "trace.jsonl": trace_jsonl(result),
        "calibration.json": calibration_json(result),
    }
    written = []
    for name, content in paths.items():
        path = os.path.join(out_dir, name)
        _atomic_write(path, content)
        written.append(path)
    return written


def cmd_tune(args: argparse.Namespace) -> int:
    try:
        config = load_run_config(args.config)
    except FileNotFoundError:
        raise UsageError(f"run config not found: {args.config}") from None
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise UsageError(f"bad run config: {exc}") from None
    try:
        evaluator = build_evaluator(config, cache_path=args.cache)
    except DataError:
        raise
    except ValueError as exc:  # e.g. unknown synthetic objective name
        raise UsageError(str(exc)) from None
    result = run(config, evaluator)
    meta = {
        "objective_kind": config.objective_kind,
        "seed_number": config.seed_number,
    }
    written = _write_run_outputs(result, config.space, args.output_dir, args.top_k, meta)
    front = result.archive.front()
    best = front[0]
    print(f"stop reason: {result.stop_reason}; evaluations: {result.evaluations}")
    print(f"archive size: {len(front)}")
    print(
        f"best: error_rate={best.objectives.error_rate!r} "
        f"flops={best.objectives.flops} config={best.config.as_dict()}"
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _config_from_sets(space: SearchSpace, pairs: Sequence[str]) -> Configuration:
    assignments: dict[str, Any] = {}
    for pair in pairs:
        name, eq, text = pair.partition("=")
        if not eq:
            raise UsageError(f"--set expects name=value, got {pair!r}")
        try:
            domain = space.domain(name)
        except KeyError:
            raise UsageError(f"unknown hyperparameter {name!r}") from None
        try:
            assignments[name] = parse_value(domain, text)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        return space.configuration(assignments)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_eval(args: argparse.Namespace) -> int:
    space = default_search_space()
    config = _config_from_sets(space, args.set or [])
    if args.flops_only:
        breakdown = estimate_flops(
            config, args.sentence_length, args.embedding_dim, args.class_count
        )
        print(f"flops breakdown: conv={list(breakdown.conv_flops)} "
              f"fc={breakdown.fc_flops} total={breakdown.total}")
        return EXIT_OK
    manifest = (
        _load_manifest(args.corpus) if args.corpus else dict(BUNDLED_SYNTHETIC)
    )
    corpus = prepare_corpus(manifest, args.ratio_init, args.seed)
    breakdown = estimate_flops(
        config, corpus.sentence_length, args.embedding_dim, corpus.class_count
    )
    print(f"flops breakdown: conv={list(breakdown.conv_flops)} "
          f"fc={breakdown.fc_flops} total={breakdown.total}")
    evaluator = TextCnnEvaluator(
        space=space,
        corpus=corpus,
        seed=args.seed,
        max_epochs=args.max_epochs,
        embedding_dim=args.embedding_dim,
    )
    objectives = evaluator.evaluate(config)
    print(f"error_rate: {objectives.error_rate!r}")
    print(f"flops: {objectives.flops}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    space = default_search_space()
    if args.space:
        text = args.space
        if not text.lstrip().startswith("{"):
            try:
                with open(text, "r", encoding="utf-8") as fh:
                    text = fh.read()
            except FileNotFoundError:
                raise UsageError(f"space file not found: {args.space}") from None
        try:
            space = space.restrict(json.loads(text))
        except (json.JSONDecodeError, ValueError) as exc:
            raise UsageError(f"bad space restriction: {exc}") from None
    if space.cardinality() > args.cap:
        raise UsageError(
            f"space cardinality {space.cardinality()} exceeds cap {args.cap}"
        )
    evaluator = SyntheticEvaluator(space=space, name=args.objective)
    evaluated = [
        (config, evaluator.evaluate(config))
        for config in enumerate_space(space, args.cap)
    ]
    front_set = brute_force_front(evaluated)
    entries = [
        ArchiveEntry(cfg, obj, iteration_found=0) for cfg, obj in front_set
    ]
    entries.sort(
        key=lambda e: (e.objectives.error_rate, e.objectives.flops, e.config.sort_key())
    )
    meta = {"objective_kind": f"synthetic:{args.objective}", "cap": args.cap}
    _atomic_write(args.output, archive_text(entries, space, args.top_k))
    _atomic_write(
        os.path.splitext(args.output)[0] + ".json",
        archive_json(entries, args.top_k, meta),
    )
    print(f"evaluated {len(evaluated)} configurations; front size {len(entries)}")
    print(f"wrote {args.output}")
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="annealtune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="print the outer/inner iteration table")
    p_plan.add_argument("--t-init", type=float, default=0.577)
    p_plan.add_argument("--t-final", type=float, default=0.12)
    p_plan.add_argument("--budget", type=int, default=250)
    p_plan.add_argument(
        "--cooling-rates",
        type=lambda s: [float(x) for x in s.split(",")],
        default=[0.99, 0.95, 0.9, 0.85, 0.8],
    )
    p_plan.set_defaults(func=cmd_plan)

    p_tune = sub.add_parser("tune", help="run the annealing search")
    p_tune.add_argument("--config", required=True, help="run config JSON path")
    p_tune.add_argument("--output-dir", required=True)
    p_tune.add_argument("--top-k", type=int, default=3)
    p_tune.add_argument("--cache", default=None, help="evaluation cache path")
    p_tune.set_defaults(func=cmd_tune)

    p_eval = sub.add_parser("eval", help="evaluate one configuration")
    p_eval.add_argument(
        "--set",
        action="append",
        metavar="NAME=VALUE",
        help="assign one hyperparameter; repeat for all of them",
    )
    p_eval.add_argument("--corpus", default=None, help="dataset manifest JSON")
    p_eval.add_argument("--flops-only", action="store_true")
    p_eval.add_argument("--seed", type=int, default=40)
    p_eval.add_argument("--ratio-init", type=float, default=0.9)
    p_eval.add_argument("--max-epochs", type=int, default=20)
    p_eval.add_argument("--sentence-length", type=int, default=10)
    p_eval.add_argument("--embedding-dim", type=int, default=50)
    p_eval.add_argument("--class-count", type=int, default=6)
    p_eval.set_defaults(func=cmd_eval)

    p_oracle = sub.add_parser("oracle", help="exhaustive front on a small space")
    p_oracle.add_argument("--space", default=None, help="restriction JSON or path")
    p_oracle.add_argument(
        "--objective", choices=("sphere_proxy", "deceptive_trap"), required=True
    )
    p_oracle.add_argument("--cap", type=int, default=10**6)
    p_oracle.add_argument("--output", required=True)
    p_oracle.add_argument("--top-k", type=int, default=3)
    p_oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CalibrationError, DivergenceError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
