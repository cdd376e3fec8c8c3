"""Command-line surface: budget queries, tables, counting, search, reports.

Every command is reproducible from its flags plus the seed; search archives
embed the fully resolved run configuration.  Exit code 0 means no module
error (a failed insight check is a reported result, not an error).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import archive as archive_mod
from .catalog import write_budget_tables
from .config import ConfigError, load_pipeline_spec
from .costmodel import (
    CostMetric,
    ModelSpec,
    TaskShape,
    display_budget,
    normalized_budget,
    price_cost,
)
from .environment import (
    PRESET_NAMES,
    EvaluationError,
    command_env,
    make_preset,
    table_env_load,
    verify_insights,
)
from .searchspace import SearchSpaceError, count_valid, default_budget
from .strategies import (
    STRATEGY_BUILDERS,
    LlmAgentConfig,
    LlmAgentStrategy,
    StrategyError,
    run_search,
)


def _add_budget_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("budget", help="normalized budget of one configuration")
    p.add_argument("--params", type=float, required=True, help="model parameter count")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--prompt", type=int, required=True, help="prompt token length")
    p.add_argument("--gen", type=int, required=True, help="generation token length")
    p.add_argument(
        "--metric",
        choices=[m.value for m in CostMetric],
        default=CostMetric.FLOPS_SIMPLIFIED.value,
    )
    p.add_argument("--price-in", type=float, help="dollars per 1M prompt tokens")
    p.add_argument("--price-out", type=float, help="dollars per 1M generated tokens")


def _cmd_budget(args: argparse.Namespace) -> int:
    metric = CostMetric(args.metric)
    if metric is CostMetric.API_PRICE:
        if args.price_in is None or args.price_out is None:
            raise ConfigError("--metric api-price needs --price-in and --price-out")
        model = ModelSpec(
            "cli",
            args.params,
            price_per_mtok_in=args.price_in,
            price_per_mtok_out=args.price_out,
        )
        cost = price_cost(model, args.samples, TaskShape(args.prompt, args.gen))
        print(f"price: ${cost:.6f}")
        return 0
    model = ModelSpec("cli", args.params)
    value = normalized_budget(model, args.samples, TaskShape(args.prompt, args.gen))
    print(f"budget: {value:.6f} (display {display_budget(value)})")
    return 0


def _cmd_tables(args: argparse.Namespace) -> int:
    paths = write_budget_tables(args.out)
    for path in paths:
        print(path)
    return 0


def _cmd_space(args: argparse.Namespace) -> int:
    spec = load_pipeline_spec(args.spec)
    budget = default_budget(spec) if args.budget == "auto" else float(args.budget)
    count = count_valid(spec, budget, min_samples=args.min_samples)
    print(count)
    return 0


def _resolve_environment(args: argparse.Namespace):
    """(environment, spec) from --env plus optional --spec."""
    if args.env in PRESET_NAMES:
        env = make_preset(args.env, args.seed)
        return env, env.spec
    if args.env.startswith("table:"):
        if not args.spec:
            raise ConfigError("table environments need --spec")
        spec = load_pipeline_spec(args.spec)
        return table_env_load(args.env[len("table:"):], spec), spec
    if args.env.startswith("command:"):
        if not args.spec:
            raise ConfigError("command environments need --spec")
        spec = load_pipeline_spec(args.spec)
        return command_env(spec, args.env[len("command:"):], args.timeout), spec
    raise ConfigError(
        f"unknown environment {args.env!r}; use a preset {PRESET_NAMES}, "
        "table:<path>, or command:<template>"
    )


def _build_strategy(args: argparse.Namespace):
    if args.strategy == "llm":
        if not args.llm_endpoint or not args.llm_model:
            raise ConfigError("strategy llm needs --llm-endpoint and --llm-model")
        config = LlmAgentConfig(
            endpoint=args.llm_endpoint,
            model=args.llm_model,
            temperature=args.llm_temperature,
            token_env=args.llm_token_env,
        )
        return LlmAgentStrategy(config)
    try:
        return STRATEGY_BUILDERS[args.strategy]()
    except KeyError:
        raise ConfigError(f"unknown strategy {args.strategy!r}") from None


def _write_trajectory(path: Path, archive: archive_mod.Archive) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "score", "best_so_far", "budget"])
        best = float("-inf")
        for i, rec in enumerate(archive.records, start=1):
            best = max(best, rec.result.main_metric)
            writer.writerow([i, repr(rec.result.main_metric), repr(best), repr(rec.budget)])


def _cmd_search(args: argparse.Namespace) -> int:
    env, spec = _resolve_environment(args)
    budget = default_budget(spec) if args.budget == "auto" else float(args.budget)
    strategy = _build_strategy(args)
    run_config = {
        "env": args.env,
        "spec": args.spec,
        "strategy": args.strategy,
        "total_budget": budget,
        "max_trials": args.trials,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "out": str(args.out),
    }
    archive = run_search(
        strategy,
        env,
        spec,
        budget,
        max_trials=args.trials,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    archive.meta["run_config"] = run_config
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    archive_path = outdir / "archive.jsonl"
    trajectory_path = outdir / "trajectory.csv"
    archive.save(archive_path)
    _write_trajectory(trajectory_path, archive)
    best = archive.meta["report"][0] if archive.meta.get("report") else None
    print(f"archive: {archive_path}")
    print(f"trajectory: {trajectory_path}")
    if best:
        alloc = " | ".join(f"{m}:{s}" for m, s in best["allocation"])
        print(
            f"best: {alloc} train={best['train_score']:.4f} test={best['test_score']:.4f}"
        )
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    env = make_preset(args.env, args.seed)
    budget = default_budget(env.spec) if args.budget == "auto" else float(args.budget)
    report = verify_insights(env, budget)
    for line in report.lines():
        print(line)
    print("all checks passed" if report.all_passed else "some checks failed")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    archive = archive_mod.load(args.archive)
    best = archive.best_record()
    if best is None:
        print("archive holds no trials")
        return 0
    alloc = " | ".join(f"{m}:{s}" for m, s in best.allocation.entries)
    print(f"best trial {best.id} (stage {best.stage}, {best.strategy}): {alloc}")
    print(f"  score {best.result.main_metric:.6f}  budget {best.budget:.3f}")
    if archive.meta.get("report"):
        top = archive.meta["report"][0]
        top_alloc = " | ".join(f"{m}:{s}" for m, s in top["allocation"])
        print(f"  test-mode answer: {top_alloc} test={top['test_score']:.6f}")
    if args.out:
        path = Path(args.out)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "best_so_far"])
            for i, score in archive.trajectory():
                writer.writerow([i + 1, repr(score)])
        print(f"best-so-far CSV: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttsbudget",
        description="Compute budgets and allocation search for multi-stage pipelines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_budget_parser(sub)

    p = sub.add_parser("tables", help="emit the budget lookup tables as CSV")
    p.add_argument("--out", default="tables", help="output directory")

    p = sub.add_parser("space", help="count valid allocations under a budget")
    p.add_argument("--spec", required=True, help="pipeline TOML file")
    p.add_argument("--budget", default="auto", help="total budget or 'auto'")
    p.add_argument("--min-samples", type=int, default=None)

    p = sub.add_parser("search", help="run one seeded search")
    p.add_argument("--strategy", default="random", help="random|insight|surrogate|llm")
    p.add_argument("--env", required=True, help="preset name, table:<path>, command:<tpl>")
    p.add_argument("--spec", help="pipeline TOML (table/command environments)")
    p.add_argument("--budget", default="auto")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run_out", help="output directory")
    p.add_argument("--timeout", type=float, default=60.0, help="command env timeout")
    p.add_argument("--llm-endpoint")
    p.add_argument("--llm-model")
    p.add_argument("--llm-temperature", type=float, default=0.2)
    p.add_argument("--llm-token-env", default="LLM_API_TOKEN")

    p = sub.add_parser("verify", help="check a preset surface for the three behaviours")
    p.add_argument("--env", default="retrieval-qa", choices=list(PRESET_NAMES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", default="auto")

    p = sub.add_parser("report", help="summarize an archive file")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", help="write best-so-far CSV here")

    return parser


_HANDLERS = {
    "budget": _cmd_budget,
    "tables": _cmd_tables,
    "space": _cmd_space,
    "search": _cmd_search,
    "verify": _cmd_verify,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (
        ConfigError,
        SearchSpaceError,
        StrategyError,
        EvaluationError,
        archive_mod.ArchiveError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
