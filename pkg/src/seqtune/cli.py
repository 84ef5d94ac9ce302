"""Batch experiment runner: JSON config in, artifacts on disk out.

Subcommands:
    run         execute sequence runs per seed (and per task order), write
                result.json + round CSVs + plot-data CSVs, print a summary.
    importance  offline variance importance over persisted round CSVs.
    report      aggregate result directories into a comparison table with
                figures rendered beside the CSV.

Exit codes: 0 ok, 2 config or usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .adaptive import (StrategySpec, TunerPolicy, make_objective,
                       predicted_budget, run_sequence, save_sequence_result)
from .clbench.streams import _KIND_ALIASES, STREAM_KINDS, make_stream
from .fanova import fit_forest, get_param_imp, variance_decomposition
from .hpspace import DomainError, subspace_from_descriptor
from .metrics import (ComparabilityError, order_robustness,
                      write_importance_csv, write_robustness_csv,
                      write_sa_curve_csv)
from .samplers import SamplerSpec
from .trials import _FIXED_COLUMNS, load_history


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


@dataclass
class ExperimentConfig:
    stream_kind: str
    n_tasks: int
    n_per_task: int
    stream_seed: int
    strategy: StrategySpec
    policy: TunerPolicy
    sampler: SamplerSpec
    seeds: List[int]
    out: Optional[str]
    permutations: Optional[List[List[int]]]
    raw: dict


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}{key}: required field is missing")
    return d[key]


def _as_int(value, path: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def parse_config(d: dict) -> ExperimentConfig:
    """Validate the JSON config against every module precondition it feeds.

    Raises ConfigError whose message starts with the dotted field path.
    """
    if not isinstance(d, dict):
        raise ConfigError("config: expected a JSON object")
    known = {"stream", "strategy", "policy", "sampler", "seeds", "out", "permutations"}
    for key in d:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")

    stream = _require(d, "stream", "")
    kind = _require(stream, "kind", "stream.")
    if kind not in STREAM_KINDS and kind not in _KIND_ALIASES:
        allowed = sorted(set(STREAM_KINDS) | set(_KIND_ALIASES))
        raise ConfigError(f"stream.kind: unknown stream kind {kind!r} (expected one of {allowed})")
    n_tasks = _as_int(_require(stream, "n_tasks", "stream."), "stream.n_tasks", 2)
    canonical = _KIND_ALIASES.get(kind, kind)
    if canonical == "drifting_function":
        n_per_task = _as_int(stream.get("n_per_task", 0), "stream.n_per_task", 0)
    else:
        n_per_task = _as_int(_require(stream, "n_per_task", "stream."),
                             "stream.n_per_task", 10)
    stream_seed = _as_int(_require(stream, "seed", "stream."), "stream.seed")

    try:
        strategy = StrategySpec.from_json(_require(d, "strategy", ""))
    except (DomainError, KeyError, TypeError) as exc:
        raise ConfigError(f"strategy.kind: {exc}") from exc
    if canonical == "drifting_function" and strategy.kind != "none":
        raise ConfigError(
            "strategy.kind: drifting_function streams take kind 'none'"
        )
    if canonical != "drifting_function" and strategy.kind == "none":
        raise ConfigError(
            f"strategy.kind: stream {kind!r} needs a continual strategy, not 'none'"
        )

    try:
        policy = TunerPolicy.from_json(_require(d, "policy", ""))
    except (DomainError, KeyError, TypeError) as exc:
        raise ConfigError(f"policy: {exc}") from exc
    if policy.kind == "adaptive_hpo" and policy.m >= n_tasks:
        raise ConfigError(
            f"policy.m: warm-up {policy.m} must be smaller than stream.n_tasks {n_tasks}"
        )

    try:
        sampler = SamplerSpec.from_json(_require(d, "sampler", ""))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"sampler: {exc}") from exc

    seeds = _require(d, "seeds", "")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: expected a non-empty list of integers")
    seeds = [_as_int(s, f"seeds[{i}]") for i, s in enumerate(seeds)]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: duplicate entries")

    out = d.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out: expected a string path")

    permutations = d.get("permutations")
    if permutations is not None:
        if not isinstance(permutations, list) or len(permutations) < 1:
            raise ConfigError("permutations: expected a list of task orders")
        for i, order in enumerate(permutations):
            if not isinstance(order, list) or sorted(order) != list(range(n_tasks)):
                raise ConfigError(
                    f"permutations[{i}]: not a permutation of 0..{n_tasks - 1}"
                )

    return ExperimentConfig(
        stream_kind=kind,
        n_tasks=n_tasks,
        n_per_task=n_per_task,
        stream_seed=stream_seed,
        strategy=strategy,
        policy=policy,
        sampler=sampler,
        seeds=seeds,
        out=out,
        permutations=permutations,
        raw=d,
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from exc
    return parse_config(data)


def _build_stream(cfg: ExperimentConfig):
    stream = make_stream(cfg.stream_kind, cfg.n_tasks, cfg.n_per_task, cfg.stream_seed)
    # Exercises space overrides and strategy/stream pairing before any run.
    try:
        make_objective(stream, cfg.strategy)
    except DomainError as exc:
        raise ConfigError(f"strategy: {exc}") from exc
    return stream


def _mean_std(xs: List[float]) -> Tuple[float, float]:
    mean = sum(xs) / len(xs)
    if len(xs) < 2 or max(xs) == min(xs):
        return mean, 0.0
    return mean, math.sqrt(sum((x - mean) ** 2 for x in xs) / (len(xs) - 1))


def _print_table(header: List[str], rows: List[List[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"--seeds: {exc}") from exc
        if not seeds:
            raise ConfigError("--seeds: empty list")
        cfg.seeds = seeds
    out = args.out or cfg.out
    if out is None:
        raise ConfigError("out: set it in the config or pass --out")
    stream = _build_stream(cfg)

    if args.validate_only:
        trials = predicted_budget(cfg.policy, cfg.n_tasks)
        n_units = len(cfg.seeds) * len(cfg.permutations or [()])
        print(f"config ok: {cfg.policy.kind} on {cfg.stream_kind}, "
              f"{n_units} unit(s) x {trials} trials each")
        return 0

    orders = cfg.permutations or [list(range(cfg.n_tasks))]
    explicit_orders = cfg.permutations is not None
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    units = [(oi, order, seed) for oi, order in enumerate(orders) for seed in cfg.seeds]

    def run_unit(unit):
        oi, order, seed = unit
        reordered = stream.reordered(order)
        result = run_sequence(reordered, cfg.strategy, cfg.policy, cfg.sampler, seed)
        if explicit_orders:
            unit_dir = out_dir / f"order_{oi}" / f"seed_{seed}"
        else:
            unit_dir = out_dir / f"seed_{seed}"
        save_sequence_result(result, unit_dir)
        if explicit_orders:
            (unit_dir / "order.json").write_text(
                json.dumps({"order_index": oi, "order": order}, sort_keys=True) + "\n"
            )
        return oi, seed, unit_dir, result

    workers = max(1, args.parallel)
    if workers == 1:
        finished = [run_unit(u) for u in units]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            finished = list(pool.map(run_unit, units))

    _write_run_aggregates(cfg, stream, out_dir, finished)

    sa_values = [r.final_stream_accuracy for _, _, _, r in finished]
    mean, std = _mean_std(sa_values)
    rows = [[
        cfg.policy.kind,
        str(len(finished)),
        f"{mean:.4f} +/- {std:.4f}",
        str(finished[0][3].total_trials),
        f"{sum(r.total_cost_seconds for _, _, _, r in finished) / len(finished):.2f}s",
    ]]
    print(_print_table(["policy", "runs", "SA mean+/-std", "trials/run", "cost/run"], rows))

    partial_units = [(oi, s) for oi, s, _, r in finished if r.partial]
    if partial_units:
        print(f"runtime failure: {len(partial_units)} unit(s) ended on an empty round: "
              f"{partial_units}", file=sys.stderr)
        return 3
    return 0


def _write_run_aggregates(cfg, stream, out_dir: Path, finished) -> None:
    by_order: Dict[int, list] = {}
    for oi, seed, unit_dir, result in finished:
        by_order.setdefault(oi, []).append((seed, unit_dir, result))

    base_units = by_order[min(by_order)]
    sa_rows = []
    for seed, _, result in base_units:
        for t, sa in enumerate(result.sa_curve):
            sa_rows.append((t, sa, cfg.policy.kind, seed))
    write_sa_curve_csv(out_dir / "sa_curve.csv", sa_rows)

    imp_acc: Dict[Tuple[int, str], List[float]] = {}
    for seed, _, result in base_units:
        for t, report in result.importance.items():
            for name, v in report.unary.items():
                imp_acc.setdefault((t, name), []).append(v)
    if imp_acc:
        write_importance_csv(
            out_dir / "importance.csv",
            [(t, name, sum(vs) / len(vs)) for (t, name), vs in sorted(imp_acc.items())],
        )

    if len(by_order) >= 2:
        curves = []
        for oi in sorted(by_order):
            per_seed = [r.sa_curve for _, _, r in by_order[oi]]
            mean_curve = [sum(c[t] for c in per_seed) / len(per_seed)
                          for t in range(len(per_seed[0]))]
            curves.append({
                "sa_curve": mean_curve,
                "stream_fingerprint": stream.fingerprint(),
            })
        rows = [(step, mean, std, cfg.policy.kind)
                for step, mean, std in order_robustness(curves)]
        write_robustness_csv(out_dir / "robustness.csv", rows)

    sa_values = [r.final_stream_accuracy for _, _, _, r in finished]
    mean, std = _mean_std(sa_values)
    summary = {
        "config": cfg.raw,
        "policy": cfg.policy.kind,
        "stream": stream.fingerprint(),
        "units": [
            {
                "order_index": oi,
                "seed": seed,
                "dir": str(unit_dir.relative_to(out_dir)),
                "final_stream_accuracy": result.final_stream_accuracy,
                "total_trials": result.total_trials,
                "partial": result.partial,
            }
            for oi, seed, unit_dir, result in finished
        ],
        "sa_mean": mean,
        "sa_std": std,
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )


def cmd_importance(args) -> int:
    if args.space:
        try:
            descriptor = json.loads(Path(args.space).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--space: {exc}") from exc
        domain = subspace_from_descriptor(descriptor)
    else:
        domain = None

    histories = []
    for log in args.logs:
        log = Path(log)
        if domain is not None:
            header = log.read_text().splitlines()[0].split(",")
            params = header[len(_FIXED_COLUMNS):]
            space = domain.full_space()
            unknown = [p for p in params if p not in space.names]
            if unknown:
                raise ConfigError(
                    f"{log}: columns not in the given space: {unknown}"
                )
            histories.append(load_history(log, domain=domain))
        else:
            histories.append(load_history(log))

    space = histories[0].domain.full_space()
    if args.exact:
        forest = fit_forest(histories, space, n_trees=1, bootstrap=False)
        report = variance_decomposition(forest, space, max_order=2)
    else:
        report = get_param_imp(histories, space, n_trees=args.trees, seed=args.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    as_of = max(h.task_index for h in histories)
    write_importance_csv(
        out_dir / "importance.csv",
        [(as_of, name, report.unary[name]) for name in space.names],
    )
    payload = {
        "logs": [str(p) for p in args.logs],
        "seed": args.seed,
        "n_trees": 1 if args.exact else args.trees,
        "exact": bool(args.exact),
        "report": report.to_json(),
    }
    (out_dir / "importance.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )
    for name in space.names:
        print(f"{name}\t{report.unary[name]:.6f}")
    return 0


def _load_result_dirs(dirs) -> List[dict]:
    records = []
    for d in dirs:
        d = Path(d)
        paths = [d / "result.json"] if (d / "result.json").exists() else sorted(
            d.rglob("result.json")
        )
        for path in paths:
            rec = json.loads(path.read_text())
            timing_path = path.parent / "timing.json"
            rec["_cost"] = (
                json.loads(timing_path.read_text())["total_cost_seconds"]
                if timing_path.exists() else 0.0
            )
            order_path = path.parent / "order.json"
            rec["_order_index"] = (
                json.loads(order_path.read_text())["order_index"]
                if order_path.exists() else 0
            )
            records.append(rec)
    return records


def cmd_report(args) -> int:
    records = _load_result_dirs(args.dirs)
    if not records:
        raise ConfigError("no result.json found under the given directories")
    prints = [r["stream"] for r in records]
    for p in prints[1:]:
        if p != prints[0]:
            raise ComparabilityError(
                "result directories mix different streams; report them separately"
            )
    stream_label = f"{prints[0]['kind']}(seed={prints[0]['seed']})"

    by_policy: Dict[str, List[dict]] = {}
    for rec in records:
        by_policy.setdefault(rec["policy"]["kind"], []).append(rec)

    order = ["fixed_random", "fixed_first_hpo", "per_task_hpo", "adaptive_hpo"]
    kinds = sorted(by_policy, key=lambda k: (order.index(k) if k in order else 99, k))

    header = ["policy", "stream", "n_runs", "sa_mean", "sa_std", "trials_mean",
              "cost_mean_seconds"]
    csv_rows = []
    text_rows = []
    for kind in kinds:
        group = by_policy[kind]
        sa = [r["final_stream_accuracy"] for r in group]
        mean, std = _mean_std(sa)
        trials = sum(r["total_trials"] for r in group) / len(group)
        cost = sum(r["_cost"] for r in group) / len(group)
        csv_rows.append((kind, stream_label, len(group), mean, std, trials, cost))
        text_rows.append([kind, stream_label, str(len(group)), f"{mean:.4f}",
                          f"{std:.4f}", f"{trials:.1f}", f"{cost:.2f}"])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .metrics import _write_csv

    _write_csv(out_dir / "report.csv", header, csv_rows)
    table = _print_table(header, text_rows)
    (out_dir / "report.txt").write_text(table + "\n")
    print(table)
    _render_report_figures(out_dir, by_policy, kinds)
    return 0


def _render_report_figures(out_dir: Path, by_policy, kinds) -> None:
    """Figures beside the CSVs; rendering is batch-only, never interactive."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    means = []
    stds = []
    for kind in kinds:
        sa = [r["final_stream_accuracy"] for r in by_policy[kind]]
        mean, std = _mean_std(sa)
        means.append(mean)
        stds.append(std)
    ax.bar(range(len(kinds)), means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(range(len(kinds)))
    ax.set_xticklabels(kinds, rotation=20, ha="right")
    ax.set_ylabel("final stream accuracy")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(out_dir / "sa_bar.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for kind in kinds:
        curves = [r["sa_curve"] for r in by_policy[kind]]
        n = min(len(c) for c in curves)
        mean_curve = [sum(c[t] for c in curves) / len(curves) for t in range(n)]
        ax.plot(range(n), mean_curve, marker="o", label=kind)
    ax.set_xlabel("task")
    ax.set_ylabel("stream accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "sa_curve.png", dpi=120)
    plt.close(fig)

    multi_order = {
        kind: group for kind, group in by_policy.items()
        if len({r["_order_index"] for r in group}) >= 2
    }
    if multi_order:
        fig, ax = plt.subplots(figsize=(6, 4))
        for kind, group in sorted(multi_order.items()):
            by_order: Dict[int, List[dict]] = {}
            for r in group:
                by_order.setdefault(r["_order_index"], []).append(r)
            curves = []
            for oi in sorted(by_order):
                per_seed = [r["sa_curve"] for r in by_order[oi]]
                n = min(len(c) for c in per_seed)
                curves.append({
                    "sa_curve": [sum(c[t] for c in per_seed) / len(per_seed)
                                 for t in range(n)],
                    "stream_fingerprint": group[0]["stream"],
                })
            rows = order_robustness(curves)
            steps = [s for s, _, _ in rows]
            means = [m for _, m, _ in rows]
            stds = [sd for _, _, sd in rows]
            ax.plot(steps, means, marker="o", label=kind)
            ax.fill_between(
                steps,
                [m - s for m, s in zip(means, stds)],
                [m + s for m, s in zip(means, stds)],
                alpha=0.25,
            )
        ax.set_xlabel("task")
        ax.set_ylabel("stream accuracy across orders")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / "robustness.png", dpi=120)
        plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqtune",
        description="Sequence hyperparameter tuning experiments: run, analyze, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True, help="path to JSON config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seeds", help="comma-separated seed list (overrides config)")
    p_run.add_argument("--validate-only", action="store_true",
                       help="check the config and exit")
    p_run.add_argument("--parallel", type=int, default=1, metavar="N",
                       help="worker threads over (order, seed) units")
    p_run.set_defaults(func=cmd_run)

    p_imp = sub.add_parser("importance", help="offline importance from round CSVs")
    p_imp.add_argument("--logs", nargs="+", required=True, help="round CSV paths")
    p_imp.add_argument("--space", help="space descriptor JSON (default: log sidecars)")
    p_imp.add_argument("--seed", type=int, default=0, help="forest seed")
    p_imp.add_argument("--trees", type=int, default=16, help="trees per forest")
    p_imp.add_argument("--exact", action="store_true",
                       help="single exact-fit tree, no bootstrap")
    p_imp.add_argument("--out", default=".", help="output directory")
    p_imp.set_defaults(func=cmd_importance)

    p_rep = sub.add_parser("report", help="aggregate result directories")
    p_rep.add_argument("dirs", nargs="+", help="run output directories")
    p_rep.add_argument("--out", default=".", help="where to write report files")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ComparabilityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        print("runtime failure:", file=sys.stderr)
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
