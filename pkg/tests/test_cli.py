"""End-to-end tests of the command line: run, importance, report.

Everything here drives `main(argv)` in process and checks exit codes,
artifacts on disk, and error messages. Streams are analytic so each run
costs milliseconds.
"""

import json
from pathlib import Path

import pytest

from seqtune.cli import main
from seqtune.fanova import fit_forest, variance_decomposition
from seqtune.hpspace import ConfigSpace, Configuration, ParamSpec
from seqtune.trials import RoundHistory, Trial, save_history


def write_config(path: Path, **overrides) -> Path:
    cfg = {
        "stream": {"kind": "drifting_function", "n_tasks": 6, "seed": 0},
        "strategy": {"kind": "none", "n_dims": 3},
        "policy": {"kind": "adaptive_hpo", "m": 2, "k": 1,
                   "budget_full": 6, "budget_restricted": 3},
        "sampler": {"kind": "tpe"},
        "seeds": [0, 1, 2],
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def adaptive_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("adaptive")
    cfg = write_config(root / "cfg.json")
    out = root / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


@pytest.fixture(scope="module")
def perm_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("perm")
    cfg = write_config(
        root / "cfg.json",
        policy={"kind": "fixed_random"},
        seeds=[0, 1],
        permutations=[[0, 1, 2, 3, 4, 5], [5, 4, 3, 2, 1, 0], [2, 0, 1, 3, 5, 4]],
    )
    out = root / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


# ---------------------------------------------------------------- config errors


def test_validate_only_checks_without_writing(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out"),
               "--validate-only"])
    assert rc == 0
    assert "config ok" in capsys.readouterr().out
    assert not (tmp_path / "out").exists()


def test_unknown_strategy_kind_names_the_field(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json",
        stream={"kind": "rotated_moons", "n_tasks": 4, "n_per_task": 40, "seed": 0},
        strategy={"kind": "ewc"},
    )
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "config error" in err and "strategy.kind" in err and "ewc" in err


def test_unknown_top_level_field_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", extra=1)
    assert main(["run", "--config", str(cfg), "--validate-only"]) == 2
    assert "extra: unknown field" in capsys.readouterr().err


def test_drifting_stream_requires_strategy_none(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", strategy={"kind": "ER"})
    assert main(["run", "--config", str(cfg), "--validate-only"]) == 2
    assert "strategy.kind" in capsys.readouterr().err


def test_warmup_must_fit_into_the_stream(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json",
        policy={"kind": "adaptive_hpo", "m": 6, "k": 1,
                "budget_full": 6, "budget_restricted": 3},
    )
    assert main(["run", "--config", str(cfg), "--validate-only"]) == 2
    assert "policy.m" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    rc = main(["run", "--config", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "cannot read" in capsys.readouterr().err


def test_invalid_json_config(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{")
    assert main(["run", "--config", str(p)]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_missing_required_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2


# ------------------------------------------------------------------------- run


def test_run_writes_unit_dirs_and_aggregates(adaptive_run):
    _, out = adaptive_run
    for seed in (0, 1, 2):
        unit = out / f"seed_{seed}"
        assert (unit / "result.json").exists()
        assert (unit / "timing.json").exists()
        assert (unit / "task_0" / "round.csv").exists()
        assert (unit / "importance_task_1.json").exists()

    sa_lines = (out / "sa_curve.csv").read_text().splitlines()
    assert sa_lines[0] == "task,SA,policy,seed"
    assert len(sa_lines) == 1 + 3 * 6

    imp_lines = (out / "importance.csv").read_text().splitlines()
    assert imp_lines[0] == "task,param,importance"
    assert len(imp_lines) == 1 + 2 * 3  # warm-up tasks 0..1, three params each

    summary = json.loads((out / "summary.json").read_text())
    assert summary["policy"] == "adaptive_hpo"
    assert len(summary["units"]) == 3
    assert {u["seed"] for u in summary["units"]} == {0, 1, 2}
    assert all(u["total_trials"] == 2 * 6 + 4 * 3 for u in summary["units"])
    assert 0.0 <= summary["sa_mean"] <= 1.0
    assert not (out / "robustness.csv").exists()


def test_run_prints_summary_table(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", seeds=[0])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    top = capsys.readouterr().out.splitlines()[0]
    assert "policy" in top and "SA mean+/-std" in top


def test_rerun_and_parallel_are_byte_identical(adaptive_run, tmp_path):
    cfg, out = adaptive_run
    again = tmp_path / "again"
    threaded = tmp_path / "threaded"
    assert main(["run", "--config", str(cfg), "--out", str(again)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(threaded),
                 "--parallel", "8"]) == 0
    for seed in (0, 1, 2):
        ref = (out / f"seed_{seed}" / "result.json").read_bytes()
        assert (again / f"seed_{seed}" / "result.json").read_bytes() == ref
        assert (threaded / f"seed_{seed}" / "result.json").read_bytes() == ref


def test_seeds_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path / "cfg.json")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out),
                 "--seeds", "5"]) == 0
    assert (out / "seed_5" / "result.json").exists()
    assert not (out / "seed_0").exists()


def test_permutation_run_layout_and_robustness(perm_run):
    _, out = perm_run
    for oi in (0, 1, 2):
        for seed in (0, 1):
            unit = out / f"order_{oi}" / f"seed_{seed}"
            assert (unit / "result.json").exists()
            order = json.loads((unit / "order.json").read_text())
            assert order["order_index"] == oi
            assert sorted(order["order"]) == list(range(6))

    rob_lines = (out / "robustness.csv").read_text().splitlines()
    assert rob_lines[0] == "step,mean,std,policy"
    assert len(rob_lines) == 1 + 6
    stds = [float(line.split(",")[2]) for line in rob_lines[1:]]
    assert any(s > 0 for s in stds)  # reordering genuinely moves the optima

    sa_lines = (out / "sa_curve.csv").read_text().splitlines()
    assert len(sa_lines) == 1 + 2 * 6  # base order only


# ------------------------------------------------------------------ importance


def test_importance_recomputes_stored_warmup_report(adaptive_run, tmp_path, capsys):
    _, out = adaptive_run
    unit = out / "seed_0"
    stored = json.loads((unit / "importance_task_1.json").read_text())
    rc = main([
        "importance",
        "--logs", str(unit / "task_0" / "round.csv"), str(unit / "task_1" / "round.csv"),
        "--seed", str(stored["seed"]),
        "--trees", str(stored["n_trees"]),
        "--out", str(tmp_path),
    ])
    assert rc == 0
    recomputed = json.loads((tmp_path / "importance.json").read_text())
    for name, v in stored["report"]["unary"].items():
        assert recomputed["report"]["unary"][name] == pytest.approx(v, abs=1e-12)
    out_text = capsys.readouterr().out
    assert "x0" in out_text

    csv_lines = (tmp_path / "importance.csv").read_text().splitlines()
    assert csv_lines[0] == "task,param,importance"
    assert len(csv_lines) == 1 + 3


def _factorial_history(tmp_path):
    space = ConfigSpace([
        ParamSpec("a", "integer", 0, 2),
        ParamSpec("b", "integer", 0, 1),
    ])
    hist = RoundHistory(0, space)
    tid = 0
    for a in range(3):
        for b in range(2):
            hist.append(Trial(tid, 0, Configuration({"a": a, "b": b}),
                              float(a * b + 0.5 * a), 0.0, seed=tid))
            tid += 1
    csv_path = tmp_path / "round.csv"
    save_history(hist, csv_path)
    return space, hist, csv_path


def test_importance_exact_mode_matches_direct_decomposition(tmp_path, capsys):
    space, hist, csv_path = _factorial_history(tmp_path)
    rc = main(["importance", "--logs", str(csv_path), "--exact",
               "--out", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "importance.json").read_text())
    assert payload["exact"] is True and payload["n_trees"] == 1

    forest = fit_forest([hist], space, n_trees=1, bootstrap=False)
    want = variance_decomposition(forest, space, max_order=2)
    for name in space.names:
        assert payload["report"]["unary"][name] == pytest.approx(
            want.unary[name], abs=1e-12)
    capsys.readouterr()


def test_importance_rejects_columns_outside_given_space(tmp_path, capsys):
    _, _, csv_path = _factorial_history(tmp_path)
    other = ConfigSpace([ParamSpec("lr", "continuous-log", 1e-4, 1e-1)])
    space_path = tmp_path / "space.json"
    space_path.write_text(json.dumps(other.descriptor()))
    rc = main(["importance", "--logs", str(csv_path),
               "--space", str(space_path), "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "columns not in the given space" in err and "'a'" in err


# ---------------------------------------------------------------------- report


@pytest.fixture(scope="module")
def two_policy_runs(adaptive_run, tmp_path_factory):
    cfg_path, adaptive_out = adaptive_run
    root = tmp_path_factory.mktemp("fixedrand")
    cfg = write_config(root / "cfg.json", policy={"kind": "fixed_random"})
    out = root / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return adaptive_out, out


def test_report_table_and_figures(two_policy_runs, tmp_path, capsys):
    adaptive_out, fixed_out = two_policy_runs
    rep = tmp_path / "rep"
    rc = main(["report", str(fixed_out), str(adaptive_out), "--out", str(rep)])
    assert rc == 0

    lines = (rep / "report.csv").read_text().splitlines()
    assert lines[0].startswith("policy,stream,n_runs,sa_mean")
    assert lines[1].startswith("fixed_random,") and lines[2].startswith("adaptive_hpo,")
    assert lines[1].split(",")[2] == "3"

    assert (rep / "report.txt").exists()
    assert (rep / "sa_bar.png").stat().st_size > 0
    assert (rep / "sa_curve.png").stat().st_size > 0
    assert not (rep / "robustness.png").exists()

    table = capsys.readouterr().out
    assert "fixed_random" in table and "adaptive_hpo" in table


def test_report_renders_robustness_band_for_multi_order_runs(perm_run, tmp_path):
    _, out = perm_run
    rep = tmp_path / "rep"
    assert main(["report", str(out), "--out", str(rep)]) == 0
    assert (rep / "robustness.png").stat().st_size > 0


def test_report_refuses_mixed_streams(tmp_path, capsys):
    outs = []
    for stream_seed in (0, 1):
        cfg = write_config(
            tmp_path / f"cfg{stream_seed}.json",
            stream={"kind": "drifting_function", "n_tasks": 6, "seed": stream_seed},
            policy={"kind": "fixed_random"},
            seeds=[0],
        )
        out = tmp_path / f"out{stream_seed}"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    capsys.readouterr()
    rc = main(["report", str(outs[0]), str(outs[1]), "--out", str(tmp_path / "rep")])
    assert rc == 2
    assert "mix different streams" in capsys.readouterr().err


def test_report_on_empty_directory_is_config_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty), "--out", str(tmp_path / "rep")]) == 2
    assert "no result.json" in capsys.readouterr().err
