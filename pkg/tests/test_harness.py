import csv
import io
import json

import pytest

from rlgts.benchgen import BenchmarkSpec, build_suite, save_suite
from rlgts.cli import main
from rlgts.harness import (
    AggregateReport, RunConfig, UsageError, budget_label, format_report, group_rows, run_suite, sweep, task_rng,
)


@pytest.fixture(scope="module")
def suites(tmp_path_factory):
    root = tmp_path_factory.mktemp("suites")
    out = {}
    for k in (2, 3, 17):
        path = root / f"L1-I{k}.json"
        save_suite(build_suite(BenchmarkSpec(length=1, max_length=1, count=3, seed=k, n_instructions=k)), path)
        out[k] = str(path)
    path = root / "L2.json"
    save_suite(build_suite(BenchmarkSpec(length=2, max_length=3, count=3, seed=1)), path)
    out["L2"] = str(path)
    return out


def test_bfs_solves_reachable_suite(suites):
    report = run_suite(RunConfig("bfs", suites[2]))
    assert report.solve_fraction == 1.0
    assert all(r.proposals_used <= 128 for r in report.results)


def test_reports_are_byte_identical(suites):
    config = RunConfig("mcmc", suites["L2"], max_proposals=300, seed=4)
    assert run_suite(config).to_json() == run_suite(config).to_json()


def test_solve_fraction_matches_recount(suites):
    report = run_suite(RunConfig("bandit", suites["L2"], max_proposals=200))
    d = json.loads(report.to_json())
    solved = sum(t["solved"] for t in d["tasks"])
    assert d["summary"]["solve_fraction"] == solved / len(d["tasks"])
    assert 0 <= report.solve_fraction <= 1


def test_task_rng_is_order_independent():
    a = task_rng(3, "L3-I2-V4-s1-0004").random(4)
    assert a.tolist() == task_rng(3, "L3-I2-V4-s1-0004").random(4).tolist()
    assert a.tolist() != task_rng(3, "L3-I2-V4-s1-0005").random(4).tolist()


def test_sweep_instruction_counts(suites):
    configs = [RunConfig(m, suites[k], max_proposals=2000) for m in ("bfs", "bestfirst") for k in (2, 3, 17)]
    rep = sweep(configs, group_by=["instructions"])
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    for method in ("bfs-2k", "bestfirst-2k"):
        mine = [r for r in rows if r["method"] == method]
        assert sorted(int(r["group"]) for r in mine) == [2, 3, 17]
        assert all(int(r["n_tasks"]) == 3 for r in mine)


def test_empty_groups_are_omitted(suites):
    report = run_suite(RunConfig("bfs", suites[2]))
    rows = group_rows([report])
    assert {(r["group_key"], r["group"]) for r in rows} == {("length", 1), ("instructions", 2), ("slack", 0)}


def test_raised_budget_gets_distinct_label(suites):
    assert RunConfig("mcmc", suites[2], max_proposals=1_000_000).name == "mcmc-1m"
    assert RunConfig("mcmc", suites[2]).name == "mcmc"
    assert budget_label(1234) == "1234"


def test_usage_errors(tmp_path, suites):
    with pytest.raises(UsageError):
        RunConfig("nope", suites[2])
    with pytest.raises(UsageError):
        run_suite(RunConfig("bfs", str(tmp_path / "missing.json")))
    with pytest.raises(UsageError):
        run_suite(RunConfig("bfs", suites["L2"], depth_cap=1))
    report = run_suite(RunConfig("bfs", suites["L2"], depth_cap=1, allow_short_cap=True, max_proposals=50))
    assert report.groups[0]["slack"] == -1


def test_report_files_are_append_only(tmp_path, suites):
    config = RunConfig("bfs", suites[3], out=str(tmp_path))
    report = run_suite(config)
    path = tmp_path / "bfs-s0.json"
    assert path.read_text() == report.to_json()
    with pytest.raises(FileExistsError):
        run_suite(config)
    back = AggregateReport.load(path)
    assert back.to_json() == report.to_json()
    assert "solved 3/3" in format_report(back)


def test_worker_pool_matches_serial(suites):
    serial = run_suite(RunConfig("mcmc", suites["L2"], max_proposals=200))
    pooled = run_suite(RunConfig("mcmc", suites["L2"], max_proposals=200, workers=2))
    assert serial.to_json() == pooled.to_json()


def test_cli_round_trip(tmp_path, capsys):
    suite = tmp_path / "s.json"
    assert main(["gen", "--length", "1", "--count", "2", "--seed", "1", "--out", str(suite)]) == 0
    assert main(["run", "--method", "bfs", "--suite", str(suite), "--out", str(tmp_path / "r")]) == 0
    assert "solved 2/2" in capsys.readouterr().out
    assert main(["show", str(tmp_path / "r" / "bfs-s0.json")]) == 0
    assert "bfs: solved 2/2" in capsys.readouterr().out
    table = tmp_path / "t.csv"
    assert main(["sweep", "--method", "bfs", "--method", "bestfirst", "--suite", str(suite),
                 "--group-by", "length", "--out", str(table)]) == 0
    assert table.read_text().splitlines()[0].startswith("method,group_key,group,solve_fraction,n_tasks")
    assert len(table.read_text().splitlines()) == 3


def test_cli_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--method", "bfs", "--suite", str(tmp_path / "missing.json")])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["run", "--method", "magic", "--suite", "x"])
    suite = tmp_path / "s.json"
    main(["gen", "--length", "1", "--count", "1", "--out", str(suite)])
    with pytest.raises(SystemExit):
        main(["gen", "--length", "1", "--count", "1", "--out", str(suite)])
    assert "refusing to overwrite" in capsys.readouterr().err
