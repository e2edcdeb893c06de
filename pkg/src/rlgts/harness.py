"""Run synthesis methods over benchmark suites and aggregate the outcomes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from .baselines import QOnlyConfig, bandit_synthesize, best_first, bfs_enumerate, mcmc_synthesize, qonly_synthesize
from .benchgen import GeneratedBenchmark, load_suite
from .budget import Budget, SynthesisResult
from .env import SynthesisTask
from .search import RLGTSConfig, synthesize

METHODS = ("rlgts", "qonly", "bandit", "bfs", "bestfirst", "mcmc")
GROUP_KEYS = ("length", "instructions", "slack")
QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)
REPORT_FORMAT_VERSION = 1


class UsageError(ValueError):
    """Bad method name, unreadable suite or an invalid depth cap."""


def budget_label(max_proposals: int) -> str:
    """Short label for a proposal budget: 20000 -> '20k', 1000000 -> '1m'."""
    for div, suffix in ((1_000_000, "m"), (1_000, "k")):
        if max_proposals % div == 0:
            return f"{max_proposals // div}{suffix}"
    return str(max_proposals)


@dataclass(frozen=True)
class RunConfig:
    method: str
    suite: str
    max_proposals: int = Budget.max_proposals
    max_memory_bytes: int = Budget.max_memory_bytes
    max_wall_seconds: float = Budget.max_wall_seconds
    depth_cap: Optional[int] = None  # overrides each task's p
    seed: int = 0
    out: Optional[str] = None
    label: Optional[str] = None
    workers: int = 1
    record_wall_time: bool = False
    allow_short_cap: bool = False  # permit p < T_gt, for depth-cap studies

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.max_proposals < 1:
            raise UsageError("budget must be at least one proposal")
        if self.depth_cap is not None and self.depth_cap < 1:
            raise UsageError("depth cap must be at least 1")
        if self.workers < 1:
            raise UsageError("need at least one worker")

    @property
    def budget(self) -> Budget:
        return Budget(self.max_proposals, self.max_memory_bytes, self.max_wall_seconds)

    @property
    def name(self) -> str:
        """Row label: the method, suffixed with the budget when it differs from the default."""
        if self.label:
            return self.label
        if self.max_proposals != Budget.max_proposals:
            return f"{self.method}-{budget_label(self.max_proposals)}"
        return self.method

    def describe(self) -> dict[str, Any]:
        """Fields that determine the results; output location and parallelism are excluded."""
        d = asdict(self)
        for k in ("out", "workers", "label"):
            d.pop(k)
        d["suite"] = Path(self.suite).name
        return d


def task_rng(seed: int, task_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(task_id.encode())])


def run_method(method: str, task: SynthesisTask, budget: Budget, rng: np.random.Generator,
               record_wall_time: bool = False) -> SynthesisResult:
    if method == "rlgts":
        return synthesize(task, RLGTSConfig(), budget, rng, record_wall_time)
    if method == "qonly":
        return qonly_synthesize(task, QOnlyConfig(), budget, rng, record_wall_time=record_wall_time)
    if method == "bandit":
        return bandit_synthesize(task, budget, rng, record_wall_time=record_wall_time)
    if method == "bfs":
        return bfs_enumerate(task, budget, record_wall_time=record_wall_time)
    if method == "bestfirst":
        return best_first(task, budget, record_wall_time=record_wall_time)
    if method == "mcmc":
        return mcmc_synthesize(task, budget, rng, record_wall_time=record_wall_time)
    raise UsageError(f"unknown method {method!r}")


def task_groups(task: SynthesisTask) -> dict[str, int]:
    return {
        "length": int(task.gt_length),
        "instructions": len(task.instructions),
        "slack": task.max_length - int(task.gt_length),
    }


def _quantiles(values: Sequence[int]) -> dict[str, Optional[float]]:
    if not values:
        return {f"q{round(q * 100)}": None for q in QUANTILES}
    qs = np.quantile(np.asarray(values, dtype=np.float64), QUANTILES)
    return {f"q{round(q * 100)}": float(v) for q, v in zip(QUANTILES, qs)}


@dataclass
class AggregateReport:
    name: str
    config: dict[str, Any]
    suite_digest: str
    results: list[SynthesisResult] = field(default_factory=list)
    groups: list[dict[str, int]] = field(default_factory=list)

    @property
    def n_tasks(self) -> int:
        return len(self.results)

    @property
    def n_solved(self) -> int:
        return sum(r.solved for r in self.results)

    @property
    def solve_fraction(self) -> float:
        return self.n_solved / self.n_tasks if self.results else 0.0

    def proposal_quantiles(self) -> dict[str, Optional[float]]:
        """Quantiles of proposals-to-solve over the solved tasks."""
        return _quantiles([r.proposals_used for r in self.results if r.solved])

    def grouped(self, key: str) -> dict[int, list[SynthesisResult]]:
        if key not in GROUP_KEYS:
            raise UsageError(f"unknown group key {key!r}; choose from {', '.join(GROUP_KEYS)}")
        out: dict[int, list[SynthesisResult]] = {}
        for r, g in zip(self.results, self.groups):
            out.setdefault(g[key], []).append(r)
        return dict(sorted(out.items()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "name": self.name,
            "config": self.config,
            "suite_digest": self.suite_digest,
            "summary": {
                "n_tasks": self.n_tasks,
                "n_solved": self.n_solved,
                "solve_fraction": self.solve_fraction,
                "proposals_to_solve": self.proposal_quantiles(),
            },
            "tasks": [dict(r.to_dict(), groups=g) for r, g in zip(self.results, self.groups)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AggregateReport":
        if d.get("format_version") != REPORT_FORMAT_VERSION:
            raise UsageError(f"unsupported report format {d.get('format_version')!r}")
        results, groups = [], []
        for rec in d["tasks"]:
            rec = dict(rec)
            groups.append(rec.pop("groups"))
            results.append(SynthesisResult.from_dict(rec))
        return cls(d["name"], d["config"], d["suite_digest"], results, groups)

    @classmethod
    def load(cls, path: str | Path) -> "AggregateReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _read_suite(path: str) -> tuple[GeneratedBenchmark, str]:
    try:
        raw = Path(path).read_bytes()
        bench = load_suite(path)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"cannot read suite {path}: {e}") from e
    return bench, hashlib.sha256(raw).hexdigest()


def _prepare(config: RunConfig, bench: GeneratedBenchmark) -> list[SynthesisTask]:
    tasks = []
    for task in bench.tasks:
        if config.depth_cap is not None:
            task = task.with_depth_cap(config.depth_cap)
        if task.gt_length is not None and task.max_length < task.gt_length and not config.allow_short_cap:
            raise UsageError(f"{task.task_id}: depth cap {task.max_length} is below its length {task.gt_length}")
        tasks.append(task)
    return tasks


def _run_one(args) -> SynthesisResult:
    method, task, budget, seed, record_wall_time = args
    return run_method(method, task, budget, task_rng(seed, task.task_id), record_wall_time)


def report_path(out_dir: str | Path, name: str, seed: int) -> Path:
    return Path(out_dir) / f"{name}-s{seed}.json"


def write_report(report: AggregateReport, out_dir: str | Path) -> Path:
    """Write ``<name>-s<seed>.json`` under ``out_dir``; never overwrites an existing report."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    path = report_path(out_dir, report.name, report.config["seed"])
    with open(path, "x") as fh:
        fh.write(report.to_json())
    return path


def run_suite(config: RunConfig, progress: Callable[[SynthesisResult], None] | None = None) -> AggregateReport:
    if config.out is not None:
        target = report_path(config.out, config.name, config.seed)
        if target.exists():
            raise FileExistsError(17, "report exists", str(target))
    bench, digest = _read_suite(config.suite)
    tasks = _prepare(config, bench)
    jobs = [(config.method, t, config.budget, config.seed, config.record_wall_time) for t in tasks]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
        if progress:
            for r in results:
                progress(r)
    else:
        results = []
        for job in jobs:
            results.append(_run_one(job))
            if progress:
                progress(results[-1])
    report = AggregateReport(config.name, config.describe(), digest, results, [task_groups(t) for t in tasks])
    if config.out is not None:
        write_report(report, config.out)
    return report


SWEEP_COLUMNS = ("method", "group_key", "group", "solve_fraction", "n_tasks", "n_solved") + tuple(
    f"q{round(q * 100)}" for q in QUANTILES)


@dataclass
class SweepReport:
    reports: list[AggregateReport]
    rows: list[dict[str, Any]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: "" if row[k] is None else row[k] for k in SWEEP_COLUMNS})
        return buf.getvalue()


def group_rows(reports: Iterable[AggregateReport], group_by: Sequence[str] = GROUP_KEYS) -> list[dict[str, Any]]:
    """Long-format rows, one per (report, key, group value) that has at least one task.

    Reports sharing a name (e.g. one method over several suites) are pooled.
    """
    pooled: dict[str, tuple[list, list]] = {}
    for rep in reports:
        res, grp = pooled.setdefault(rep.name, ([], []))
        res.extend(rep.results)
        grp.extend(rep.groups)
    rows = []
    for name, (results, groups) in pooled.items():
        merged = AggregateReport(name, {}, "", results, groups)
        for key in group_by:
            for value, members in merged.grouped(key).items():
                solved = [r.proposals_used for r in members if r.solved]
                rows.append({
                    "method": name, "group_key": key, "group": value,
                    "solve_fraction": len(solved) / len(members), "n_tasks": len(members),
                    "n_solved": len(solved), **_quantiles(solved),
                })
    return rows


def sweep(configs: Sequence[RunConfig], group_by: Sequence[str] = GROUP_KEYS,
          progress: Callable[[SynthesisResult], None] | None = None) -> SweepReport:
    if not configs:
        raise UsageError("sweep needs at least one configuration")
    reports = [run_suite(c, progress) for c in configs]
    return SweepReport(reports, group_rows(reports, group_by))


def format_report(report: AggregateReport) -> str:
    """Plain-text summary with one line per task."""
    q = report.proposal_quantiles()
    lines = [
        f"{report.name}: solved {report.n_solved}/{report.n_tasks} ({report.solve_fraction:.1%})",
        "proposals to solve: " + ", ".join(f"{k}={'-' if v is None else f'{v:.0f}'}" for k, v in q.items()),
        "",
        f"{'task':<28} {'solved':<7} {'proposals':>9} {'reward':>9}  stop",
    ]
    for r in report.results:
        lines.append(f"{r.task_id:<28} {str(r.solved):<7} {r.proposals_used:>9} {r.best_reward:>9.3f}  {r.stop_reason}")
    return "\n".join(lines) + "\n"

