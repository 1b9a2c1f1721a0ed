"""Experiment runner and result files.

One experiment is one (agent, environment, novelty, seed) tuple.  Each one
writes three files named ``<agent>_<env>_<novelty>_seed<k>``:

``.csv``
    per-step event log (:data:`CSV_HEADER`), imagined steps included;
``.json``
    metric report, phase reports and the resolved configuration;
``_series.csv``
    ``(step, ma10)`` pairs of the 10-episode moving-average return.

Every file carries :data:`SCHEMA_VERSION`, either in the JSON body or as a
leading ``# schema_version=...`` comment line in the CSVs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .adaptation import AdaptationConfig, RunLog, run_baseline, run_worldcloner
from .exceptions import ConfigError, InsufficientDataError
from .gridenv import NoveltySpec, build_env
from .metrics import FAILED, build_report, smoothed_series, summarize

SCHEMA_VERSION = "1.0"
CSV_HEADER = ("step", "episode", "phase", "provenance", "action", "reward", "terminal", "rule_count", "detections", "updates")
AGENTS = ("worldcloner", "baseline")


@dataclass(frozen=True)
class ExperimentSpec:
    env: str
    novelty: str
    novelty_at: str
    agent: str
    seed: int
    config: AdaptationConfig = field(default_factory=AdaptationConfig)
    render: bool = False

    def __post_init__(self):
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; choose from {AGENTS}")
        # fail fast on bad names before any worker starts
        build_env(self.env, NoveltySpec.parse(self.novelty, self.novelty_at))
        self.config.validate()

    @property
    def stem(self) -> str:
        return f"{self.agent}_{self.env}_{self.novelty}_seed{self.seed}"

    def to_json(self) -> dict:
        return {
            "env": self.env,
            "novelty": self.novelty,
            "novelty_at": str(self.novelty_at),
            "agent": self.agent,
            "seed": self.seed,
            "config": self.config.to_json(),
        }


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    csv_text: str
    series_text: str
    report: dict
    render: Optional[str] = None

    @property
    def failed_to_adapt(self) -> bool:
        metrics = self.report.get("metrics")
        return bool(metrics and metrics["failed_to_adapt"])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def log_to_csv(log: RunLog) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in log.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def series_to_csv(log: RunLog, window: int = 10) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("step", f"ma{window}"))
    for step, m in smoothed_series(log.episodes, window):
        w.writerow((step, repr(m)))
    return buf.getvalue()


def _truncated_metrics(log: RunLog) -> dict:
    """Metrics for a post phase too short to define an asymptote: counted as a failure."""
    post = [r for r in log.episodes if r.phase == "post"]
    pre = [r.ret for r in log.episodes if r.phase == "pre"][-100:]
    return {
        "pre_novelty_performance": sum(pre) / len(pre) if pre else None,
        "asymptotic_adaptive_performance": None,
        "random_baseline_performance": log.random_baseline,
        "adaptive_efficiency_steps": FAILED,
        "update_efficiency_updates": FAILED,
        "post_novelty_steps": (post[-1].end_step if post else log.injection_step) - log.injection_step,
        "post_novelty_episodes": len(post),
        "asymptote_minus_random": None,
        "failed_to_adapt": True,
    }


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run one experiment to completion; deterministic in ``spec``."""
    cfg = spec.config
    env = build_env(spec.env, NoveltySpec.parse(spec.novelty, spec.novelty_at), seed=spec.seed)
    runner = run_worldcloner if spec.agent == "worldcloner" else run_baseline
    bundle, pre, post, log = runner(env, cfg)
    metrics = None
    if post is not None:
        try:
            metrics = build_report(log.episodes, log.injection_step, log.injection_updates, log.random_baseline).to_json()
        except InsufficientDataError:
            metrics = _truncated_metrics(log)
    report = {
        "schema_version": SCHEMA_VERSION,
        "experiment": spec.to_json(),
        "metrics": metrics,
        "pre_phase": pre.to_json(),
        "post_phase": None if post is None else post.to_json(),
        "injection_step": log.injection_step,
        "injection_updates": log.injection_updates,
        "final_rule_count": bundle.model.n_rules if bundle.model is not None else None,
    }
    return ExperimentResult(
        spec,
        log_to_csv(log),
        series_to_csv(log),
        report,
        env.render() if spec.render and env.state is not None else None,
    )


def write_result(result: ExperimentResult, out: Path) -> List[Path]:
    out.mkdir(parents=True, exist_ok=True)
    stem = result.spec.stem
    paths = [out / f"{stem}.csv", out / f"{stem}.json", out / f"{stem}_series.csv"]
    paths[0].write_text(result.csv_text)
    paths[1].write_text(json.dumps(result.report, indent=2, sort_keys=True) + "\n")
    paths[2].write_text(result.series_text)
    return paths


def summary_from_reports(reports: List[dict]) -> dict:
    """Group per-run reports by (agent, env, novelty) and aggregate each group."""
    groups: dict = {}
    for r in reports:
        e = r["experiment"]
        groups.setdefault((e["agent"], e["env"], e["novelty"]), []).append(r)
    rows = []
    for (agent, env, novelty), rs in sorted(groups.items()):
        with_metrics = [r["metrics"] for r in rs if r["metrics"] is not None]
        row = {"agent": agent, "env": env, "novelty": novelty, "seeds": sorted(r["experiment"]["seed"] for r in rs)}
        row.update(summarize(with_metrics) if with_metrics else {"runs": len(rs), "failed_to_adapt": 0})
        rows.append(row)
    return {"schema_version": SCHEMA_VERSION, "groups": rows}


def summary_from_dir(out: Path) -> dict:
    """Recompute the summary from the per-run JSON files in ``out``."""
    reports = []
    for p in sorted(out.glob("*.json")):
        if p.name == "summary.json":
            continue
        reports.append(json.loads(p.read_text()))
    return summary_from_reports(reports)


def _cell(stat: Optional[dict]) -> str:
    if not stat or stat.get("mean") is None:
        return "-"
    m = stat["mean"]
    return f"{m:.3g}" if abs(m) < 1e4 else f"{m:.2E}"


def summary_table(summary: dict) -> str:
    """Plain-text table in the shape of a results table: one row per group, means over seeds."""
    head = ("agent", "env", "novelty", "runs", "pre perf", "asymptote", "random", "adaptive eff", "update eff", "failed")
    lines = [head]
    for g in summary["groups"]:
        lines.append(
            (
                g["agent"],
                g["env"],
                g["novelty"],
                str(g["runs"]),
                _cell(g.get("pre_novelty_performance")),
                _cell(g.get("asymptotic_adaptive_performance")),
                _cell(g.get("random_baseline_performance")),
                _cell(g.get("adaptive_efficiency_steps")),
                _cell(g.get("update_efficiency_updates")),
                str(g["failed_to_adapt"]),
            )
        )
    widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in lines) + "\n"

