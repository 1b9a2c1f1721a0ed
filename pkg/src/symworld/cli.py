"""Command-line entry point: ``python -m symworld`` or ``symworld``.

Configuration file format (INI, read with :mod:`configparser`)::

    [run]
    env = doorkey
    novelty = doorkeychange
    novelty_at = 100000        # or episodes:N
    agent = worldcloner        # space- or comma-separated for several
    seeds = 5
    mix_ratio = 0.6            # real fraction of the policy's training steps
    max_pre_steps = 200000
    out = results
    strict = false
    render = false
    workers = 1

    [agent]
    # any AdaptationConfig field, e.g.
    gamma = 0.99
    horizon = 32

Flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

from .adaptation import AdaptationConfig
from .exceptions import ConfigError, SymWorldError
from .gridenv import NoveltyKind
from .harness import (
    AGENTS,
    ExperimentSpec,
    run_experiment,
    summary_from_reports,
    summary_table,
    write_result,
)

ENVS = ("doorkey", "lavamaze", "empty")
NOVELTIES = tuple(k.value for k in NoveltyKind)
EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3

RUN_DEFAULTS = {
    "env": "doorkey",
    "novelty": "doorkeychange",
    "novelty_at": "100000",
    "agent": "worldcloner",
    "seeds": "1",
    "mix_ratio": None,
    "max_pre_steps": None,
    "out": "results",
    "strict": "false",
    "render": "false",
    "workers": "1",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="symworld", description="Run novelty-adaptation experiments on symbolic gridworlds.")
    p.add_argument("--config", type=Path, help="INI file with [run] and [agent] sections")
    p.add_argument("--env", choices=ENVS)
    p.add_argument("--novelty", choices=NOVELTIES)
    p.add_argument("--novelty-at", dest="novelty_at", help="step count or episodes:N")
    p.add_argument("--agent", nargs="+", choices=AGENTS)
    p.add_argument("--mix-ratio", dest="mix_ratio", type=float, help="real fraction of training steps (0..1]")
    p.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    p.add_argument("--max-pre-steps", dest="max_pre_steps", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--strict", action="store_true", default=None, help="exit 3 if any run failed to adapt")
    p.add_argument("--render", action="store_true", default=None, help="print the final grid of each run")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    return p


def _truthy(v: str) -> bool:
    v = str(v).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _coerce_agent_field(name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(AdaptationConfig)}
    if name not in fields:
        raise ConfigError(f"unknown [agent] key {name!r}")
    default = getattr(AdaptationConfig(), name)
    try:
        if isinstance(default, bool):
            return _truthy(raw)
        if isinstance(default, str):
            return raw
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"[agent] {name} = {raw!r} is not a number") from None


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into one settings dict."""
    run = dict(RUN_DEFAULTS)
    agent_overrides: dict = {}
    if args.config is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            if not cp.read(args.config):
                raise ConfigError(f"cannot read config file {args.config}")
        except configparser.Error as e:
            raise ConfigError(str(e)) from None
        for section in cp.sections():
            if section not in ("run", "agent"):
                raise ConfigError(f"unknown config section [{section}]")
        if cp.has_section("run"):
            for k, v in cp.items("run"):
                if k not in run:
                    raise ConfigError(f"unknown [run] key {k!r}")
                run[k] = v
        if cp.has_section("agent"):
            for k, v in cp.items("agent"):
                agent_overrides[k] = _coerce_agent_field(k, v)
    for k in run:
        v = getattr(args, k, None)
        if v is not None:
            run[k] = v
    agents = run["agent"]
    if isinstance(agents, str):
        agents = agents.replace(",", " ").split()
    for a in agents:
        if a not in AGENTS:
            raise ConfigError(f"unknown agent {a!r}")
    for key, allowed in (("env", ENVS), ("novelty", NOVELTIES)):
        if run[key] not in allowed:
            raise ConfigError(f"unknown {key} {run[key]!r}; choose from {allowed}")
    if run["mix_ratio"] is not None:
        if "baseline" in agents:
            raise ConfigError("--mix-ratio applies only to the worldcloner agent; the baseline has no imagination")
        agent_overrides["real_fraction"] = float(run["mix_ratio"])
    if run["max_pre_steps"] is not None:
        agent_overrides["max_pre_steps"] = int(run["max_pre_steps"])
    try:
        seeds, workers = int(run["seeds"]), int(run["workers"])
    except ValueError:
        raise ConfigError("seeds and workers must be integers") from None
    if seeds < 1 or workers < 1:
        raise ConfigError("seeds and workers must be positive")
    return {
        "env": run["env"],
        "novelty": run["novelty"],
        "novelty_at": str(run["novelty_at"]),
        "agents": agents,
        "seeds": seeds,
        "out": Path(run["out"]),
        "strict": run["strict"] if isinstance(run["strict"], bool) else _truthy(run["strict"]),
        "render": run["render"] if isinstance(run["render"], bool) else _truthy(run["render"]),
        "workers": workers,
        "agent_overrides": agent_overrides,
    }


def experiment_matrix(settings: dict) -> List[ExperimentSpec]:
    specs = []
    for agent in settings["agents"]:
        for seed in range(settings["seeds"]):
            cfg = AdaptationConfig(seed=seed, **settings["agent_overrides"])
            specs.append(
                ExperimentSpec(
                    settings["env"], settings["novelty"], settings["novelty_at"], agent, seed, cfg, settings["render"]
                )
            )
    return specs


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the experiment matrix and return the exit code."""
    try:
        settings = resolve(build_parser().parse_args(argv))
        specs = experiment_matrix(settings)
    except (ConfigError, TypeError) as e:
        print(f"symworld: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out: Path = settings["out"]
    try:
        if settings["workers"] > 1 and len(specs) > 1:
            with ProcessPoolExecutor(max_workers=settings["workers"]) as pool:
                results = list(pool.map(run_experiment, specs))
        else:
            results = [run_experiment(s) for s in specs]
    except TimeoutError as e:
        print(f"symworld: {e}", file=sys.stderr)
        return EXIT_FAILED if settings["strict"] else 1
    except SymWorldError as e:
        print(f"symworld: {e}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(e, ConfigError) else 1
    for r in results:
        write_result(r, out)
        if r.render is not None:
            print(f"{r.spec.stem}:\n{r.render}\n")
    summary = summary_from_reports([r.report for r in results])
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    table = summary_table(summary)
    (out / "summary.txt").write_text(table)
    print(table, end="")
    if settings["strict"] and any(r.failed_to_adapt for r in results):
        return EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())
