"""Novelty-adaptation metrics computed from episode logs.

All functions are pure: they read episode records and return numbers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, InsufficientDataError

FAILED = "failed to adapt"


@dataclass(frozen=True)
class EpisodeRecord:
    index: int
    end_step: int  # global real-environment step count when the episode ended
    ret: float
    length: int
    phase: str  # "pre" or "post" (relative to novelty injection)
    updates: int  # policy updates_count when the episode ended


@dataclass(frozen=True)
class MetricReport:
    pre_novelty_performance: float
    asymptotic_adaptive_performance: float
    random_baseline_performance: float
    adaptive_efficiency_steps: Optional[int]
    update_efficiency_updates: Optional[int]
    post_novelty_steps: int
    post_novelty_episodes: int

    @property
    def failed_to_adapt(self) -> bool:
        return (
            self.adaptive_efficiency_steps is None
            or self.asymptotic_adaptive_performance <= self.random_baseline_performance
        )

    def to_json(self) -> dict:
        out = asdict(self)
        for k in ("adaptive_efficiency_steps", "update_efficiency_updates"):
            if out[k] is None:
                out[k] = FAILED
        out["asymptote_minus_random"] = self.asymptotic_adaptive_performance - self.random_baseline_performance
        out["failed_to_adapt"] = self.failed_to_adapt
        return out


def moving_average(returns: Sequence[float], window: int = 10) -> List[float]:
    """Trailing means; entry ``j`` covers ``returns[j : j + window]``.

    The first value therefore belongs to input index ``window - 1``.
    """
    if window < 1:
        raise ConfigError("window must be at least 1")
    xs = [float(x) for x in returns]
    return [math.fsum(xs[j : j + window]) / window for j in range(len(xs) - window + 1)]


def asymptotic_performance(post_records: Sequence[EpisodeRecord], tail_window: int = 100) -> float:
    if tail_window < 1:
        raise ConfigError("tail_window must be at least 1")
    if len(post_records) < tail_window:
        raise InsufficientDataError(f"need {tail_window} post-novelty episodes, have {len(post_records)}")
    return math.fsum(r.ret for r in post_records[-tail_window:]) / tail_window


def threshold_for(asymptote: float, fraction: float = 0.95) -> float:
    """Performance level counted as adapted: ``asymptote - (1 - fraction) * |asymptote|``.

    For positive asymptotes this is ``fraction * asymptote``.  The margin is
    always subtracted, so the level never lies above the asymptote and a run
    that settles there reaches it whatever the sign.
    """
    if asymptote >= 0:
        return fraction * asymptote
    return (2.0 - fraction) * asymptote


def efficiency_episode(
    post_records: Sequence[EpisodeRecord], asymptote: float, fraction: float = 0.95, window: int = 10
) -> Optional[int]:
    """Index into ``post_records`` of the first episode whose trailing mean reaches the threshold."""
    level = threshold_for(asymptote, fraction)
    for j, m in enumerate(moving_average([r.ret for r in post_records], window)):
        if m >= level:
            return j + window - 1
    return None


def adaptive_efficiency(
    post_records: Sequence[EpisodeRecord],
    asymptote: float,
    start_step: int = 0,
    fraction: float = 0.95,
    window: int = 10,
) -> Optional[int]:
    """Post-novelty real steps until the moving average reaches the threshold; ``None`` if never."""
    k = efficiency_episode(post_records, asymptote, fraction, window)
    return None if k is None else post_records[k].end_step - start_step


def update_efficiency(
    post_records: Sequence[EpisodeRecord], convergence_episode: Optional[int], start_updates: int = 0
) -> Optional[int]:
    """Policy updates between novelty injection and the end of ``convergence_episode``."""
    if convergence_episode is None:
        return None
    return post_records[convergence_episode].updates - start_updates


def plateaued(returns: Sequence[float], ma_window: int = 50, span: int = 100, tol: float = 0.01) -> bool:
    """True when the ``ma_window``-episode moving average is positive and moved
    by less than ``tol`` (relative) over the last ``span`` episodes."""
    if len(returns) < ma_window + span:
        return False
    ma_now = math.fsum(returns[-ma_window:]) / ma_window
    ma_then = math.fsum(returns[-ma_window - span : -span]) / ma_window
    if ma_now <= 0 or ma_then <= 0:
        return False
    return abs(ma_now - ma_then) < tol * ma_then


def build_report(
    records: Sequence[EpisodeRecord],
    injection_step: int,
    injection_updates: int,
    random_baseline: float,
    tail_window: int = 100,
    fraction: float = 0.95,
    window: int = 10,
) -> MetricReport:
    pre = [r for r in records if r.phase == "pre"]
    post = [r for r in records if r.phase == "post"]
    tail = pre[-tail_window:]
    pre_perf = math.fsum(r.ret for r in tail) / len(tail) if tail else float("nan")
    asym = asymptotic_performance(post, tail_window)
    k = efficiency_episode(post, asym, fraction, window)
    last_step = post[-1].end_step if post else injection_step
    return MetricReport(
        pre_novelty_performance=pre_perf,
        asymptotic_adaptive_performance=asym,
        random_baseline_performance=random_baseline,
        adaptive_efficiency_steps=None if k is None else post[k].end_step - injection_step,
        update_efficiency_updates=update_efficiency(post, k, injection_updates),
        post_novelty_steps=last_step - injection_step,
        post_novelty_episodes=len(post),
    )


def smoothed_series(records: Sequence[EpisodeRecord], window: int = 10) -> List[tuple]:
    """Plot-ready ``(end_step, moving_average)`` pairs."""
    ma = moving_average([r.ret for r in records], window)
    return [(records[j + window - 1].end_step, m) for j, m in enumerate(ma)]


def summarize(reports: Sequence[dict]) -> dict:
    """Mean and median over runs of each numeric metric; failures counted separately."""
    keys = (
        "pre_novelty_performance",
        "asymptotic_adaptive_performance",
        "random_baseline_performance",
        "adaptive_efficiency_steps",
        "update_efficiency_updates",
        "post_novelty_steps",
    )
    out = {"runs": len(reports), "failed_to_adapt": sum(bool(r["failed_to_adapt"]) for r in reports)}
    for k in keys:
        vals = [r[k] for r in reports if isinstance(r[k], (int, float)) and not isinstance(r[k], bool)]
        out[k] = {
            "mean": math.fsum(vals) / len(vals) if vals else None,
            "median": float(np.median(vals)) if vals else None,
            "n": len(vals),
        }
    return out
