"""Training, monitoring and imagination-assisted adaptation.

One step loop (:class:`_Loop`) drives both agent kinds.  The world-model
agent moves through three modes:

``learn``
    policy and rule model train on real experience;
``frozen``
    both stop learning and the detector compares every real step with the
    rule model's prediction;
``adapt``
    after a detection both learn again and every real step is followed by
    the mixing schedule's share of imagined steps.

The model-free baseline stays in ``learn`` throughout and never owns a rule
model.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from .detector import DetectionEvent, DetectorState
from .exceptions import ConfigError
from .features import SymbolicState
from .gridenv import ACTIONS, GridEnv
from .metrics import EpisodeRecord, plateaued
from .policy import Mode, TabularQPolicy, UpdateBuffer
from .rules import UNKNOWN, IntervalRuleModel
from .transition import Provenance, Transition
from .validation import check_fraction, check_positive_int


RANDOM_BASELINE_EPISODES = 100


class MixSchedule:
    """How many imagined steps each real step pays for.

    Keeps an exact rational carry, so after ``k`` real steps the imagined
    total is ``floor(k * imagined_fraction / real_fraction)``.
    """

    def __init__(self, real_fraction: float = 0.6, imagined_fraction: Optional[float] = None):
        real_fraction = check_fraction("real_fraction", real_fraction)
        if imagined_fraction is None:
            imagined_fraction = 1.0 - real_fraction
        imagined_fraction = check_fraction("imagined_fraction", imagined_fraction)
        if real_fraction <= 0:
            raise ConfigError("real_fraction must be positive")
        real = Fraction(real_fraction).limit_denominator(10**6)
        imagined = Fraction(imagined_fraction).limit_denominator(10**6)
        if real + imagined != 1:
            raise ConfigError("real and imagined fractions must sum to 1")
        self.real_fraction = float(real)
        self.imagined_fraction = float(imagined)
        self._per_real = imagined / real
        self._carry = Fraction(0)
        self.real_steps = 0
        self.imagined_steps = 0

    @property
    def eta(self) -> float:
        """Real-to-imagined ratio (infinite without imagination)."""
        return math.inf if self.imagined_fraction == 0 else self.real_fraction / self.imagined_fraction

    def owed(self) -> int:
        """Record one real step and return the imagined steps now due."""
        self.real_steps += 1
        self._carry += self._per_real
        n = math.floor(self._carry)
        self._carry -= n
        self.imagined_steps += n
        return n


class StartStatePool:
    """Recently visited real states, the seeds of imagined rollouts."""

    def __init__(self, capacity: int = 1024):
        self.capacity = check_positive_int("pool capacity", capacity)
        self._states: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._states)

    def add(self, state: SymbolicState) -> None:
        self._states.append(state)

    def sample(self, rng: np.random.Generator) -> SymbolicState:
        if not self._states:
            raise ConfigError("start-state pool is empty")
        return self._states[int(rng.integers(len(self._states)))]


def imagined_step(model: IntervalRuleModel, policy: TabularQPolicy, state: SymbolicState, rng) -> Transition:
    """One policy step inside the model; unknown outcomes become zero-reward self-loops."""
    action = ACTIONS[policy.select_action(state, Mode.EXPLORE, rng=rng, advance=False)]
    pred = model.predict_one(state, action)
    if pred is UNKNOWN or pred.next_state is None:
        return Transition(state, action, state, 0.0, False, Provenance.IMAGINED)
    return Transition(state, action, pred.next_state, pred.reward, pred.terminal, Provenance.IMAGINED)


def imagine_rollout(
    model: IntervalRuleModel, policy: TabularQPolicy, start: SymbolicState, horizon: int, rng=None
) -> List[Transition]:
    """Roll the exploring policy through ``model`` from ``start``.

    Stops after ``horizon`` steps or at the first terminal prediction.
    """
    rng = np.random.default_rng() if rng is None else rng
    out: List[Transition] = []
    s = start
    for _ in range(horizon):
        t = imagined_step(model, policy, s, rng)
        out.append(t)
        if t.terminal:
            break
        s = t.next_state
    return out


class _Imagination:
    """Contiguous rollouts consumed a few steps at a time.

    The rollout in progress survives between real steps, so the schedule's
    trickle of owed steps still forms trajectories of up to ``horizon`` steps.
    Each chunk reads the model as it stands after the latest real update.
    """

    def __init__(self, model, policy, pool: StartStatePool, horizon: int, rng):
        self.model, self.policy, self.pool = model, policy, pool
        self.horizon = horizon
        self.rng = rng
        self._state: Optional[SymbolicState] = None
        self._depth = 0
        self.rollouts = 0

    def take(self, n: int) -> List[Transition]:
        out = []
        if self.horizon == 0:
            return out
        for _ in range(n):
            if self._state is None or self._depth >= self.horizon:
                self._state = self.pool.sample(self.rng)
                self._depth = 0
                self.rollouts += 1
            t = imagined_step(self.model, self.policy, self._state, self.rng)
            out.append(t)
            self._depth += 1
            self._state = None if t.terminal else t.next_state
        return out


# -- configuration & reports ---------------------------------------------------


@dataclass
class AdaptationConfig:
    seed: int = 0
    # policy
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_floor: float = 0.05
    epsilon_decay_steps: int = 5000
    initial_value: float = 1.0  # optimistic: above any reachable return
    buffer_capacity: int = 4096
    update_period: int = 4
    update_clock: str = "real"  # what update_period counts: "insertions" (real + imagined) or "real"
    batch_size: int = 16
    # imagination
    real_fraction: float = 0.6
    horizon: int = 32
    pool_capacity: int = 1024
    # detection
    detector_n: int = 2
    # convergence
    ma_window: int = 50
    convergence_span: int = 100
    convergence_tol: float = 0.01
    probe_steps: int = 1000
    probe_threshold: float = 0.01
    probe_interval: int = 1000
    max_pre_steps: int = 200_000
    max_post_steps: int = 300_000
    min_post_episodes: int = 100
    monitor_steps: int = 0  # extra frozen steps before injection / phase end

    def validate(self) -> "AdaptationConfig":
        for name in ("epsilon_decay_steps", "horizon", "monitor_steps"):
            check_positive_int(name, getattr(self, name), allow_zero=True)
        for name in (
            "buffer_capacity",
            "update_period",
            "batch_size",
            "pool_capacity",
            "detector_n",
            "ma_window",
            "convergence_span",
            "probe_steps",
            "probe_interval",
            "max_pre_steps",
            "max_post_steps",
            "min_post_episodes",
        ):
            check_positive_int(name, getattr(self, name))
        if self.update_clock not in ("insertions", "real"):
            raise ConfigError("update_clock must be 'insertions' or 'real'")
        check_fraction("real_fraction", self.real_fraction)
        if self.real_fraction == 0:
            raise ConfigError("real_fraction must be positive")
        check_fraction("probe_threshold", self.probe_threshold)
        return self

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class PhaseReport:
    phase: str
    real_steps: int = 0
    imagined_steps: int = 0
    policy_updates: int = 0
    episodes: int = 0
    converged: bool = False
    policy_converged_at: Optional[int] = None  # global step
    model_converged_at: Optional[int] = None
    detections: List[DetectionEvent] = field(default_factory=list)
    rule_count: int = 0
    last_probe_error: Optional[float] = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["detections"] = [e.to_json() for e in self.detections]
        return d


class Stage(str, enum.Enum):
    LEARN = "learn"
    FROZEN = "frozen"
    ADAPT = "adapt"


@dataclass
class AgentBundle:
    """Everything one agent owns across phases."""

    policy: TabularQPolicy
    buffer: UpdateBuffer
    model: Optional[IntervalRuleModel] = None
    detector: Optional[DetectorState] = None
    schedule: Optional[MixSchedule] = None
    pool: Optional[StartStatePool] = None
    # the step loop survives between phases (imagination cursor, update counter)
    loop: Optional["_Loop"] = field(default=None, repr=False)

    @classmethod
    def build(cls, config: AdaptationConfig, world_model: bool = True) -> "AgentBundle":
        config.validate()
        policy = TabularQPolicy(
            n_actions=len(ACTIONS),
            alpha=config.alpha,
            gamma=config.gamma,
            epsilon_start=config.epsilon_start,
            epsilon_floor=config.epsilon_floor,
            epsilon_decay_steps=config.epsilon_decay_steps,
            initial_value=config.initial_value,
            seed=config.seed,
        )
        buffer = UpdateBuffer(config.buffer_capacity)
        if not world_model:
            return cls(policy, buffer)
        return cls(
            policy,
            buffer,
            model=IntervalRuleModel(),
            detector=DetectorState(config.detector_n),
            schedule=MixSchedule(config.real_fraction),
            pool=StartStatePool(config.pool_capacity),
        )

    @property
    def has_world_model(self) -> bool:
        return self.model is not None


# -- probing -------------------------------------------------------------------


def mechanics_copy(env: GridEnv, seed: int) -> GridEnv:
    """Fresh environment with ``env``'s current mechanics and no novelty schedule."""
    return GridEnv(env.layout, seed=seed, lava_terminal=env.lava_terminal, door_key=env.door_key, max_steps=env.max_steps)


def probe_error(model: IntervalRuleModel, env: GridEnv, n_steps: int = 1000, seed: int = 0) -> float:
    """Fraction of ``n_steps`` random-policy steps the model mispredicts.

    Runs on a private copy of ``env``; an ``UNKNOWN`` prediction counts as wrong.
    """
    probe = mechanics_copy(env, seed)
    rng = np.random.default_rng([seed, 7])
    s = probe.reset()
    wrong = 0
    for _ in range(n_steps):
        a = ACTIONS[int(rng.integers(len(ACTIONS)))]
        pred = model.predict_one(s, a)
        s2, r, term, trunc = probe.step(a)
        wrong += not pred.matches(s2, r, term)
        s = probe.reset() if term or trunc else s2
    return wrong / n_steps


def model_learning_curve(
    env: GridEnv,
    n_steps: int,
    probe_every: int = 100,
    probe_steps: int = 1000,
    seed: int = 0,
    stop_at_zero: bool = False,
) -> Tuple[IntervalRuleModel, List[Tuple[int, float]]]:
    """Train a rule model on a uniform-random policy and probe it periodically.

    Returns the model and ``(training_step, probe_error)`` pairs, one per
    ``probe_every`` steps.  With ``stop_at_zero`` training ends at the first
    error-free probe.
    """
    check_positive_int("probe_every", probe_every)
    trainer = mechanics_copy(env, seed)
    rng = np.random.default_rng([seed, 3])
    model = IntervalRuleModel()
    curve: List[Tuple[int, float]] = []
    s = trainer.reset()
    for step in range(1, n_steps + 1):
        a = ACTIONS[int(rng.integers(len(ACTIONS)))]
        s2, r, term, trunc = trainer.step(a)
        model.update(s, a, s2, r, term)
        s = trainer.reset() if term or trunc else s2
        if step % probe_every == 0:
            err = probe_error(model, env, probe_steps, seed=seed * 100_003 + step)
            curve.append((step, err))
            if stop_at_zero and err == 0:
                break
    return model, curve


def random_policy_return(env: GridEnv, episodes: int = 100, seed: int = 0) -> float:
    """Mean episode return of a uniform-random policy under ``env``'s current mechanics."""
    probe = mechanics_copy(env, seed)
    rng = np.random.default_rng([seed, 11])
    total = 0.0
    for _ in range(episodes):
        probe.reset()
        while True:
            _, r, term, trunc = probe.step(ACTIONS[int(rng.integers(len(ACTIONS)))])
            total += r
            if term or trunc:
                break
    return total / episodes


# -- the step loop ---------------------------------------------------------------


@dataclass
class RunLog:
    """Per-step events and per-episode records shared by consecutive phases."""

    rows: list = field(default_factory=list)  # (step, episode, phase, provenance, action, reward, terminal, rules, detections, updates)
    episodes: List[EpisodeRecord] = field(default_factory=list)
    log_imagined: bool = True
    injection_step: Optional[int] = None
    injection_updates: Optional[int] = None
    random_baseline: Optional[float] = None  # random-policy return under post-novelty mechanics

    def phase(self) -> str:
        return "pre" if self.injection_step is None else "post"


class _Loop:
    def __init__(self, bundle: AgentBundle, env: GridEnv, config: AdaptationConfig, log: RunLog):
        self.b, self.env, self.cfg, self.log = bundle, env, config, log
        self.mode = Stage.LEARN if bundle.policy.learning_enabled else Stage.FROZEN
        self.pending = 0  # buffer insertions since the last policy update
        seed = config.seed
        self.imagination = None
        if bundle.has_world_model:
            self.imagination = _Imagination(
                bundle.model, bundle.policy, bundle.pool, config.horizon, np.random.default_rng([seed, 5])
            )
        self.n_detections = 0
        self.ep_return = 0.0
        self.ep_len = 0
        self.state: Optional[SymbolicState] = None

    # bookkeeping ---------------------------------------------------------------

    def _row(self, t: Transition) -> None:
        b = self.b
        self.log.rows.append(
            (
                self.env.global_steps,
                self.env.episodes,
                self.log.phase(),
                t.provenance.value,
                int(t.action),
                t.reward,
                int(t.terminal),
                b.model.n_rules if b.model is not None else 0,
                self.n_detections,
                b.policy.updates_count,
            )
        )

    def learning(self) -> bool:
        return self.mode is not Stage.FROZEN

    def set_mode(self, mode: Stage) -> None:
        self.mode = mode
        learn = mode is not Stage.FROZEN
        self.b.policy.set_learning(learn)
        if self.b.model is not None:
            self.b.model.unfreeze() if learn else self.b.model.freeze()
        if not learn:
            self.pending = 0

    def _insert(self, t: Transition) -> None:
        self.b.buffer.append(t)
        if self.cfg.update_clock == "real" and t.provenance is Provenance.IMAGINED:
            return
        self.pending += 1
        if self.pending >= self.cfg.update_period:
            self.pending -= self.cfg.update_period
            self.b.policy.update_from_buffer(self.b.buffer, self.cfg.batch_size)

    # one real step -------------------------------------------------------------

    def begin_episode(self) -> None:
        self.state = self.env.reset()
        self.ep_return = 0.0
        self.ep_len = 0

    def step(self, report: PhaseReport) -> Optional[EpisodeRecord]:
        """Advance one real step; returns the episode record if it ended."""
        b, s = self.b, self.state
        action = ACTIONS[b.policy.select_action(s, Mode.EXPLORE)]
        s2, r, term, trunc = self.env.step(action)
        t = Transition(s, action, s2, r, term)
        if self.mode is Stage.FROZEN and b.detector is not None:
            event = b.detector.observe(s, b.model.predict_one(s, action), s2, r, term, self.env.global_steps)
            if event is not None:
                self.n_detections += 1
                report.detections.append(event)
                self.set_mode(Stage.ADAPT)
        self._row(t)
        if b.pool is not None:
            b.pool.add(s)
        if self.learning():
            if b.model is not None:
                b.model.update(s, action, s2, r, term)
            self._insert(t)
            if self.mode is Stage.ADAPT:
                for it in self.imagination.take(b.schedule.owed()):
                    if self.log.log_imagined:
                        self._row(it)
                    self._insert(it)
                    report.imagined_steps += 1
        report.real_steps += 1
        self.ep_return += r
        self.ep_len += 1
        self.state = s2
        if term or trunc:
            rec = EpisodeRecord(
                len(self.log.episodes),
                self.env.global_steps,
                self.ep_return,
                self.ep_len,
                self.log.phase(),
                b.policy.updates_count,
            )
            self.log.episodes.append(rec)
            report.episodes += 1
            return rec
        return None


def _returns(log: RunLog, phase: str) -> List[float]:
    return [r.ret for r in log.episodes if r.phase == phase]


def _policy_converged(bundle: AgentBundle, returns: List[float], cfg: AdaptationConfig) -> bool:
    return bundle.policy.epsilon_at_floor and plateaued(returns, cfg.ma_window, cfg.convergence_span, cfg.convergence_tol)


def run_pre_novelty(bundle: AgentBundle, env: GridEnv, config: AdaptationConfig, log: Optional[RunLog] = None) -> PhaseReport:
    """Train until converged, then keep acting until the novelty may be injected.

    The world-model agent freezes at convergence (policy plateau plus a rule
    model probe error below threshold) and monitors; a detection before
    injection unfreezes it until it converges again.  The baseline keeps
    learning.  Returns at an episode boundary where ``env.novelty_due()``
    holds (or, without a novelty, after ``monitor_steps`` more steps).

    Raises ``TimeoutError`` if convergence takes more than ``max_pre_steps``.
    """
    config.validate()
    log = RunLog() if log is None else log
    report = PhaseReport("pre")
    loop = _Loop(bundle, env, config, log)
    next_probe = 0
    converged_at: Optional[int] = None
    loop.begin_episode()
    while True:
        rec = loop.step(report)
        if rec is None:
            continue
        returns = _returns(log, "pre")
        if converged_at is None or loop.mode is Stage.ADAPT:
            if env.global_steps > config.max_pre_steps:
                raise TimeoutError(
                    f"no pre-novelty convergence within {config.max_pre_steps} steps "
                    f"(epsilon={bundle.policy.epsilon:.3f}, episodes={len(returns)}, "
                    f"last probe error={report.last_probe_error})"
                )
            if _policy_converged(bundle, returns, config):
                if report.policy_converged_at is None:
                    report.policy_converged_at = env.global_steps
                ready = True
                if bundle.has_world_model:
                    ready = False
                    if env.global_steps >= next_probe:
                        err = probe_error(bundle.model, env, config.probe_steps, seed=config.seed * 1000 + env.global_steps)
                        report.last_probe_error = err
                        next_probe = env.global_steps + config.probe_interval
                        if err < config.probe_threshold:
                            ready = True
                            report.model_converged_at = env.global_steps
                if ready:
                    converged_at = env.global_steps
                    if bundle.has_world_model:
                        bundle.detector.reset()
                        loop.set_mode(Stage.FROZEN)
        if converged_at is not None and loop.mode is not Stage.ADAPT:
            if env.novelty_due() or (
                env.novelty.kind.value == "none" and env.global_steps >= converged_at + config.monitor_steps
            ):
                break
        loop.begin_episode()
    report.converged = True
    report.policy_updates = bundle.policy.updates_count
    report.rule_count = bundle.model.n_rules if bundle.model is not None else 0
    bundle.loop = loop
    return report


def run_post_novelty(bundle: AgentBundle, env: GridEnv, config: AdaptationConfig, log: RunLog) -> PhaseReport:
    """Inject the novelty and run until post-novelty performance plateaus.

    The world-model agent stays frozen until the detector fires, then adapts
    with the mixing schedule.  Ends after at least ``min_post_episodes``
    episodes once the return plateaus above the random-policy return, or
    after ``max_post_steps`` steps.
    """
    config.validate()
    loop = bundle.loop if bundle.loop is not None and bundle.loop.env is env else _Loop(bundle, env, config, log)
    loop.log = log
    if not env.injected:
        env.inject_novelty()
    log.injection_step = env.global_steps
    log.injection_updates = bundle.policy.updates_count
    log.random_baseline = random_policy_return(env, RANDOM_BASELINE_EPISODES, seed=config.seed)
    report = PhaseReport("post")
    start_updates = bundle.policy.updates_count
    loop.begin_episode()
    while True:
        rec = loop.step(report)
        if rec is None:
            continue
        returns = _returns(log, "post")
        post_steps = env.global_steps - log.injection_step
        if post_steps >= config.max_post_steps:
            break
        recent = math.fsum(returns[-config.ma_window :]) / config.ma_window
        if (
            len(returns) >= config.min_post_episodes
            and recent > log.random_baseline
            and plateaued(returns, config.ma_window, config.convergence_span, config.convergence_tol)
        ):
            report.converged = True
            break
        loop.begin_episode()
    report.policy_updates = bundle.policy.updates_count - start_updates
    report.rule_count = bundle.model.n_rules if bundle.model is not None else 0
    return report


def run_baseline(env: GridEnv, config: AdaptationConfig, log: Optional[RunLog] = None):
    """Model-free agent through both phases; returns ``(bundle, pre, post, log)``.

    Learning stays on from start to end and no rule model is created.
    """
    log = RunLog() if log is None else log
    bundle = AgentBundle.build(config, world_model=False)
    pre = run_pre_novelty(bundle, env, config, log)
    post = run_post_novelty(bundle, env, config, log) if env.novelty.kind.value != "none" else None
    return bundle, pre, post, log


def run_worldcloner(env: GridEnv, config: AdaptationConfig, log: Optional[RunLog] = None):
    """World-model agent through both phases; returns ``(bundle, pre, post, log)``."""
    log = RunLog() if log is None else log
    bundle = AgentBundle.build(config, world_model=True)
    pre = run_pre_novelty(bundle, env, config, log)
    post = run_post_novelty(bundle, env, config, log) if env.novelty.kind.value != "none" else None
    return bundle, pre, post, log
