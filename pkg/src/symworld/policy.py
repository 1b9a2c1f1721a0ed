"""Tabular Q-learning policy trained from a replay buffer.

Real and imagined transitions share the buffer and the single update rule;
provenance is recorded only for bookkeeping.
"""

from __future__ import annotations

import enum
from collections import Counter
from typing import Dict, Iterable, List, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ConfigError, ContractError
from .features import SymbolicState, state_key
from .transition import Transition


class Mode(str, enum.Enum):
    EXPLORE = "explore"
    EXPLOIT = "exploit"


class UpdateBuffer:
    """Bounded FIFO of transitions with O(1) append and random access."""

    def __init__(self, capacity: int = 4096):
        if capacity < 1:
            raise ConfigError("buffer capacity must be positive")
        self.capacity = capacity
        self._items: List[Transition] = []
        self._head = 0  # index of the oldest item once full
        self.counts: Counter = Counter()  # by provenance, current contents
        self.added: Counter = Counter()  # by provenance, all time

    def __len__(self) -> int:
        return len(self._items)

    def append(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self.counts[self._items[self._head].provenance] -= 1
            self._items[self._head] = t
            self._head = (self._head + 1) % self.capacity
        self.counts[t.provenance] += 1
        self.added[t.provenance] += 1

    def extend(self, ts: Iterable[Transition]) -> None:
        for t in ts:
            self.append(t)

    def __getitem__(self, i: int) -> Transition:
        """``i``-th oldest transition."""
        n = len(self._items)
        if not -n <= i < n:
            raise IndexError(i)
        return self._items[(self._head + i) % n]

    def __iter__(self):
        for i in range(len(self._items)):
            yield self[i]

    def clear(self) -> None:
        self._items.clear()
        self._head = 0
        self.counts.clear()


class TabularQPolicy(BaseEstimator):
    """Epsilon-greedy Q-table over ``state_key`` values.

    Parameters
    ----------
    n_actions : int
    alpha : float
        Learning rate.
    gamma : float
        Discount.
    epsilon_start, epsilon_floor : float
        Exploration rate decays linearly from start to floor.
    epsilon_decay_steps : int
        Number of explore-mode action selections the decay takes.
    initial_value : float
        Q-value of every unvisited ``(state, action)``; values above the
        reachable returns make the greedy policy seek out untried actions.
    seed : int
        Seeds the action and minibatch RNG streams.
    """

    def __init__(
        self,
        n_actions: int = 6,
        alpha: float = 0.1,
        gamma: float = 0.99,
        epsilon_start: float = 1.0,
        epsilon_floor: float = 0.05,
        epsilon_decay_steps: int = 5000,
        initial_value: float = 0.0,
        seed: int = 0,
    ):
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon_start = epsilon_start
        self.epsilon_floor = epsilon_floor
        self.epsilon_decay_steps = epsilon_decay_steps
        self.initial_value = initial_value
        self.seed = seed

    # -- lifecycle -------------------------------------------------------------

    def _validate_params(self) -> None:
        if self.n_actions < 1:
            raise ConfigError("n_actions must be positive")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must be in [0, 1]")
        if not 0 <= self.epsilon_floor <= self.epsilon_start <= 1:
            raise ConfigError("need 0 <= epsilon_floor <= epsilon_start <= 1")
        if self.epsilon_decay_steps < 0:
            raise ConfigError("epsilon_decay_steps must be non-negative")

    def _ensure(self) -> None:
        if not hasattr(self, "q_"):
            self._validate_params()
            self.q_: Dict[tuple, List[float]] = {}
            self.explore_steps_ = 0
            self.updates_count = 0
            self.learning_enabled_ = True
            self.action_rng_ = np.random.default_rng([self.seed, 0])
            self.sample_rng_ = np.random.default_rng([self.seed, 1])

    def __sklearn_is_fitted__(self) -> bool:
        return hasattr(self, "q_")

    @property
    def learning_enabled(self) -> bool:
        self._ensure()
        return self.learning_enabled_

    @property
    def epsilon(self) -> float:
        self._ensure()
        if not self.learning_enabled or self.epsilon_decay_steps == 0:
            return self.epsilon_floor
        if self.explore_steps_ >= self.epsilon_decay_steps:
            return self.epsilon_floor
        frac = self.explore_steps_ / self.epsilon_decay_steps
        return self.epsilon_start + frac * (self.epsilon_floor - self.epsilon_start)

    @property
    def epsilon_at_floor(self) -> bool:
        return self.epsilon <= self.epsilon_floor

    def set_learning(self, enabled: bool) -> None:
        """Freeze (``False``) or resume learning; frozen mode pins epsilon to its floor."""
        self._ensure()
        self.learning_enabled_ = bool(enabled)

    # -- acting ----------------------------------------------------------------

    def q_values(self, state: SymbolicState) -> List[float]:
        self._ensure()
        return list(self.q_.get(state_key(state), (float(self.initial_value),) * self.n_actions))

    def greedy(self, state: SymbolicState) -> int:
        self._ensure()
        row = self.q_.get(state_key(state))
        if row is None:
            return 0
        return row.index(max(row))  # first maximum -> lowest action index

    def select_action(self, state: SymbolicState, mode: Mode = Mode.EXPLORE, rng=None, advance: bool = True) -> int:
        """Pick an action.

        ``rng`` defaults to the policy's own action stream.  ``advance=False``
        leaves the exploration schedule untouched (used for imagined steps).
        """
        self._ensure()
        if Mode(mode) is Mode.EXPLOIT:
            return self.greedy(state)
        eps = self.epsilon
        if advance and self.learning_enabled:
            self.explore_steps_ += 1
        rng = self.action_rng_ if rng is None else rng
        if rng.random() < eps:
            return int(rng.integers(self.n_actions))
        return self.greedy(state)

    # -- learning --------------------------------------------------------------

    def _row(self, key) -> List[float]:
        row = self.q_.get(key)
        if row is None:
            row = self.q_[key] = [float(self.initial_value)] * self.n_actions
        return row

    def _apply(self, t: Transition) -> None:
        row = self._row(state_key(t.state))
        a = int(t.action)
        target = float(t.reward)
        if not t.terminal:
            nxt = self.q_.get(state_key(t.next_state))
            target += self.gamma * (float(self.initial_value) if nxt is None else max(nxt))
        row[a] += self.alpha * (target - row[a])
        self.updates_count += 1

    def update_from_buffer(self, buffer: UpdateBuffer, batch_size: int) -> int:
        """Q-update on a uniform sample (without replacement); returns writes made."""
        self._ensure()
        if not self.learning_enabled:
            raise ContractError("policy is frozen")
        if batch_size < 1:
            raise ConfigError("batch_size must be positive")
        n = len(buffer)
        if n == 0:
            return 0
        k = min(batch_size, n)
        for i in self.sample_rng_.choice(n, size=k, replace=False).tolist():
            self._apply(buffer[i])
        return k

    def partial_fit(self, X: Iterable[Transition], y=None) -> "TabularQPolicy":
        """One Q-update per transition, in order."""
        self._ensure()
        if not self.learning_enabled:
            raise ContractError("policy is frozen")
        for t in X:
            self._apply(t)
        return self

    def fit(self, X: Sequence[Transition], y=None, n_epochs: int = 1) -> "TabularQPolicy":
        for attr in ("q_",):
            if hasattr(self, attr):
                delattr(self, attr)
        self._ensure()
        X = list(X)
        for _ in range(n_epochs):
            self.partial_fit(X)
        return self

    def predict(self, X: Iterable[SymbolicState]) -> np.ndarray:
        """Greedy actions."""
        return np.array([self.greedy(s) for s in X], dtype=np.int64)

    def to_json(self) -> dict:
        self._ensure()
        return {
            "params": self.get_params(),
            "explore_steps": self.explore_steps_,
            "updates_count": self.updates_count,
            "learning_enabled": self.learning_enabled,
            "q": [{"state": repr(k), "values": v} for k, v in self.q_.items()],
        }
