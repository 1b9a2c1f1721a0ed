"""Rule-violation novelty detection.

The detector watches a frozen rule model's predictions against what the real
environment did.  It fires when either

* one rule is violated ``n`` times in a row, or
* one exact state is followed by a failed prediction on more than ``n``
  consecutive visits.

A violation means the rule matched ``(state, action)`` but its predicted
successor, reward or terminal flag was wrong.  An ``UNKNOWN`` prediction is
not a rule violation but still counts as a failed prediction for the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .exceptions import ConfigError
from .features import SymbolicState, state_key
from .rules import Prediction


@dataclass(frozen=True)
class DetectionEvent:
    step: int
    trigger: str  # "rule" or "state"
    rule_id: Optional[int]
    state: tuple

    def to_json(self) -> dict:
        return {"step": self.step, "trigger": self.trigger, "rule_id": self.rule_id, "state": repr(self.state)}


@dataclass
class DetectorState:
    n: int = 2
    rule_counts: Dict[int, int] = field(default_factory=dict)
    state_counts: Dict[tuple, int] = field(default_factory=dict)
    fired: bool = False
    events: List[DetectionEvent] = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("detector threshold n must be at least 1")

    def observe(
        self,
        prev: SymbolicState,
        prediction,
        next_state: SymbolicState,
        reward: float,
        terminal: bool,
        step: int = 0,
    ) -> Optional[DetectionEvent]:
        """Account for one real step; return an event if a trigger condition holds."""
        key = state_key(prev)
        if prediction.matches(next_state, reward, terminal):
            self.rule_counts.pop(prediction.rule_id, None)
            self.state_counts.pop(key, None)
            return None
        self.state_counts[key] = self.state_counts.get(key, 0) + 1
        event = None
        if isinstance(prediction, Prediction):
            count = self.rule_counts.get(prediction.rule_id, 0) + 1
            self.rule_counts[prediction.rule_id] = count
            if count >= self.n:
                event = DetectionEvent(step, "rule", prediction.rule_id, key)
        if event is None and self.state_counts[key] > self.n:
            rule_id = prediction.rule_id if isinstance(prediction, Prediction) else None
            event = DetectionEvent(step, "state", rule_id, key)
        if event is not None:
            self.fired = True
            self.events.append(event)
        return event

    def reset(self) -> None:
        self.rule_counts.clear()
        self.state_counts.clear()
        self.fired = False
        self.events.clear()
