"""Input checks for data crossing the package boundary."""

from __future__ import annotations

from numbers import Integral, Real
from typing import Any, Optional

from .exceptions import ConfigError, DomainError, SchemaError
from .features import FeatureSchema, SymbolicState
from .transition import Provenance, Transition


def check_state(state: Any, schema: Optional[FeatureSchema] = None) -> SymbolicState:
    """Return ``state`` if it is a well-formed :class:`SymbolicState` (of ``schema``)."""
    if not isinstance(state, SymbolicState):
        raise SchemaError(f"expected a SymbolicState, got {type(state).__name__}")
    if schema is not None and not schema.compatible(state.schema):
        raise SchemaError(f"state belongs to schema {state.schema.name!r}, expected {schema.name!r}")
    if len(state.values) != len(state.schema):
        raise SchemaError("state length does not match its schema")
    for spec, v in zip(state.schema.features, state.values):
        if not spec.contains(v):
            raise DomainError(f"{spec.name}={v!r} outside its domain")
    return state


def check_transition(t: Any, schema: Optional[FeatureSchema] = None) -> Transition:
    if not isinstance(t, Transition):
        raise SchemaError(f"expected a Transition, got {type(t).__name__}")
    check_state(t.state, schema)
    check_state(t.next_state, schema if schema is not None else t.state.schema)
    if not isinstance(t.reward, Real):
        raise DomainError("reward must be a real number")
    if not isinstance(t.provenance, Provenance):
        raise DomainError(f"unknown provenance {t.provenance!r}")
    return t


def check_positive_int(name: str, value: Any, allow_zero: bool = False) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return int(value)


def check_fraction(name: str, value: Any, closed: bool = True) -> float:
    """A number in [0, 1] (or (0, 1) when ``closed`` is false)."""
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    ok = 0 <= value <= 1 if closed else 0 < value < 1
    if not ok:
        raise ConfigError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}, got {value}")
    return float(value)
