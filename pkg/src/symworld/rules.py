"""Online interval-rule world model.

Each rule pairs a list of disjoint AABIs (state precondition) and an action
with one effect: the state delta plus the reward and terminal flag observed for
it.  :meth:`IntervalRuleModel.update` consumes a single transition and applies
one of four structural changes (no change, relaxation, split + creation,
creation) so that afterwards

* rules sharing an action but disagreeing on the effect never overlap, and
* predicting the transition just seen reproduces it exactly.

No transition history is kept; a rule set can keep learning from wherever it is.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ContractError, DomainError, InvariantViolation, SchemaError
from .features import FeatureSchema, StateDelta, SymbolicState, apply_delta, diff
from .geometry import AABI, hull, intervals_overlap, relax_interval, split_interval
from .transition import Transition


@dataclass(frozen=True, slots=True)
class Effect:
    delta: StateDelta
    reward: float = 0.0
    terminal: bool = False

    def to_json(self) -> dict:
        return {"delta": self.delta.to_json(), "reward": self.reward, "terminal": self.terminal}

    @classmethod
    def from_json(cls, obj) -> "Effect":
        return cls(StateDelta.from_json(obj["delta"]), float(obj["reward"]), bool(obj["terminal"]))


@dataclass
class Rule:
    id: int
    action: Hashable
    preconditions: Tuple[AABI, ...]
    effect: Effect
    hits: int = 0
    violations: int = 0

    @property
    def is_point(self) -> bool:
        return len(self.preconditions) == 1 and self.preconditions[0].is_point


# -- update outcomes -------------------------------------------------------


@dataclass(frozen=True)
class NoChange:
    rule_id: int


@dataclass(frozen=True)
class Created:
    rule_id: int


@dataclass(frozen=True)
class Relaxed:
    rule_id: int
    # True when the expansion collided and a point interval was appended instead
    appended_point: bool = False


@dataclass(frozen=True)
class SplitAndCreated:
    split_rule_id: int
    new_rule_id: int
    split_rule_ids: Tuple[int, ...] = ()
    deleted_rule_ids: Tuple[int, ...] = ()


UpdateOutcome = Union[NoChange, Created, Relaxed, SplitAndCreated]


@dataclass(frozen=True, slots=True)
class Prediction:
    """Model output for one ``(state, action)``.

    ``next_state`` is ``None`` when the matched rule's delta cannot be applied to
    the state (it would leave a feature domain); such a rule is simply wrong
    there.
    """

    next_state: Optional[SymbolicState]
    reward: float
    terminal: bool
    rule_id: int

    def matches(self, next_state: SymbolicState, reward: float, terminal: bool) -> bool:
        return (
            self.next_state is not None
            and self.next_state == next_state
            and self.reward == float(reward)
            and self.terminal == bool(terminal)
        )


class _UnknownType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNKNOWN"

    def __bool__(self):
        return False

    def matches(self, next_state, reward, terminal) -> bool:
        return False


UNKNOWN = _UnknownType()


class _ActionIndex:
    """Stacked AABI bounds of every rule for one action.

    Rows are appended as intervals are added and marked dead when their rule
    changes, so edits cost O(changed intervals) instead of a rebuild.
    """

    def __init__(self, n_int: int, n_cat: int, capacity: int = 64):
        self.n_int, self.n_cat = n_int, n_cat
        self.n = 0
        self.n_dead = 0
        self._alloc(capacity)
        self.rows_of: Dict[int, List[int]] = {}

    def _alloc(self, capacity: int) -> None:
        self.lo = np.zeros((capacity, self.n_int), dtype=np.int64)
        self.hi = np.zeros((capacity, self.n_int), dtype=np.int64)
        self.cat = np.zeros((capacity, self.n_cat), dtype=np.int64)
        self.rule = np.full(capacity, -1, dtype=np.int64)
        self.pos = np.zeros(capacity, dtype=np.int64)
        self.effect = np.full(capacity, -1, dtype=np.int64)
        self.alive = np.zeros(capacity, dtype=bool)

    def copy(self) -> "_ActionIndex":
        other = copy.copy(self)
        for name in ("lo", "hi", "cat", "rule", "pos", "effect", "alive"):
            setattr(other, name, getattr(self, name).copy())
        other.rows_of = {k: list(v) for k, v in self.rows_of.items()}
        return other

    def _make_room(self, k: int) -> None:
        if self.n + k <= len(self.alive):
            return
        live = np.flatnonzero(self.alive[: self.n])
        capacity = max(64, 2 * (len(live) + k))
        old = {name: getattr(self, name)[live] for name in ("lo", "hi", "cat", "rule", "pos", "effect")}
        self._alloc(capacity)
        m = len(live)
        for name, arr in old.items():
            getattr(self, name)[:m] = arr
        self.alive[:m] = True
        self.n, self.n_dead = m, 0
        self.rows_of = {}
        for row, rid in enumerate(self.rule[:m].tolist()):
            self.rows_of.setdefault(rid, []).append(row)

    def remove(self, rule_id: int) -> None:
        rows = self.rows_of.pop(rule_id, [])
        self.alive[rows] = False
        self.n_dead += len(rows)

    def add(self, rule_id: int, effect_id: int, aabis: Sequence[AABI], masks: Sequence[Sequence[int]]) -> None:
        self._make_room(len(aabis))
        rows = []
        for k, (a, m) in enumerate(zip(aabis, masks)):
            r = self.n
            self.lo[r] = a.lo
            self.hi[r] = a.hi
            self.cat[r] = m
            self.rule[r] = rule_id
            self.pos[r] = k
            self.effect[r] = effect_id
            self.alive[r] = True
            rows.append(r)
            self.n += 1
        self.rows_of[rule_id] = rows

    def _base(self, lo, hi, bits) -> np.ndarray:
        n = self.n
        m = self.alive[:n] & (self.lo[:n] <= hi).all(axis=1) & (self.hi[:n] >= lo).all(axis=1)
        if self.n_cat:
            m &= ((self.cat[:n] & bits) != 0).all(axis=1)
        return m

    def containing(self, ints, bits) -> np.ndarray:
        return np.flatnonzero(self._base(ints, ints, bits))

    def overlapping(self, lo, hi, bits, exclude_effect: int) -> bool:
        m = self._base(lo, hi, bits)
        m &= self.effect[: self.n] != exclude_effect
        return bool(m.any())

    def cheapest_relaxation(self, effect_id: int, ints, bits):
        """``(rule_id, position)`` of the same-effect interval that grows least."""
        n = self.n
        rows = np.flatnonzero(self.alive[:n] & (self.effect[:n] == effect_id))
        if not len(rows):
            return None
        lo, hi, cat = self.lo[rows], self.hi[rows], self.cat[rows]
        old = np.prod(hi - lo + 1, axis=1) * np.prod(np.bitwise_count(cat), axis=1)
        glo, ghi, gcat = np.minimum(lo, ints), np.maximum(hi, ints), cat | bits
        new = np.prod(ghi - glo + 1, axis=1) * np.prod(np.bitwise_count(gcat), axis=1)
        cost = new - old
        rid, pos = self.rule[rows], self.pos[rows]
        best = np.lexsort((pos, rid, cost))[0]
        return int(rid[best]), int(pos[best])


def _mask(schema: FeatureSchema, pos: int, symbols: Iterable[str]) -> int:
    m = 0
    for s in symbols:
        m |= 1 << schema.symbol_index(pos, s)
    return m


def _masks(schema: FeatureSchema, aabi: AABI) -> List[int]:
    return [_mask(schema, p, s) for p, s in zip(schema.cat_positions, aabi.cats)]


class IntervalRuleModel(BaseEstimator):
    """Collision-free set of interval rules approximating a transition function.

    Parameters
    ----------
    schema : FeatureSchema, optional
        Feature schema of the states.  Inferred from the first transition when
        omitted.
    check_invariants : bool
        Re-verify collision freedom after every update (slow; for tests).
    """

    def __init__(self, schema: Optional[FeatureSchema] = None, check_invariants: bool = False):
        self.schema = schema
        self.check_invariants = check_invariants

    # -- estimator surface --------------------------------------------------

    def fit(self, X: Iterable, y=None) -> "IntervalRuleModel":
        """Learn from scratch on an iterable of transitions."""
        self._reset()
        return self.partial_fit(X)

    def partial_fit(self, X: Iterable, y=None) -> "IntervalRuleModel":
        for t in X:
            s, a, s2, r, d = _unpack(t)
            self.update(s, a, s2, r, d)
        return self

    def predict(self, X: Iterable[Tuple[SymbolicState, Hashable]]) -> list:
        """Predictions (or ``UNKNOWN``) for ``(state, action)`` pairs."""
        return [self.predict_one(s, a) for s, a in X]

    def score(self, X: Iterable, y=None) -> float:
        """Fraction of transitions predicted exactly (state, reward, terminal)."""
        n = ok = 0
        for t in X:
            s, a, s2, r, d = _unpack(t)
            n += 1
            ok += self.predict_one(s, a).matches(s2, r, d)
        return ok / n if n else 1.0

    def __sklearn_is_fitted__(self) -> bool:
        return hasattr(self, "rules_")

    # -- state --------------------------------------------------------------

    def _reset(self) -> None:
        self.schema_ = self.schema
        self.rules_: Dict[int, Rule] = {}
        self.next_id_ = 0
        self.n_updates_ = 0
        self.frozen_ = False
        self._by_action: Dict[Hashable, List[int]] = {}
        self._by_effect: Dict[Tuple[Hashable, Effect], List[int]] = {}
        self._index: Dict[Hashable, _ActionIndex] = {}
        self._effect_ids: Dict[Effect, int] = {}
        self._cover_cache: Dict[tuple, tuple] = {}

    def _ensure(self, state: SymbolicState) -> None:
        if not hasattr(self, "rules_"):
            self._reset()
        if self.schema_ is None:
            self.schema_ = state.schema
        elif not self.schema_.compatible(state.schema):
            raise SchemaError("state schema differs from the model's schema")

    @property
    def n_rules(self) -> int:
        return len(self.rules_) if hasattr(self, "rules_") else 0

    @property
    def n_intervals(self) -> int:
        return sum(len(r.preconditions) for r in self.rules_.values()) if hasattr(self, "rules_") else 0

    def rules_for(self, action: Hashable) -> List[Rule]:
        return [self.rules_[i] for i in self._by_action.get(action, ())]

    def freeze(self) -> None:
        self._ensure_fitted()
        self.frozen_ = True

    def unfreeze(self) -> None:
        self._ensure_fitted()
        self.frozen_ = False

    def _ensure_fitted(self) -> None:
        if not hasattr(self, "rules_"):
            self._reset()

    def snapshot(self) -> "IntervalRuleModel":
        """Independent copy for read-only use while this model keeps learning."""
        self._ensure_fitted()
        other = copy.copy(self)
        other.rules_ = {i: copy.copy(r) for i, r in self.rules_.items()}
        other._by_action = {a: list(v) for a, v in self._by_action.items()}
        other._by_effect = {k: list(v) for k, v in self._by_effect.items()}
        other._index = {a: idx.copy() for a, idx in self._index.items()}
        other._effect_ids = dict(self._effect_ids)
        other._cover_cache = dict(self._cover_cache)
        return other

    # -- structural edits ---------------------------------------------------

    def _effect_id(self, effect: Effect) -> int:
        return self._effect_ids.setdefault(effect, len(self._effect_ids))

    def _reindex(self, rule: Rule) -> None:
        idx = self._index.get(rule.action)
        if idx is None:
            idx = self._index[rule.action] = _ActionIndex(self.schema_.n_int_axes, len(self.schema_.cat_positions))
        idx.remove(rule.id)
        if rule.id in self.rules_:
            masks = [_masks(self.schema_, a) for a in rule.preconditions]
            idx.add(rule.id, self._effect_id(rule.effect), rule.preconditions, masks)
        self._cover_cache.clear()

    def _add_rule(self, action, preconditions: Tuple[AABI, ...], effect: Effect) -> Rule:
        rule = Rule(self.next_id_, action, preconditions, effect)
        self.next_id_ += 1
        self.rules_[rule.id] = rule
        self._by_action.setdefault(action, []).append(rule.id)
        self._by_effect.setdefault((action, effect), []).append(rule.id)
        self._reindex(rule)
        return rule

    def _delete_rule(self, rule: Rule) -> None:
        del self.rules_[rule.id]
        self._by_action[rule.action].remove(rule.id)
        self._by_effect[(rule.action, rule.effect)].remove(rule.id)
        self._reindex(rule)

    def _set_preconditions(self, rule: Rule, preconditions: Tuple[AABI, ...]) -> None:
        rule.preconditions = preconditions
        self._reindex(rule)

    # -- queries -------------------------------------------------------------

    def _flat_query(self, state: SymbolicState):
        schema = self.schema_
        ints, cats = schema.flatten(state.values)
        bits = np.left_shift(1, np.asarray(cats, dtype=np.int64))
        return np.asarray(ints, dtype=np.int64), bits

    def covering(self, state: SymbolicState, action) -> Tuple[Tuple[int, int], ...]:
        """``(rule_id, interval_position)`` of every interval containing ``state``."""
        key = (state.values, action)
        hit = self._cover_cache.get(key)
        if hit is not None:
            return hit
        idx = self._index.get(action)
        if idx is None:
            out: tuple = ()
        else:
            ints, bits = self._flat_query(state)
            rows = idx.containing(ints, bits)
            out = tuple(sorted(zip(idx.rule[rows].tolist(), idx.pos[rows].tolist())))
        self._cover_cache[key] = out
        return out

    def predict_one(self, state: SymbolicState, action) -> Union[Prediction, _UnknownType]:
        """Next state, reward and terminal flag, or ``UNKNOWN`` if no rule applies."""
        self._ensure(state)
        hits = self.covering(state, action)
        if not hits:
            return UNKNOWN
        rule = self.rules_[hits[0][0]]
        for rid, _ in hits[1:]:
            if self.rules_[rid].effect != rule.effect:
                raise InvariantViolation(f"rules {rule.id} and {rid} overlap with different effects")
        try:
            nxt = apply_delta(state, rule.effect.delta)
        except DomainError:
            nxt = None
        return Prediction(nxt, rule.effect.reward, rule.effect.terminal, rule.id)

    # -- learning ------------------------------------------------------------

    def update(
        self,
        prev: SymbolicState,
        action,
        next: SymbolicState,
        reward: float = 0.0,
        terminal: bool = False,
    ) -> UpdateOutcome:
        """Fold one observed transition into the rule set."""
        self._ensure(prev)
        if not self.schema_.compatible(next.schema):
            raise SchemaError("next state schema differs from the model's schema")
        if self.frozen_:
            raise ContractError("rule model is frozen")
        self.n_updates_ += 1
        effect = Effect(diff(prev, next), float(reward), bool(terminal))
        hits = self.covering(prev, action)
        if hits:
            first = self.rules_[hits[0][0]]
            if first.effect == effect:
                first.hits += 1
                outcome: UpdateOutcome = NoChange(first.id)
            else:
                outcome = self._resolve_collision(prev, action, effect, hits)
        else:
            same = self._by_effect.get((action, effect))
            if same:
                outcome = self._relax(prev, action, effect, same)
            else:
                outcome = Created(self._add_rule(action, (AABI.point(prev),), effect).id)
        if self.check_invariants:
            self.assert_invariants()
        return outcome

    def _resolve_collision(self, prev, action, effect, hits) -> SplitAndCreated:
        by_rule: Dict[int, List[int]] = {}
        for rid, pos in hits:
            by_rule.setdefault(rid, []).append(pos)
        deleted = []
        for rid, positions in by_rule.items():
            rule = self.rules_[rid]
            if rule.effect == effect:
                raise InvariantViolation(f"rule {rid} covers the state with the observed effect and others don't")
            rule.violations += 1
            kept: List[AABI] = []
            for k, a in enumerate(rule.preconditions):
                if k in positions:
                    kept.extend(p for p in split_interval(a, prev) if p is not None)
                else:
                    kept.append(a)
            if kept:
                self._set_preconditions(rule, tuple(kept))
            else:
                self._delete_rule(rule)
                deleted.append(rid)
        new = self._add_rule(action, (AABI.point(prev),), effect)
        split_ids = tuple(by_rule)
        return SplitAndCreated(split_ids[0], new.id, split_ids, tuple(deleted))

    def _relax(self, prev, action, effect, same_ids) -> Relaxed:
        # expand the interval whose volume grows least; ties -> lowest rule id, position
        ints, bits = self._flat_query(prev)
        rid, k = self._index[action].cheapest_relaxation(self._effect_id(effect), ints, bits)
        rule = self.rules_[rid]
        grown = relax_interval(rule.preconditions[k], prev)
        others = [a for j, a in enumerate(rule.preconditions) if j != k]
        # absorb same-rule intervals the expansion now touches, keeping them disjoint
        merged = True
        while merged:
            merged = False
            for a in others:
                if intervals_overlap(grown, a):
                    grown = hull(grown, a)
                    others.remove(a)
                    merged = True
                    break
        if self._collides(action, effect, grown):
            self._set_preconditions(rule, rule.preconditions + (AABI.point(prev),))
            return Relaxed(rule.id, appended_point=True)
        self._set_preconditions(rule, tuple(others) + (grown,))
        return Relaxed(rule.id)

    def _collides(self, action, effect: Effect, aabi: AABI) -> bool:
        idx = self._index.get(action)
        if idx is None:
            return False
        bits = np.asarray(_masks(self.schema_, aabi), dtype=np.int64)
        lo, hi = np.asarray(aabi.lo, dtype=np.int64), np.asarray(aabi.hi, dtype=np.int64)
        return idx.overlapping(lo, hi, bits, self._effect_id(effect))

    # -- invariants ------------------------------------------------------------

    def assert_invariants(self) -> None:
        """Raise :class:`InvariantViolation` unless the rule set is well formed."""
        self._ensure_fitted()
        for rule in self.rules_.values():
            if not rule.preconditions:
                raise InvariantViolation(f"rule {rule.id} has no preconditions")
            for a in rule.preconditions:
                try:
                    a.validate()
                except (DomainError, SchemaError) as exc:
                    raise InvariantViolation(f"rule {rule.id}: {exc}") from exc
            pre = rule.preconditions
            for i in range(len(pre)):
                for j in range(i + 1, len(pre)):
                    if intervals_overlap(pre[i], pre[j]):
                        raise InvariantViolation(f"rule {rule.id} has overlapping intervals")
        for action, ids in self._by_action.items():
            rules = [self.rules_[i] for i in ids]
            for i, r1 in enumerate(rules):
                for r2 in rules[i + 1 :]:
                    if r1.effect == r2.effect:
                        continue
                    for a in r1.preconditions:
                        for b in r2.preconditions:
                            if intervals_overlap(a, b):
                                raise InvariantViolation(
                                    f"rules {r1.id} and {r2.id} (action {action!r}) collide"
                                )

    # -- serialisation ---------------------------------------------------------

    def rules_to_json(self) -> list:
        self._ensure_fitted()
        return [
            {
                "id": r.id,
                "action": _action_json(r.action),
                "preconditions": [a.to_json() for a in r.preconditions],
                "effect": r.effect.to_json(),
                "stats": {"hits": r.hits, "violations": r.violations},
            }
            for r in self.rules_.values()
        ]

    def to_json(self) -> dict:
        self._ensure_fitted()
        return {
            "schema": None if self.schema_ is None else self.schema_.to_json(),
            "next_id": self.next_id_,
            "rules": self.rules_to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict, action_type=None) -> "IntervalRuleModel":
        schema = None if obj["schema"] is None else FeatureSchema.from_json(obj["schema"])
        model = cls(schema=schema)
        model._reset()
        for r in obj["rules"]:
            action = r["action"] if action_type is None else action_type(r["action"])
            pre = tuple(AABI.from_json(schema, a) for a in r["preconditions"])
            model.next_id_ = r["id"]
            rule = model._add_rule(action, pre, Effect.from_json(r["effect"]))
            rule.hits = r["stats"]["hits"]
            rule.violations = r["stats"]["violations"]
        model.next_id_ = obj["next_id"]
        return model


def _action_json(action):
    if isinstance(action, (bool, float)):
        return action
    if isinstance(action, int):
        return int(action)
    return str(action)


def _unpack(t):
    if isinstance(t, Transition):
        return t.state, t.action, t.next_state, t.reward, t.terminal
    s, a, s2, *rest = t
    r = rest[0] if len(rest) > 0 else 0.0
    d = rest[1] if len(rest) > 1 else False
    return s, a, s2, r, d
