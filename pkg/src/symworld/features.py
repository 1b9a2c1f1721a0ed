"""Feature schemas, symbolic states and state deltas.

A :class:`FeatureSchema` fixes the ordered list of features an environment
exposes.  Integer features hold tuples (one entry per axis, so a 2-D position
is a single feature), categorical features hold one symbol.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence, Tuple, Union

from .exceptions import DomainError, SchemaError


class FeatureKind(str, enum.Enum):
    INTEGER = "integer"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: FeatureKind
    lo: Optional[Tuple[int, ...]] = None
    hi: Optional[Tuple[int, ...]] = None
    symbols: Optional[Tuple[str, ...]] = None

    @classmethod
    def integer(cls, name: str, lo: Sequence[int], hi: Sequence[int]) -> "FeatureSpec":
        lo, hi = tuple(int(v) for v in lo), tuple(int(v) for v in hi)
        if not lo or len(lo) != len(hi):
            raise SchemaError(f"{name}: lo/hi must be non-empty and the same length")
        if any(a > b for a, b in zip(lo, hi)):
            raise SchemaError(f"{name}: empty integer domain {lo}..{hi}")
        return cls(name, FeatureKind.INTEGER, lo=lo, hi=hi)

    @classmethod
    def categorical(cls, name: str, symbols: Sequence[str]) -> "FeatureSpec":
        symbols = tuple(str(s) for s in symbols)
        if not symbols:
            raise SchemaError(f"{name}: categorical domain needs at least one symbol")
        if len(set(symbols)) != len(symbols):
            raise SchemaError(f"{name}: duplicate symbols")
        return cls(name, FeatureKind.CATEGORICAL, symbols=symbols)

    @property
    def is_integer(self) -> bool:
        return self.kind is FeatureKind.INTEGER

    @property
    def n_axes(self) -> int:
        return len(self.lo) if self.is_integer else 0

    def contains(self, value: Any) -> bool:
        if self.is_integer:
            return (
                isinstance(value, tuple)
                and len(value) == len(self.lo)
                and all(a <= v <= b for a, v, b in zip(self.lo, value, self.hi))
            )
        return value in self.symbols

    def to_json(self) -> dict:
        if self.is_integer:
            return {"name": self.name, "kind": self.kind.value, "lo": list(self.lo), "hi": list(self.hi)}
        return {"name": self.name, "kind": self.kind.value, "symbols": list(self.symbols)}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "FeatureSpec":
        if obj["kind"] == FeatureKind.INTEGER.value:
            return cls.integer(obj["name"], obj["lo"], obj["hi"])
        return cls.categorical(obj["name"], obj["symbols"])


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered, immutable list of features.

    Besides the per-feature view, the schema precomputes a flat layout used by
    the rule model: every integer axis becomes one slot of an integer vector and
    every categorical feature becomes one symbol-index slot.
    """

    name: str
    features: Tuple[FeatureSpec, ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)
    _int_slices: tuple = field(init=False, repr=False, compare=False, hash=False)
    _cat_positions: tuple = field(init=False, repr=False, compare=False, hash=False)
    _symbol_index: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        features = tuple(self.features)
        object.__setattr__(self, "features", features)
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in schema {self.name!r}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})
        slices, cats, symidx = [], [], []
        offset = 0
        for i, f in enumerate(features):
            if f.is_integer:
                slices.append((i, offset, offset + f.n_axes))
                offset += f.n_axes
                symidx.append(None)
            else:
                cats.append(i)
                symidx.append({s: k for k, s in enumerate(f.symbols)})
        object.__setattr__(self, "_int_slices", tuple(slices))
        object.__setattr__(self, "_cat_positions", tuple(cats))
        object.__setattr__(self, "_symbol_index", tuple(symidx))

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"schema {self.name!r} has no feature {name!r}") from None

    def __getitem__(self, name: str) -> FeatureSpec:
        return self.features[self.index(name)]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def n_int_axes(self) -> int:
        return self._int_slices[-1][2] if self._int_slices else 0

    @property
    def int_slices(self) -> tuple:
        """``(feature_index, start, stop)`` for every integer feature."""
        return self._int_slices

    @property
    def cat_positions(self) -> tuple:
        return self._cat_positions

    def symbol_index(self, feature_index: int, symbol: str) -> int:
        return self._symbol_index[feature_index][symbol]

    def flatten(self, values: Sequence[Any]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Split ``values`` into (integer axes, categorical symbol indices)."""
        ints: list = []
        for i, _, _ in self._int_slices:
            ints.extend(values[i])
        cats = tuple(self._symbol_index[i][values[i]] for i in self._cat_positions)
        return tuple(ints), cats

    def compatible(self, other: "FeatureSchema") -> bool:
        return self is other or self == other

    def to_json(self) -> dict:
        return {"name": self.name, "features": [f.to_json() for f in self.features]}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "FeatureSchema":
        return cls(obj["name"], tuple(FeatureSpec.from_json(f) for f in obj["features"]))


Value = Union[Tuple[int, ...], str]


@dataclass(frozen=True, slots=True)
class SymbolicState:
    """Feature values aligned with ``schema``.

    Construction does not validate; use :func:`make_state` or
    :func:`symworld.validation.check_state` on untrusted input.
    """

    schema: FeatureSchema
    values: Tuple[Value, ...]

    def __eq__(self, other):
        if not isinstance(other, SymbolicState):
            return NotImplemented
        return self.values == other.values and self.schema.compatible(other.schema)

    def __hash__(self):
        return hash(self.values)

    def __getitem__(self, name: str) -> Value:
        return self.values[self.schema.index(name)]

    def replace(self, **changes: Value) -> "SymbolicState":
        values = list(self.values)
        for name, value in changes.items():
            values[self.schema.index(name)] = _normalise(self.schema[name], value)
        return SymbolicState(self.schema, tuple(values))

    def as_dict(self) -> dict:
        return dict(zip(self.schema.names, self.values))

    def __repr__(self):
        body = ", ".join(f"{n}={v}" for n, v in zip(self.schema.names, self.values))
        return f"SymbolicState({body})"


def _normalise(spec: FeatureSpec, value: Any) -> Value:
    if spec.is_integer:
        if isinstance(value, int):
            value = (value,)
        return tuple(int(v) for v in value)
    return str(value)


def make_state(schema: FeatureSchema, values: Union[Mapping[str, Any], Sequence[Any]]) -> SymbolicState:
    """Build a validated state from a mapping or an ordered sequence."""
    if isinstance(values, Mapping):
        missing = set(schema.names) - set(values)
        extra = set(values) - set(schema.names)
        if missing or extra:
            raise SchemaError(f"state keys mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        values = [values[n] for n in schema.names]
    if len(values) != len(schema):
        raise SchemaError(f"expected {len(schema)} values, got {len(values)}")
    out = []
    for spec, v in zip(schema.features, values):
        v = _normalise(spec, v)
        if not spec.contains(v):
            raise DomainError(f"{spec.name}={v!r} outside its domain")
        out.append(v)
    return SymbolicState(schema, tuple(out))


# -- deltas ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Additive:
    offset: Tuple[int, ...]

    def __repr__(self):
        return f"Additive({self.offset})"


@dataclass(frozen=True, slots=True)
class Assign:
    source: frozenset
    target: str

    def __repr__(self):
        return f"Assign({set(self.source)}->{self.target})"


# ``None`` marks an unchanged feature.
DeltaEntry = Optional[Union[Additive, Assign]]


@dataclass(frozen=True, slots=True)
class StateDelta:
    entries: Tuple[DeltaEntry, ...]

    @classmethod
    def identity(cls, schema: FeatureSchema) -> "StateDelta":
        return cls((None,) * len(schema))

    @property
    def is_identity(self) -> bool:
        return all(e is None for e in self.entries)

    def to_json(self) -> list:
        out = []
        for e in self.entries:
            if e is None:
                out.append(None)
            elif isinstance(e, Additive):
                out.append({"add": list(e.offset)})
            else:
                out.append({"from": sorted(e.source), "to": e.target})
        return out

    @classmethod
    def from_json(cls, obj: Iterable[Any]) -> "StateDelta":
        entries = []
        for e in obj:
            if e is None:
                entries.append(None)
            elif "add" in e:
                entries.append(Additive(tuple(e["add"])))
            else:
                entries.append(Assign(frozenset(e["from"]), e["to"]))
        return cls(tuple(entries))


def diff(prev: SymbolicState, next: SymbolicState) -> StateDelta:
    """Per-feature change taking ``prev`` to ``next``."""
    if not prev.schema.compatible(next.schema):
        raise SchemaError("cannot diff states from different schemas")
    entries = []
    for spec, p, n in zip(prev.schema.features, prev.values, next.values):
        if p == n:
            entries.append(None)
        elif spec.is_integer:
            entries.append(Additive(tuple(b - a for a, b in zip(p, n))))
        else:
            entries.append(Assign(frozenset((p,)), n))
    return StateDelta(tuple(entries))


def apply_delta(state: SymbolicState, delta: StateDelta) -> SymbolicState:
    """Inverse of :func:`diff`.  Out-of-domain results raise, never clamp."""
    schema = state.schema
    if len(delta.entries) != len(schema):
        raise SchemaError("delta length does not match the state's schema")
    if delta.is_identity:
        return state
    values = list(state.values)
    for i, e in enumerate(delta.entries):
        if e is None:
            continue
        spec = schema.features[i]
        if isinstance(e, Additive):
            if not spec.is_integer or len(e.offset) != spec.n_axes:
                raise SchemaError(f"additive delta on non-matching feature {spec.name}")
            v = tuple(a + b for a, b in zip(values[i], e.offset))
        else:
            if spec.is_integer:
                raise SchemaError(f"assign delta on integer feature {spec.name}")
            v = e.target
        if not spec.contains(v):
            raise DomainError(f"{spec.name}={v!r} outside its domain")
        values[i] = v
    return SymbolicState(schema, tuple(values))


def state_key(state: SymbolicState) -> tuple:
    """Hashable key, equal exactly when the feature values are equal."""
    return state.values
