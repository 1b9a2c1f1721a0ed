"""Axis-aligned bounding intervals over a :class:`FeatureSchema`.

An AABI stores integer bounds in the schema's flat axis order and one symbol
set per categorical feature.  A point lies outside an AABI exactly when some
axis separates them (value below the min or above the max, or a symbol that is
not in the set), which is all :func:`contains_point` checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Any, Mapping, Optional, Tuple

from .exceptions import DomainError, SchemaError
from .features import FeatureSchema, SymbolicState


@dataclass(frozen=True, slots=True)
class AABI:
    schema: FeatureSchema
    lo: Tuple[int, ...]
    hi: Tuple[int, ...]
    cats: Tuple[frozenset, ...]

    @classmethod
    def point(cls, state: SymbolicState) -> "AABI":
        """The AABI covering exactly ``state``."""
        schema = state.schema
        ints, _ = schema.flatten(state.values)
        cats = tuple(frozenset((state.values[i],)) for i in schema.cat_positions)
        return cls(schema, ints, ints, cats)

    @classmethod
    def from_bounds(cls, schema: FeatureSchema, bounds: Mapping[str, Any]) -> "AABI":
        """Build from ``{name: (min, max)}`` / ``{name: {symbols}}``.

        Features missing from ``bounds`` span their whole domain.
        """
        unknown = set(bounds) - set(schema.names)
        if unknown:
            raise SchemaError(f"unknown features {sorted(unknown)}")
        lo, hi, cats = [], [], []
        for spec in schema.features:
            b = bounds.get(spec.name)
            if spec.is_integer:
                if b is None:
                    mn, mx = spec.lo, spec.hi
                else:
                    mn, mx = b
                    mn = (mn,) if isinstance(mn, int) else tuple(mn)
                    mx = (mx,) if isinstance(mx, int) else tuple(mx)
                lo.extend(mn)
                hi.extend(mx)
            else:
                s = frozenset(spec.symbols if b is None else ((b,) if isinstance(b, str) else b))
                if not s <= set(spec.symbols):
                    raise DomainError(f"{spec.name}: symbols {sorted(s - set(spec.symbols))} not in domain")
                cats.append(s)
        out = cls(schema, tuple(lo), tuple(hi), tuple(cats))
        out.validate()
        return out

    def validate(self) -> None:
        if len(self.lo) != self.schema.n_int_axes or len(self.cats) != len(self.schema.cat_positions):
            raise SchemaError("AABI shape does not match its schema")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise DomainError("AABI has min > max on some axis")
        for pos, s in zip(self.schema.cat_positions, self.cats):
            if not s:
                raise DomainError("AABI has an empty categorical set")
            if not s <= set(self.schema.features[pos].symbols):
                raise DomainError("AABI categorical set outside the feature domain")

    def bounds(self) -> dict:
        """Per-feature view: ``(min, max)`` tuples or symbol sets."""
        out = {}
        for i, start, stop in self.schema.int_slices:
            out[self.schema.features[i].name] = (self.lo[start:stop], self.hi[start:stop])
        for pos, s in zip(self.schema.cat_positions, self.cats):
            out[self.schema.features[pos].name] = s
        return out

    @property
    def volume(self) -> int:
        """Number of distinct points covered."""
        return prod(b - a + 1 for a, b in zip(self.lo, self.hi)) * prod(len(s) for s in self.cats)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi and all(len(s) == 1 for s in self.cats)

    def to_json(self) -> dict:
        out = {}
        for name, b in self.bounds().items():
            if isinstance(b, frozenset):
                out[name] = {"set": sorted(b)}
            else:
                out[name] = {"min": list(b[0]), "max": list(b[1])}
        return out

    @classmethod
    def from_json(cls, schema: FeatureSchema, obj: Mapping[str, Any]) -> "AABI":
        bounds = {}
        for name, b in obj.items():
            bounds[name] = set(b["set"]) if "set" in b else (tuple(b["min"]), tuple(b["max"]))
        return cls.from_bounds(schema, bounds)

    def __repr__(self):
        parts = []
        for name, b in self.bounds().items():
            if isinstance(b, frozenset):
                parts.append(f"{name}={sorted(b)}")
            elif b[0] == b[1]:
                parts.append(f"{name}={b[0]}")
            else:
                parts.append(f"{name}=[{b[0]}..{b[1]}]")
        return "AABI(" + ", ".join(parts) + ")"


def _check(aabi: AABI, schema: FeatureSchema) -> None:
    if not aabi.schema.compatible(schema):
        raise SchemaError("AABI and state/interval use different schemas")


def contains_flat(aabi: AABI, ints: Tuple[int, ...], cats: Tuple[str, ...]) -> bool:
    """Containment on an already-flattened point (``cats`` are symbols)."""
    for v, a, b in zip(ints, aabi.lo, aabi.hi):
        if v < a or v > b:
            return False
    for v, s in zip(cats, aabi.cats):
        if v not in s:
            return False
    return True


def _cat_symbols(state: SymbolicState) -> Tuple[str, ...]:
    return tuple(state.values[i] for i in state.schema.cat_positions)


def contains_point(aabi: AABI, state: SymbolicState) -> bool:
    _check(aabi, state.schema)
    ints, _ = state.schema.flatten(state.values)
    return contains_flat(aabi, ints, _cat_symbols(state))


def intervals_overlap(a: AABI, b: AABI) -> bool:
    """False iff some axis separates ``a`` from ``b``."""
    _check(a, b.schema)
    for alo, ahi, blo, bhi in zip(a.lo, a.hi, b.lo, b.hi):
        if alo > bhi or blo > ahi:
            return False
    for sa, sb in zip(a.cats, b.cats):
        if sa.isdisjoint(sb):
            return False
    return True


def relax_interval(aabi: AABI, state: SymbolicState) -> AABI:
    """Smallest expansion of ``aabi`` that also covers ``state``."""
    _check(aabi, state.schema)
    ints, _ = state.schema.flatten(state.values)
    lo = tuple(min(a, v) for a, v in zip(aabi.lo, ints))
    hi = tuple(max(b, v) for b, v in zip(aabi.hi, ints))
    cats = tuple(s | {v} for s, v in zip(aabi.cats, _cat_symbols(state)))
    return AABI(aabi.schema, lo, hi, cats)


def hull(a: AABI, b: AABI) -> AABI:
    _check(a, b.schema)
    return AABI(
        a.schema,
        tuple(map(min, a.lo, b.lo)),
        tuple(map(max, a.hi, b.hi)),
        tuple(x | y for x, y in zip(a.cats, b.cats)),
    )


def split_axis(aabi: AABI) -> Optional[int]:
    """Flat index of the widest integer axis, lowest index on ties.

    Returns ``None`` when every integer axis is degenerate.
    """
    best, best_extent = None, 0
    for k, (a, b) in enumerate(zip(aabi.lo, aabi.hi)):
        if b - a > best_extent:
            best, best_extent = k, b - a
    return best


def split_interval(aabi: AABI, state: SymbolicState) -> Tuple[Optional[AABI], Optional[AABI]]:
    """Cut ``aabi`` about ``state`` so that neither part contains it.

    The cut removes the state's slab along the widest integer axis; empty parts
    come back as ``None``.  When all integer axes are degenerate the state's
    symbol is dropped from the first categorical set that has more than one
    symbol, returned as the lower part.
    """
    _check(aabi, state.schema)
    ints, _ = state.schema.flatten(state.values)
    k = split_axis(aabi)
    if k is None:
        for j, (s, v) in enumerate(zip(aabi.cats, _cat_symbols(state))):
            if len(s) > 1:
                cats = aabi.cats[:j] + (s - {v},) + aabi.cats[j + 1 :]
                return AABI(aabi.schema, aabi.lo, aabi.hi, cats), None
        return None, None
    v = ints[k]
    lower = upper = None
    if v - 1 >= aabi.lo[k]:
        lower = AABI(aabi.schema, aabi.lo, aabi.hi[:k] + (v - 1,) + aabi.hi[k + 1 :], aabi.cats)
    if v + 1 <= aabi.hi[k]:
        upper = AABI(aabi.schema, aabi.lo[:k] + (v + 1,) + aabi.lo[k + 1 :], aabi.hi, aabi.cats)
    return lower, upper
