import itertools

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from strategies import aabis, schemas, states
from symworld.exceptions import DomainError, SchemaError
from symworld.features import FeatureSchema, FeatureSpec, make_state
from symworld.geometry import (
    AABI,
    contains_point,
    hull,
    intervals_overlap,
    relax_interval,
    split_interval,
)


@pytest.fixture
def grid():
    """Two-feature schema: a location on a 10x10 board and a door state."""
    return FeatureSchema(
        "grid",
        (
            FeatureSpec.integer("AgentLocation", (0, 0), (9, 9)),
            FeatureSpec.categorical("DoorState", ("Locked", "Closed", "Open")),
        ),
    )


def box(schema, lo, hi, door=("Locked", "Closed", "Open")):
    return AABI.from_bounds(schema, {"AgentLocation": (lo, hi), "DoorState": set(door)})


def at(schema, loc, door="Locked"):
    return make_state(schema, {"AgentLocation": loc, "DoorState": door})


def enumerate_points(schema):
    """Every state of a small schema, for brute-force oracles."""
    axes = []
    for f in schema.features:
        if f.is_integer:
            axes.append(list(itertools.product(*(range(a, b + 1) for a, b in zip(f.lo, f.hi)))))
        else:
            axes.append(list(f.symbols))
    for values in itertools.product(*axes):
        yield make_state(schema, list(values))


class TestContains:
    def test_point_interval(self, door_schema, unlock_transition):
        before, _ = unlock_transition
        a = AABI.from_bounds(door_schema, {"AgentLocation": ((3, 5), (3, 5))})
        assert contains_point(a, before)

    def test_scalar_axis_separates(self):
        schema = FeatureSchema("line", (FeatureSpec.integer("x", (0,), (9,)),))
        a = AABI.from_bounds(schema, {"x": (1, 3)})
        assert not contains_point(a, make_state(schema, {"x": 4}))
        assert contains_point(a, make_state(schema, {"x": 3}))

    def test_categorical_membership(self, grid):
        assert contains_point(box(grid, (0, 0), (9, 9), {"Locked"}), at(grid, (1, 1)))
        assert not contains_point(box(grid, (0, 0), (9, 9), {"Closed", "Open"}), at(grid, (1, 1)))

    def test_schema_mismatch(self, grid, door_schema, unlock_transition):
        with pytest.raises(SchemaError):
            contains_point(box(grid, (0, 0), (9, 9)), unlock_transition[0])


class TestOverlap:
    def test_both_axes_intersect(self, grid):
        assert intervals_overlap(box(grid, (1, 1), (5, 4)), box(grid, (3, 3), (8, 8)))

    def test_separated(self, grid):
        assert not intervals_overlap(box(grid, (1, 1), (2, 2)), box(grid, (3, 3), (4, 4)))

    def test_reflexive(self, grid):
        a = box(grid, (2, 3), (4, 7), {"Open"})
        assert intervals_overlap(a, a)

    def test_disjoint_symbols_separate(self, grid):
        assert not intervals_overlap(box(grid, (0, 0), (9, 9), {"Locked"}), box(grid, (0, 0), (9, 9), {"Open"}))

    def test_touching_edges_overlap(self, grid):
        assert intervals_overlap(box(grid, (1, 1), (3, 3)), box(grid, (3, 3), (5, 5)))


class TestRelax:
    def test_grows_to_cover(self, grid):
        assert relax_interval(box(grid, (1, 1), (5, 2)), at(grid, (3, 4))) == box(grid, (1, 1), (5, 4))

    def test_contained_point_is_idempotent(self, grid):
        a = box(grid, (1, 1), (5, 4))
        assert relax_interval(a, at(grid, (2, 2))) == a

    def test_point_interval_grows_componentwise(self, grid):
        p = box(grid, (2, 2), (2, 2), {"Locked"})
        assert relax_interval(p, at(grid, (1, 1))) == box(grid, (1, 1), (2, 2), {"Locked"})

    def test_adds_symbol(self, grid):
        p = box(grid, (2, 2), (2, 2), {"Locked"})
        assert relax_interval(p, at(grid, (2, 2), "Open")).cats == (frozenset({"Locked", "Open"}),)


class TestSplit:
    def test_tie_goes_to_row_axis(self, grid):
        lower, upper = split_interval(box(grid, (1, 1), (8, 8)), at(grid, (3, 5)))
        assert lower == box(grid, (1, 1), (2, 8))
        assert upper == box(grid, (4, 1), (8, 8))

    def test_point_interval_vanishes(self, grid):
        assert split_interval(box(grid, (3, 5), (3, 5), {"Locked"}), at(grid, (3, 5))) == (None, None)

    def test_one_sided(self, grid):
        lower, upper = split_interval(box(grid, (1, 1), (1, 8)), at(grid, (1, 1)))
        assert lower is None
        assert upper == box(grid, (1, 2), (1, 8))

    def test_categorical_fallback(self, grid):
        a = box(grid, (4, 4), (4, 4), {"Locked", "Open"})
        lower, upper = split_interval(a, at(grid, (4, 4), "Open"))
        assert lower == box(grid, (4, 4), (4, 4), {"Locked"})
        assert upper is None


class TestFromBounds:
    def test_missing_features_span_domain(self, grid):
        a = AABI.from_bounds(grid, {})
        assert a.volume == 100 * 3

    def test_rejects_inverted_bounds(self, grid):
        with pytest.raises(DomainError):
            box(grid, (5, 5), (4, 4))

    def test_rejects_unknown_symbol(self, grid):
        with pytest.raises(DomainError):
            box(grid, (0, 0), (1, 1), {"Ajar"})

    def test_json_round_trip(self, grid):
        a = box(grid, (1, 2), (3, 4), {"Open", "Closed"})
        assert AABI.from_json(grid, a.to_json()) == a


# -- properties ----------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_relax_is_the_smallest_cover(data):
    schema = data.draw(schemas(max_int=2, max_cat=1, max_extent=3, max_symbols=3))
    a = data.draw(aabis(schema))
    s = data.draw(states(schema))
    grown = relax_interval(a, s)
    assert contains_point(grown, s)
    # the hull of a and the point is the smallest box holding both
    assert grown == hull(a, AABI.point(s))
    for p in enumerate_points(schema):
        if contains_point(a, p):
            assert contains_point(grown, p)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_split_removes_exactly_a_slab(data):
    schema = data.draw(schemas(max_int=2, max_cat=1, max_extent=3, max_symbols=3))
    a = data.draw(aabis(schema))
    s = data.draw(states(schema))
    assume(contains_point(a, s))
    lower, upper = split_interval(a, s)
    parts = [p for p in (lower, upper) if p is not None]
    for p in parts:
        assert not contains_point(p, s)
    if len(parts) == 2:
        assert not intervals_overlap(*parts)
    for p in enumerate_points(schema):
        in_parts = any(contains_point(q, p) for q in parts)
        if in_parts:
            assert contains_point(a, p)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_overlap_matches_brute_force(data):
    schema = data.draw(schemas(max_int=2, max_cat=1, max_extent=3, max_symbols=3))
    a, b = data.draw(aabis(schema)), data.draw(aabis(schema))
    shared = any(contains_point(a, p) and contains_point(b, p) for p in enumerate_points(schema))
    assert intervals_overlap(a, b) == shared
    assert intervals_overlap(a, b) == intervals_overlap(b, a)
