import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from symworld.features import FeatureSchema, FeatureSpec, make_state  # noqa: E402


@pytest.fixture
def door_schema():
    """Hand-built schema for the unlock scene: agent, inventory, one door."""
    return FeatureSchema(
        "unlock-scene",
        (
            FeatureSpec.integer("AgentLocation", (0, 0), (9, 9)),
            FeatureSpec.categorical("AgentFacing", ("East", "South", "West", "North")),
            FeatureSpec.categorical("Inventory", ("None", "YellowKey", "BlueKey")),
            FeatureSpec.integer("DoorLocation", (0, 0), (9, 9)),
            FeatureSpec.categorical("DoorState", ("Locked", "Closed", "Open")),
        ),
    )


@pytest.fixture
def unlock_transition(door_schema):
    before = make_state(
        door_schema,
        {
            "AgentLocation": (3, 5),
            "AgentFacing": "East",
            "Inventory": "YellowKey",
            "DoorLocation": (3, 6),
            "DoorState": "Locked",
        },
    )
    after = before.replace(Inventory="None", DoorState="Closed")
    return before, after
