"""Deterministic grid worlds with injectable novelties.

Layouts are fixed ASCII maps (walkable area 8x8 inside a wall border, cell
coordinates ``(row, col)`` with rows growing South and columns growing East).
The dynamic part of the world lives in an immutable :class:`GridState`; the
environment object adds episode bookkeeping, the start-pose RNG and the
novelty schedule.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ConfigError, ContractError
from .features import FeatureSchema, FeatureSpec, SymbolicState


class Action(enum.IntEnum):
    TURN_LEFT = 0
    TURN_RIGHT = 1
    FORWARD = 2
    PICKUP = 3
    DROP = 4
    TOGGLE = 5


ACTIONS = tuple(Action)
FACINGS = ("East", "South", "West", "North")
DIRECTIONS = ((0, 1), (1, 0), (0, -1), (-1, 0))
CELL_SYMBOLS = ("Floor", "Wall", "Lava", "Goal", "Door", "YellowKey", "BlueKey")
KEY_SYMBOL = {"yellow": "YellowKey", "blue": "BlueKey"}
KEY_CHARS = {"y": "yellow", "b": "blue"}
NOWHERE = (0, 0)  # key location while held or consumed; always a wall cell


class NoveltyKind(str, enum.Enum):
    NONE = "none"
    DOOR_KEY_CHANGE = "doorkeychange"
    LAVA_PROOF = "lavaproof"
    LAVA_HURTS = "lavahurts"


@dataclass(frozen=True)
class NoveltySpec:
    kind: NoveltyKind = NoveltyKind.NONE
    inject_at: int = 10_000
    unit: str = "steps"  # or "episodes"

    def __post_init__(self):
        object.__setattr__(self, "kind", NoveltyKind(self.kind))
        if self.unit not in ("steps", "episodes"):
            raise ConfigError(f"novelty unit must be 'steps' or 'episodes', not {self.unit!r}")
        if self.inject_at < 0:
            raise ConfigError("inject_at must be non-negative")

    @classmethod
    def parse(cls, kind: str, at: str | int = 10_000) -> "NoveltySpec":
        """``at`` is a step count or ``"episodes:N"``."""
        try:
            kind = NoveltyKind(str(kind).lower())
        except ValueError:
            raise ConfigError(f"unknown novelty {kind!r}") from None
        if isinstance(at, str) and at.startswith("episodes:"):
            return cls(kind, int(at.split(":", 1)[1]), "episodes")
        if isinstance(at, str) and at.startswith("steps:"):
            at = at.split(":", 1)[1]
        try:
            return cls(kind, int(at), "steps")
        except ValueError:
            raise ConfigError(f"bad novelty time {at!r}") from None


@dataclass(frozen=True)
class Layout:
    name: str
    rows: Tuple[str, ...]
    starts: Tuple[Tuple[Tuple[int, int], int], ...]
    cells: Tuple[Tuple[str, ...], ...] = field(init=False, repr=False)
    goal: Tuple[int, int] = field(init=False)
    door: Optional[Tuple[int, int]] = field(init=False)
    keys: Tuple[Tuple[str, Tuple[int, int]], ...] = field(init=False)

    def __post_init__(self):
        if len({len(r) for r in self.rows}) != 1:
            raise ConfigError("layout rows must have equal length")
        cells, goals, doors, keys = [], [], [], []
        for r, line in enumerate(self.rows):
            row = []
            for c, ch in enumerate(line):
                if ch == "#":
                    row.append("Wall")
                elif ch == ".":
                    row.append("Floor")
                elif ch == "L":
                    row.append("Lava")
                elif ch == "G":
                    row.append("Goal")
                    goals.append((r, c))
                elif ch == "D":
                    row.append("Door")
                    doors.append((r, c))
                elif ch in KEY_CHARS:
                    row.append("Floor")
                    keys.append((KEY_CHARS[ch], (r, c)))
                else:
                    raise ConfigError(f"unknown layout character {ch!r}")
            cells.append(tuple(row))
        if len(goals) != 1:
            raise ConfigError("layout needs exactly one goal")
        if len(doors) > 1:
            raise ConfigError("at most one door is supported")
        if doors and not keys:
            raise ConfigError("a door needs at least one key")
        if len({k for k, _ in keys}) != len(keys):
            raise ConfigError("key colours must be unique")
        keys.sort(key=lambda kv: ("yellow", "blue").index(kv[0]))
        for r, c in [NOWHERE] + [p for p, _ in self.starts]:
            if cells[r][c] not in ("Floor",) and (r, c) != NOWHERE:
                raise ConfigError(f"start {(r, c)} is not a floor cell")
        if cells[NOWHERE[0]][NOWHERE[1]] != "Wall":
            raise ConfigError("cell (0, 0) must be a wall")
        object.__setattr__(self, "cells", tuple(cells))
        object.__setattr__(self, "goal", goals[0])
        object.__setattr__(self, "door", doors[0] if doors else None)
        object.__setattr__(self, "keys", tuple(keys))

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def key_colors(self) -> Tuple[str, ...]:
        return tuple(k for k, _ in self.keys)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "rows": list(self.rows),
            "starts": [{"position": list(p), "facing": FACINGS[f]} for p, f in self.starts],
        }


EMPTY = Layout(
    "Empty",
    (
        "##########",
        "#........#",
        "#........#",
        "#........#",
        "#........#",
        "#........#",
        "#........#",
        "#........#",
        "#.......G#",
        "##########",
    ),
    starts=(((1, 1), 0), ((1, 1), 1), ((2, 2), 0)),
)

DOOR_KEY = Layout(
    "DoorKey",
    (
        "##########",
        "##########",
        "####y.####",
        "####..DG##",
        "####b.####",
        "##########",
        "##########",
        "##########",
        "##########",
        "##########",
    ),
    starts=(((3, 4), 0), ((3, 5), 2), ((3, 5), 3)),
)

LAVA_SHORTCUT_MAZE = Layout(
    "LavaShortcutMaze",
    (
        "##########",
        "#....#####",
        "#.##.#####",
        "#L##.#####",
        "#G...#####",
        "##########",
        "##########",
        "##########",
        "##########",
        "##########",
    ),
    starts=(((1, 1), 1), ((1, 1), 0), ((1, 2), 2)),
)

LAYOUTS = {"empty": EMPTY, "doorkey": DOOR_KEY, "lavamaze": LAVA_SHORTCUT_MAZE}
_ALIASES = {"lavashortcutmaze": "lavamaze", "door_key": "doorkey"}


def _layout_named(name: str) -> Layout:
    key = str(name).lower()
    key = _ALIASES.get(key, key)
    if key not in LAYOUTS:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(LAYOUTS)}")
    return LAYOUTS[key]


@dataclass(frozen=True, slots=True)
class GridState:
    agent: Tuple[int, int]
    facing: int
    inventory: Optional[str]
    keys: Tuple[Optional[Tuple[int, int]], ...]  # aligned with Layout.key_colors
    door: Optional[str]  # "Locked" | "Closed" | "Open"


def make_schema(layout: Layout) -> FeatureSchema:
    lo, hi = (0, 0), (layout.height - 1, layout.width - 1)
    feats = [
        FeatureSpec.integer("AgentLocation", lo, hi),
        FeatureSpec.categorical("AgentFacing", FACINGS),
        FeatureSpec.categorical("Inventory", ("None",) + tuple(KEY_SYMBOL[k] for k in layout.key_colors)),
        FeatureSpec.categorical("CellAhead", CELL_SYMBOLS),
        FeatureSpec.integer("GoalLocation", lo, hi),
    ]
    if layout.door is not None:
        feats.append(FeatureSpec.integer("DoorLocation", lo, hi))
        feats.append(FeatureSpec.categorical("DoorState", ("Locked", "Closed", "Open")))
    for color in layout.key_colors:
        name = KEY_SYMBOL[color]
        feats.append(FeatureSpec.categorical(f"{name}Status", ("Floor", "Held", "Gone")))
        feats.append(FeatureSpec.integer(f"{name}Location", lo, hi))
    return FeatureSchema(layout.name, tuple(feats))


class GridEnv:
    """One environment instance: layout, mechanics config, episode state.

    Parameters
    ----------
    layout : Layout
    novelty : NoveltySpec
    seed : int
        Seeds the start-pose draw at every reset.
    lava_terminal : bool
        Entering lava ends the episode with reward -1 when true.
    door_key : str
        Colour of the key that unlocks the door.
    max_steps : int, optional
        Truncation bound; defaults to four times the walkable area.
    """

    def __init__(
        self,
        layout: Layout,
        novelty: NoveltySpec = NoveltySpec(),
        seed: int = 0,
        lava_terminal: bool = True,
        door_key: str = "yellow",
        max_steps: Optional[int] = None,
    ):
        self.layout = layout
        self.novelty = novelty
        self.seed = seed
        self.lava_terminal = lava_terminal
        self.door_key = door_key
        self.max_steps = max_steps or 4 * (layout.height - 2) * (layout.width - 2)
        self.schema = make_schema(layout)
        self.rng = np.random.default_rng(seed)
        self.injected = False
        self.global_steps = 0
        self.episodes = 0
        self.step_count = 0
        self.done = True
        self.state: Optional[GridState] = None

    # -- configuration -------------------------------------------------------

    @property
    def lava_config(self) -> str:
        return "Terminal" if self.lava_terminal else "Harmless"

    def initial_state(self, start: int = 0) -> GridState:
        pos, facing = self.layout.starts[start]
        keys = tuple(p for _, p in self.layout.keys)
        door = "Locked" if self.layout.door is not None else None
        return GridState(pos, facing, None, keys, door)

    # -- dynamics --------------------------------------------------------------

    def _key_at(self, gs: GridState, pos) -> Optional[int]:
        for i, p in enumerate(gs.keys):
            if p == pos:
                return i
        return None

    def cell_ahead(self, gs: GridState) -> str:
        dr, dc = DIRECTIONS[gs.facing]
        pos = (gs.agent[0] + dr, gs.agent[1] + dc)
        k = self._key_at(gs, pos)
        if k is not None:
            return KEY_SYMBOL[self.layout.key_colors[k]]
        return self.layout.cells[pos[0]][pos[1]]

    def dynamics(self, gs: GridState, action: Action) -> Tuple[GridState, float, bool]:
        """Pure transition under the current mechanics: ``(next, reward, terminated)``."""
        action = Action(action)
        if action is Action.TURN_LEFT:
            return replace(gs, facing=(gs.facing - 1) % 4), 0.0, False
        if action is Action.TURN_RIGHT:
            return replace(gs, facing=(gs.facing + 1) % 4), 0.0, False
        dr, dc = DIRECTIONS[gs.facing]
        front = (gs.agent[0] + dr, gs.agent[1] + dc)
        cell = self.layout.cells[front[0]][front[1]]
        key = self._key_at(gs, front)
        if action is Action.FORWARD:
            if cell == "Wall" or key is not None or (cell == "Door" and gs.door != "Open"):
                return gs, 0.0, False
            moved = replace(gs, agent=front)
            if cell == "Goal":
                return moved, 1.0, True
            if cell == "Lava" and self.lava_terminal:
                return moved, -1.0, True
            return moved, 0.0, False
        if action is Action.PICKUP:
            if key is not None and gs.inventory is None:
                keys = gs.keys[:key] + (None,) + gs.keys[key + 1 :]
                return replace(gs, inventory=self.layout.key_colors[key], keys=keys), 0.0, False
            return gs, 0.0, False
        if action is Action.DROP:
            if gs.inventory is not None and cell == "Floor" and key is None:
                i = self.layout.key_colors.index(gs.inventory)
                keys = gs.keys[:i] + (front,) + gs.keys[i + 1 :]
                return replace(gs, inventory=None, keys=keys), 0.0, False
            return gs, 0.0, False
        # toggle
        if cell == "Door":
            if gs.door == "Locked":
                if gs.inventory == self.door_key:
                    # the key is used up
                    return replace(gs, door="Closed", inventory=None), 0.0, False
                return gs, 0.0, False
            return replace(gs, door="Open" if gs.door == "Closed" else "Closed"), 0.0, False
        return gs, 0.0, False

    # -- episode API -------------------------------------------------------------

    def reset(self) -> SymbolicState:
        start = int(self.rng.integers(len(self.layout.starts)))
        self.state = self.initial_state(start)
        self.step_count = 0
        self.done = False
        return self.observe_symbolic()

    def step(self, action) -> Tuple[SymbolicState, float, bool, bool]:
        if self.done or self.state is None:
            raise ContractError("step() called on a finished episode; call reset()")
        self.state, reward, terminated = self.dynamics(self.state, action)
        self.step_count += 1
        self.global_steps += 1
        truncated = not terminated and self.step_count >= self.max_steps
        if terminated or truncated:
            self.done = True
            self.episodes += 1
        return self.observe_symbolic(), reward, terminated, truncated

    def set_state(self, gs: GridState) -> SymbolicState:
        """Place the world in ``gs`` mid-episode (for enumeration and tests)."""
        self.state = gs
        self.done = False
        return self.observe_symbolic()

    # -- novelty -----------------------------------------------------------------

    def novelty_due(self) -> bool:
        if self.novelty.kind is NoveltyKind.NONE or self.injected:
            return False
        clock = self.global_steps if self.novelty.unit == "steps" else self.episodes
        return clock >= self.novelty.inject_at

    def inject_novelty(self, force: bool = False) -> None:
        """Swap the mechanics; only legal between episodes once the clock passed."""
        if self.injected:
            raise ContractError("novelty already injected")
        if self.novelty.kind is NoveltyKind.NONE:
            raise ContractError("this environment has no novelty configured")
        if not force and (not self.done or not self.novelty_due()):
            raise ContractError("novelty can only be injected at an episode boundary after inject_at")
        kind = self.novelty.kind
        if kind is NoveltyKind.DOOR_KEY_CHANGE:
            if self.layout.door is None or "blue" not in self.layout.key_colors:
                raise ConfigError("DoorKeyChange needs a door and a blue key")
            self.door_key = "blue"
        elif kind is NoveltyKind.LAVA_PROOF:
            self.lava_terminal = False
        elif kind is NoveltyKind.LAVA_HURTS:
            self.lava_terminal = True
        self.injected = True

    # -- observation ---------------------------------------------------------------

    def observe_symbolic(self, gs: Optional[GridState] = None) -> SymbolicState:
        gs = self.state if gs is None else gs
        layout = self.layout
        values: list = [
            gs.agent,
            FACINGS[gs.facing],
            "None" if gs.inventory is None else KEY_SYMBOL[gs.inventory],
            self.cell_ahead(gs),
            layout.goal,
        ]
        if layout.door is not None:
            values.append(layout.door)
            values.append(gs.door)
        for color, pos in zip(layout.key_colors, gs.keys):
            if gs.inventory == color:
                values.append("Held")
            elif pos is None:
                values.append("Gone")
            else:
                values.append("Floor")
            values.append(NOWHERE if pos is None else pos)
        return SymbolicState(self.schema, tuple(values))

    def render(self, gs: Optional[GridState] = None) -> str:
        """One character per cell; the agent is drawn as an arrow."""
        gs = self.state if gs is None else gs
        chars = {"Wall": "#", "Floor": ".", "Lava": "L", "Goal": "G"}
        door_chars = {"Locked": "D", "Closed": "d", "Open": "_"}
        grid = []
        for r, row in enumerate(self.layout.cells):
            line = []
            for c, cell in enumerate(row):
                line.append(door_chars[gs.door] if cell == "Door" else chars[cell])
            grid.append(line)
        for color, pos in zip(self.layout.key_colors, gs.keys):
            if pos is not None:
                grid[pos[0]][pos[1]] = color[0]
        grid[gs.agent[0]][gs.agent[1]] = ">v<^"[gs.facing]
        return "\n".join("".join(line) for line in grid)

    def layout_json(self) -> str:
        return json.dumps(self.layout.to_json(), indent=2)


def build_env(name: str, novelty: NoveltySpec = NoveltySpec(), seed: int = 0, max_steps: Optional[int] = None) -> GridEnv:
    """Environment by name with its pre-novelty mechanics."""
    layout = _layout_named(name)
    kind = novelty.kind
    if kind is NoveltyKind.DOOR_KEY_CHANGE and layout is not DOOR_KEY:
        raise ConfigError("DoorKeyChange applies to the DoorKey environment")
    if kind in (NoveltyKind.LAVA_PROOF, NoveltyKind.LAVA_HURTS) and layout is not LAVA_SHORTCUT_MAZE:
        raise ConfigError(f"{kind.value} applies to the LavaShortcutMaze environment")
    return GridEnv(
        layout,
        novelty=novelty,
        seed=seed,
        lava_terminal=kind is not NoveltyKind.LAVA_HURTS,
        door_key="yellow",
        max_steps=max_steps,
    )


def is_terminal_state(env: GridEnv, gs: GridState) -> bool:
    cell = env.layout.cells[gs.agent[0]][gs.agent[1]]
    return cell == "Goal" or (cell == "Lava" and env.lava_terminal)


def enumerate_reachable(env: GridEnv) -> List[GridState]:
    """Every state reachable from any start pose, in breadth-first order.

    Terminal states are included but not expanded.
    """
    seen: Dict[GridState, None] = {}
    queue = deque()
    for i in range(len(env.layout.starts)):
        gs = env.initial_state(i)
        if gs not in seen:
            seen[gs] = None
            queue.append(gs)
    while queue:
        gs = queue.popleft()
        if is_terminal_state(env, gs):
            continue
        for a in ACTIONS:
            nxt, _, _ = env.dynamics(gs, a)
            if nxt not in seen:
                seen[nxt] = None
                queue.append(nxt)
    return list(seen)
