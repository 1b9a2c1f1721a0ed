import pytest

from symworld.exceptions import ConfigError, ContractError
from symworld.features import state_key
from symworld.gridenv import (
    ACTIONS,
    Action,
    GridState,
    Layout,
    NoveltySpec,
    build_env,
    enumerate_reachable,
)

EAST, SOUTH, WEST, NORTH = range(4)


def doorkey_state(env, agent, facing, inventory=None, door="Locked"):
    keys = dict(env.layout.keys)
    held = {inventory} if inventory else set()
    return GridState(agent, facing, inventory, tuple(None if c in held else keys[c] for c in env.layout.key_colors), door)


@pytest.fixture
def doorkey():
    return build_env("doorkey", NoveltySpec.parse("doorkeychange", 0))


class TestBuild:
    def test_deterministic(self):
        a, b = build_env("doorkey", seed=7), build_env("doorkey", seed=7)
        assert a.layout_json() == b.layout_json()
        assert [a.reset() for _ in range(5)] == [b.reset() for _ in range(5)]

    def test_lava_mechanics_per_novelty(self):
        assert build_env("lavamaze", NoveltySpec.parse("lavaproof", 10_000)).lava_config == "Terminal"
        assert build_env("lavamaze", NoveltySpec.parse("lavahurts", 10_000)).lava_config == "Harmless"

    def test_novelty_must_fit_environment(self):
        with pytest.raises(ConfigError):
            build_env("empty", NoveltySpec.parse("doorkeychange", 0))
        with pytest.raises(ConfigError):
            build_env("doorkey", NoveltySpec.parse("lavaproof", 0))

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            build_env("minecraft")

    def test_novelty_time_parsing(self):
        assert NoveltySpec.parse("lavaproof", "episodes:30").unit == "episodes"
        assert NoveltySpec.parse("lavaproof", "500").inject_at == 500
        with pytest.raises(ConfigError):
            NoveltySpec.parse("lavaproof", "soon")
        with pytest.raises(ConfigError):
            NoveltySpec.parse("earthquake", 0)

    def test_layout_validation(self):
        with pytest.raises(ConfigError):
            Layout("bad", ("###", "#.#", "###"), starts=(((1, 1), 0),))  # no goal
        with pytest.raises(ConfigError):
            Layout("bad", ("####", "#.G#", "####"), starts=(((0, 1), 0),))  # start in a wall


class TestDynamics:
    def test_unlock_with_yellow_key(self, doorkey):
        doorkey.reset()
        doorkey.set_state(doorkey_state(doorkey, (3, 5), EAST, "yellow"))
        s2, r, term, trunc = doorkey.step(Action.TOGGLE)
        assert s2["DoorState"] == "Closed" and s2["Inventory"] == "None"
        assert (r, term, trunc) == (0.0, False, False)

    def test_bump_into_wall(self, doorkey):
        doorkey.reset()
        s = doorkey.set_state(doorkey_state(doorkey, (2, 5), EAST))
        s2, r, term, _ = doorkey.step(Action.FORWARD)
        assert s2 == s and r == 0.0 and not term

    def test_locked_door_blocks(self, doorkey):
        doorkey.reset()
        s = doorkey.set_state(doorkey_state(doorkey, (3, 5), EAST))
        assert doorkey.step(Action.FORWARD)[0] == s

    def test_goal_ends_episode(self, doorkey):
        doorkey.reset()
        doorkey.set_state(doorkey_state(doorkey, (3, 6), EAST, door="Open"))
        _, r, term, _ = doorkey.step(Action.FORWARD)
        assert r == 1.0 and term
        with pytest.raises(ContractError):
            doorkey.step(Action.FORWARD)

    def test_pickup_and_drop(self, doorkey):
        doorkey.reset()
        doorkey.set_state(doorkey_state(doorkey, (2, 5), WEST))
        s, *_ = doorkey.step(Action.PICKUP)
        assert s["Inventory"] == "YellowKey" and s["YellowKeyStatus"] == "Held"
        s, *_ = doorkey.step(Action.TURN_LEFT)  # now facing south, floor ahead
        s, *_ = doorkey.step(Action.DROP)
        assert s["Inventory"] == "None" and s["YellowKeyLocation"] == (3, 5)

    def test_truncation(self):
        env = build_env("empty", max_steps=5)
        env.reset()
        flags = [env.step(Action.TURN_LEFT)[3] for _ in range(5)]
        assert flags == [False] * 4 + [True]
        assert env.episodes == 1

    def test_lava(self):
        env = build_env("lavamaze")
        env.reset()
        env.set_state(GridState((2, 1), SOUTH, None, (), None))
        _, r, term, _ = env.step(Action.FORWARD)
        assert (r, term) == (-1.0, True)


class TestNovelty:
    def test_door_key_change(self, doorkey):
        doorkey.inject_novelty()
        doorkey.reset()
        s = doorkey.set_state(doorkey_state(doorkey, (3, 5), EAST, "yellow"))
        assert doorkey.step(Action.TOGGLE)[0] == s
        doorkey.set_state(doorkey_state(doorkey, (3, 5), EAST, "blue"))
        assert doorkey.step(Action.TOGGLE)[0]["DoorState"] == "Closed"

    def test_lava_proof(self):
        env = build_env("lavamaze", NoveltySpec.parse("lavaproof", 0))
        env.inject_novelty()
        env.reset()
        env.set_state(GridState((2, 1), SOUTH, None, (), None))
        s2, r, term, _ = env.step(Action.FORWARD)
        assert s2["AgentLocation"] == (3, 1) and (r, term) == (0.0, False)

    def test_lava_hurts(self):
        before = build_env("lavamaze", NoveltySpec.parse("lavahurts", 0))
        after = build_env("lavamaze", NoveltySpec.parse("lavahurts", 0))
        after.inject_novelty()
        for env, outcome in ((before, (0.0, False)), (after, (-1.0, True))):
            env.reset()
            env.set_state(GridState((2, 1), SOUTH, None, (), None))
            assert env.step(Action.FORWARD)[1:3] == outcome

    def test_only_at_episode_boundary_after_schedule(self):
        env = build_env("doorkey", NoveltySpec.parse("doorkeychange", 3))
        assert not env.novelty_due()
        env.reset()
        for _ in range(3):
            env.step(Action.TURN_LEFT)
        assert env.novelty_due()
        with pytest.raises(ContractError):
            env.inject_novelty()  # mid-episode
        env.inject_novelty(force=True)
        with pytest.raises(ContractError):
            env.inject_novelty(force=True)

    def test_episode_clock(self):
        env = build_env("lavamaze", NoveltySpec.parse("lavaproof", "episodes:2"), max_steps=2)
        for _ in range(2):
            assert not env.novelty_due()
            env.reset()
            env.step(Action.TURN_LEFT)
            env.step(Action.TURN_LEFT)
        assert env.novelty_due()
        env.inject_novelty()

    def test_no_novelty_never_due(self):
        env = build_env("empty")
        assert not env.novelty_due()
        with pytest.raises(ContractError):
            env.inject_novelty(force=True)


class TestObservation:
    def test_unlock_scene(self, doorkey):
        doorkey.reset()
        s = doorkey.set_state(doorkey_state(doorkey, (3, 5), EAST, "yellow"))
        assert s["AgentLocation"] == (3, 5)
        assert s["AgentFacing"] == "East"
        assert s["Inventory"] == "YellowKey"
        assert s["DoorState"] == "Locked"
        assert s["DoorLocation"] == (3, 6)
        assert s["CellAhead"] == "Door"

    def test_observe_twice(self, doorkey):
        doorkey.reset()
        assert doorkey.observe_symbolic() == doorkey.observe_symbolic()

    @pytest.mark.parametrize("name", ["empty", "doorkey", "lavamaze"])
    def test_reachable_states_observe_uniquely(self, name):
        env = build_env(name)
        reachable = enumerate_reachable(env)
        observed = {env.observe_symbolic(gs) for gs in reachable}
        assert len(observed) == len(reachable)
        assert len({state_key(s) for s in observed}) == len(reachable)

    def test_render(self, doorkey):
        doorkey.reset()
        doorkey.set_state(doorkey_state(doorkey, (3, 5), EAST, "yellow"))
        lines = doorkey.render().splitlines()
        assert lines[3][5] == ">" and lines[3][6] == "D"
        assert lines[2][4] == "."  # the yellow key is held, not drawn
        assert lines[4][4] == "b"

    def test_actions_are_six(self):
        assert len(ACTIONS) == 6
