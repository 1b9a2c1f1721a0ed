"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (visible in
``pytest -v`` output) before asserting.
"""

import json
import statistics
import time

import numpy as np
import pytest

from symworld.adaptation import AdaptationConfig, model_learning_curve
from symworld.cli import EXIT_OK, run_cli
from symworld.detector import DetectorState
from symworld.features import FeatureSchema, FeatureSpec, SymbolicState
from symworld.gridenv import ACTIONS, Action, GridState, NoveltySpec, build_env
from symworld.harness import ExperimentSpec, run_experiment
from symworld.metrics import EpisodeRecord, adaptive_efficiency, moving_average, update_efficiency
from symworld.policy import TabularQPolicy
from symworld.rules import IntervalRuleModel, Prediction

from test_policy import chain_transitions, pos, value_iteration
from test_rules import learn_exhaustively

DOORKEY_SEEDS = 7
LAVA_SEEDS = 3


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def test_1_rule_learner_converges_on_empty_grid(verdict):
    env = build_env("empty")
    t0 = time.perf_counter()
    _, curve = model_learning_curve(env, 20_000, probe_every=100, probe_steps=1000, seed=0, stop_at_zero=True)
    elapsed = time.perf_counter() - t0
    below_1pct = next((step for step, err in curve if err < 0.01), None)
    exact = next((step for step, err in curve if err == 0), None)
    ok = below_1pct is not None and below_1pct <= 5000 and exact is not None and exact <= 20_000 and elapsed < 10
    verdict(1, ok, f"<1% at step {below_1pct}, 0% at step {exact}, {elapsed:.1f}s")


def test_2_oracle_equivalence_on_doorkey(verdict):
    env = build_env("doorkey")
    t0 = time.perf_counter()
    model, pairs = learn_exhaustively(env)
    elapsed = time.perf_counter() - t0
    matched = sum(model.predict_one(s, a).matches(n, r, d) for s, a, n, r, d in pairs)
    ok = matched == len(pairs) and elapsed < 60
    verdict(2, ok, f"{matched}/{len(pairs)} reachable pairs, {model.n_rules} rules, {elapsed:.1f}s")


def _random_schema(rng):
    n_int = int(rng.integers(0, 3))
    n_cat = int(rng.integers(0 if n_int else 1, 3))
    feats = []
    for i in range(n_int):
        lo = tuple(int(v) for v in rng.integers(-3, 4, size=int(rng.integers(1, 3))))
        feats.append(FeatureSpec.integer(f"i{i}", lo, tuple(v + int(rng.integers(0, 5)) for v in lo)))
    for j in range(n_cat):
        feats.append(FeatureSpec.categorical(f"c{j}", [f"s{m}" for m in range(int(rng.integers(1, 4)))]))
    return FeatureSchema("fuzz", tuple(feats[k] for k in rng.permutation(len(feats))))


def _random_state(rng, schema):
    values = []
    for f in schema.features:
        if f.is_integer:
            values.append(tuple(int(rng.integers(a, b + 1)) for a, b in zip(f.lo, f.hi)))
        else:
            values.append(f.symbols[int(rng.integers(len(f.symbols)))])
    return SymbolicState(schema, tuple(values))


def test_3_collision_freedom_under_fuzzing(verdict):
    rng = np.random.default_rng(2024)
    failures = 0
    updates = 0
    for _ in range(10_000):
        schema = _random_schema(rng)
        model = IntervalRuleModel(check_invariants=True)
        for _ in range(int(rng.integers(1, 26))):
            s = _random_state(rng, schema)
            t = s if rng.random() < 0.5 else _random_state(rng, schema)
            a, r, d = int(rng.integers(3)), float(rng.integers(2)), bool(rng.integers(2))
            model.update(s, a, t, r, d)  # raises on an invariant violation
            updates += 1
            failures += not model.predict_one(s, a).matches(t, r, d)
    verdict(3, failures == 0, f"10000 sequences, {updates} updates, {failures} unsound predictions")


def test_4_detector_on_door_key_change(verdict):
    env = build_env("doorkey", NoveltySpec.parse("doorkeychange", 0))
    model, _ = learn_exhaustively(env)
    model.freeze()

    env.inject_novelty()
    env.reset()
    det = DetectorState(n=2)
    r, c = env.layout.door
    events = []
    for attempt in range(2):
        s = env.set_state(GridState((r, c - 1), 0, "yellow", (None, dict(env.layout.keys)["blue"]), "Locked"))
        pred = model.predict_one(s, Action.TOGGLE)
        s2, rew, term, _ = env.step(Action.TOGGLE)
        events.append(det.observe(s, pred, s2, rew, term, step=attempt))
    fires_on_second = isinstance(pred, Prediction) and events[0] is None and events[1] is not None

    soak_env = build_env("doorkey", seed=11)
    soak = DetectorState(n=2)
    rng = np.random.default_rng(11)
    s = soak_env.reset()
    false_positives = 0
    for step in range(10_000):
        a = ACTIONS[int(rng.integers(len(ACTIONS)))]
        pred = model.predict_one(s, a)
        s2, rew, term, trunc = soak_env.step(a)
        false_positives += soak.observe(s, pred, s2, rew, term, step) is not None
        s = soak_env.reset() if term or trunc else s2
    ok = fires_on_second and false_positives == 0
    verdict(4, ok, f"fires on second failed unlock: {fires_on_second}; soak false positives: {false_positives}")


@pytest.fixture(scope="module")
def doorkey_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("doorkeychange")
    t0 = time.perf_counter()
    code = run_cli(
        [
            "--env", "doorkey",
            "--novelty", "doorkeychange",
            "--novelty-at", "100000",
            "--agent", "worldcloner", "baseline",
            "--seeds", str(DOORKEY_SEEDS),
            "--out", str(out),
        ]
    )  # fmt: skip
    elapsed = time.perf_counter() - t0
    reports = {}
    for path in out.glob("*_seed*.json"):
        rep = json.loads(path.read_text())
        reports[(rep["experiment"]["agent"], rep["experiment"]["seed"])] = rep
    return code, out, reports, elapsed


def _median_metric(reports, agent, key):
    vals = []
    for (a, _), rep in sorted(reports.items()):
        if a == agent:
            v = rep["metrics"][key]
            vals.append(float("inf") if isinstance(v, str) else v)
    return statistics.median(vals), vals


def test_5_worldcloner_beats_baseline_on_door_key_change(doorkey_runs, verdict):
    code, _, reports, elapsed = doorkey_runs
    wc_steps, wc_s = _median_metric(reports, "worldcloner", "adaptive_efficiency_steps")
    bl_steps, bl_s = _median_metric(reports, "baseline", "adaptive_efficiency_steps")
    wc_upd, _ = _median_metric(reports, "worldcloner", "update_efficiency_updates")
    bl_upd, _ = _median_metric(reports, "baseline", "update_efficiency_updates")
    ok = code == EXIT_OK and len(reports) == 2 * DOORKEY_SEEDS and wc_steps < bl_steps and wc_upd < bl_upd and elapsed < 900
    verdict(
        5,
        ok,
        f"median steps {wc_steps:g} vs {bl_steps:g}, median updates {wc_upd:g} vs {bl_upd:g} "
        f"(worldcloner vs baseline, {DOORKEY_SEEDS} seeds, {elapsed:.0f}s); steps per seed {wc_s} vs {bl_s}",
    )


def test_6_all_scenarios_adapt(doorkey_runs, verdict):
    _, _, reports, _ = doorkey_runs
    outcomes = {}
    for (agent, seed), rep in reports.items():
        if agent == "worldcloner":
            outcomes[("doorkeychange", seed)] = rep["metrics"]
    for novelty in ("lavaproof", "lavahurts"):
        for seed in range(LAVA_SEEDS):
            spec = ExperimentSpec("lavamaze", novelty, "100000", "worldcloner", seed, AdaptationConfig(seed=seed))
            outcomes[(novelty, seed)] = run_experiment(spec).report["metrics"]
    failed = sorted(k for k, m in outcomes.items() if m["failed_to_adapt"])
    margins = {
        n: round(min(m["asymptote_minus_random"] for (k, _), m in outcomes.items() if k == n), 3)
        for n in ("doorkeychange", "lavaproof", "lavahurts")
    }
    verdict(6, not failed, f"{len(outcomes)} worldcloner runs, failed: {failed or 'none'}, min asymptote - random: {margins}")


def test_7_identical_runs_are_byte_identical(doorkey_runs, tmp_path, verdict):
    _, out, _, _ = doorkey_runs
    cfg = AdaptationConfig(seed=0)
    first = run_experiment(ExperimentSpec("doorkey", "doorkeychange", "100000", "worldcloner", 0, cfg))
    stem = first.spec.stem
    csv_same = first.csv_text.encode() == (out / f"{stem}.csv").read_bytes()
    series_same = first.series_text.encode() == (out / f"{stem}_series.csv").read_bytes()
    report_same = first.report == json.loads((out / f"{stem}.json").read_text())
    # a second CLI invocation in a fresh directory
    args = ["--env", "lavamaze", "--novelty", "lavahurts", "--novelty-at", "0", "--agent", "worldcloner"]
    run_cli([*args, "--out", str(tmp_path / "a")])
    run_cli([*args, "--out", str(tmp_path / "b")])
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    cli_same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    ok = csv_same and series_same and report_same and cli_same
    verdict(7, ok, f"doorkey csv {csv_same}, series {series_same}, report {report_same}; lava rerun {cli_same} ({len(files)} files)")


def _episodes(returns, length, start_step=0, updates_per_step=0, start_updates=0):
    return [
        EpisodeRecord(i, start_step + (i + 1) * length, r, length, "post", start_updates + (i + 1) * length * updates_per_step)
        for i, r in enumerate(returns)
    ]


def test_8_metric_golden_traces(verdict):
    checks = {}
    # window of 3 over 0,0,0,3,3,3: (0, 1, 2, 3)
    checks["moving_average"] = moving_average([0.0, 0.0, 0.0, 3.0, 3.0, 3.0], 3) == [0.0, 1.0, 2.0, 3.0]
    # 30 failures then successes: first all-success window ends at episode index 39
    post = _episodes([0.0] * 30 + [1.0] * 100, length=25, start_step=5000, updates_per_step=2, start_updates=300)
    checks["adaptive_efficiency"] = adaptive_efficiency(post, 1.0, start_step=5000) == 1000
    # 40 episodes of 25 steps at 2 updates per step
    checks["update_efficiency"] = update_efficiency(post, 39, start_updates=300) == 2000
    # ramp i/99: window ending at j averages (j - 4.5)/99, first >= 0.95 at j = 99
    ramp = _episodes([i / 99 for i in range(100)], length=10)
    checks["ramp_efficiency"] = adaptive_efficiency(ramp, 1.0) == 1000
    verdict(8, all(checks.values()), ", ".join(f"{k} {'ok' if v else 'MISMATCH'}" for k, v in checks.items()))


def test_9_tabular_q_matches_value_iteration(verdict):
    ts = chain_transitions()
    oracle = value_iteration(ts, 3, 2, gamma=0.9)
    policy = TabularQPolicy(n_actions=2, alpha=0.5, gamma=0.9).fit(ts, n_epochs=300)
    gap = max(abs(q - o) for s in (0, 1) for q, o in zip(policy.q_values(pos(s)), oracle[s]))
    verdict(9, gap < 1e-6, f"max |Q - Q*| = {gap:.2e}")
