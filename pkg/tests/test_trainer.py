import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mctstsp.embed_net import init_params, load_checkpoint
from mctstsp.errors import ConfigError, InsufficientData
from mctstsp.instances import gen_random, tour_length
from mctstsp.mcts import ExactCompletion, SearchConfig
from mctstsp.oracles import held_karp
from mctstsp.trainer import (
    Experience,
    ReplayMemory,
    TrainConfig,
    dump_config,
    episode_rewards,
    parse_config,
    run_episode,
    train,
)

FAST = SearchConfig(playouts=20, expansion_threshold=3)


def test_episode_rewards_unit_square(unit_square):
    r = episode_rewards(unit_square, [0, 1, 2, 3])
    assert r == [4.0, 3.0, 2.0, 1.0]


def test_episode_rewards_endpoints():
    inst = gen_random(7, 2)
    tour = [3, 0, 6, 1, 5, 2, 4]
    r = episode_rewards(inst, tour)
    assert r[0] == pytest.approx(tour_length(inst, tour), rel=1e-14)
    assert r[-1] == pytest.approx(inst.dist[4, 3], rel=1e-12)
    with pytest.raises(ValueError):
        episode_rewards(inst, tour[:-1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 14))
def test_reward_telescoping(seed, n):
    inst = gen_random(n, seed)
    tour = np.random.default_rng(seed).permutation(n).tolist()
    r = episode_rewards(inst, tour)
    assert all(x >= 0 for x in r)
    steps = [inst.dist[tour[t], tour[t + 1]] for t in range(n - 1)]
    assert np.allclose(np.diff(r), -np.array(steps), rtol=0, atol=1e-9 * r[0])


def test_run_episode_experiences():
    inst = gen_random(8, 3)
    exps = run_episode(inst, init_params(0), TrainConfig(search=FAST))
    assert len(exps) == 7
    tour = exps[-1].visited + (exps[-1].action,)
    assert sorted(tour) == list(range(8)) and tour[0] == 0
    rewards = episode_rewards(inst, tour)
    for k, e in enumerate(exps, start=1):
        assert e.visited == tour[:k] and e.action == tour[k]
        assert e.action not in e.visited
        assert e.reward == pytest.approx(rewards[k] / inst.length_unit, rel=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_exact_oracle_episode_is_optimal(seed):
    inst = gen_random(7, [8, seed])
    exps = run_episode(inst, ExactCompletion(), TrainConfig(search=SearchConfig()))
    tour = exps[-1].visited + (exps[-1].action,)
    assert tour_length(inst, tour) == pytest.approx(held_karp(inst).length, rel=1e-12)


def _exp(i):
    return Experience(None, (0,), i, float(i))


def test_replay_evicts_oldest():
    mem = ReplayMemory(3)
    mem.push([_exp(i) for i in range(5)])
    assert len(mem) == 3
    assert [e.action for e in mem.buffer] == [2, 3, 4]
    with pytest.raises(ValueError):
        ReplayMemory(0)


def test_replay_sample_errors_and_point_mass():
    mem = ReplayMemory(10)
    mem.push([_exp(1)])
    with pytest.raises(InsufficientData):
        mem.sample(2, np.random.default_rng(0))
    assert mem.sample(1, np.random.default_rng(0)) == [_exp(1)]
    mem = ReplayMemory(10)
    mem.push([_exp(7)] * 4)
    assert set(e.action for e in mem.sample(4, np.random.default_rng(0))) == {7}


def test_replay_sampling_is_uniform():
    mem = ReplayMemory(10)
    mem.push([_exp(i) for i in range(10)])
    rng = np.random.default_rng(2024)
    counts = np.zeros(10)
    for _ in range(10_000):
        for e in mem.sample(10, rng):
            counts[e.action] += 1
    assert counts.sum() == 100_000
    assert stats.chisquare(counts).pvalue > 0.01


def test_train_config_validation():
    TrainConfig()
    for bad in ({"batch_size": 0}, {"learning_rate": 0.0}, {"max_episodes": -1}, {"replay_capacity": 0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_train_zero_episodes_returns_init():
    data = [gen_random(6, [1, i]) for i in range(3)]
    assert train(data, TrainConfig(max_episodes=0), seed=5) == init_params(5)
    with pytest.raises(ValueError):
        train([], TrainConfig(max_episodes=1), seed=0)


def test_no_update_below_batch_size():
    data = [gen_random(6, [1, i]) for i in range(3)]
    records = []
    cfg = TrainConfig(max_episodes=3, batch_size=32, search=FAST)  # 15 experiences < 32
    assert train(data, cfg, seed=1, on_record=records.append) == init_params(1)
    assert [r["episode"] for r in records] == [0, 1, 2, 3]
    assert all("batch_loss" not in r for r in records)


def test_training_changes_params_and_logs():
    data = [gen_random(6, [1, i], name=f"random6_{i}") for i in range(3)]
    records = []
    cfg = TrainConfig(max_episodes=12, batch_size=8, probe_every=4, search=FAST)
    params = train(data, cfg, seed=1, on_record=records.append)
    assert params != init_params(1)
    probes = [r["episode"] for r in records if "probe_loss" in r]
    assert probes == [0, 4, 8, 12]
    assert any("batch_loss" in r for r in records)
    for r in records[1:]:
        assert r["tour_length"] > 0 and r["instance"].startswith("random6")


def test_training_is_deterministic(tmp_path):
    data = [gen_random(7, [1, i]) for i in range(4)]
    cfg = TrainConfig(max_episodes=10, batch_size=8, search=FAST, checkpoint_every=5)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    train(data, cfg, seed=3, checkpoint_path=a)
    train(data, cfg, seed=3, checkpoint_path=b)
    assert a.read_bytes() == b.read_bytes()
    params, adam = load_checkpoint(a)
    assert adam.step == 10 - 1  # updates start once 8 experiences exist
    train(data, cfg, seed=4, checkpoint_path=b)
    assert a.read_bytes() != b.read_bytes()


def test_parse_config_round_trip():
    cfg = TrainConfig(max_episodes=7, learning_rate=3e-3, search=SearchConfig(playouts=50, c_p=0.25))
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config("") == TrainConfig()
    assert parse_config("# comment\nbatch_size = 4  # inline\n").batch_size == 4


@pytest.mark.parametrize(
    "text, key",
    [("bogus = 1", "bogus"), ("batch_size = many", "batch_size"), ("playouts = 0", "config"), ("just words", "line 1")],
)
def test_parse_config_errors(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
