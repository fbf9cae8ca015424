import numpy as np
import pytest

from errors import EmptyBufferError, QRangeError
from gc_core import GCTransition, TransitionBatch
from goal_swap import GoalSwapSampler
from replay_buffers import (PrioritizedBuffer, UniformBuffer, future_indices, her_relabel,
                            her_relabel_columns, mixed_sample, per_insert, per_sample, per_update,
                            priority_from_q)


@pytest.fixture
def beta(small_dataset, open5):
    return UniformBuffer.from_dataset(small_dataset, open5)


def _t(i):
    return GCTransition(i, i + 1, 0, -1, i + 1, False)


def test_priority_from_q_values():
    assert priority_from_q(0.0, 50) == pytest.approx(1.001)
    assert priority_from_q(-50.0, 50) == pytest.approx(0.001)
    q = np.linspace(-50, 0, 101)
    p = priority_from_q(q, 50, alpha=0.7)
    assert np.all(np.diff(p) > 0)
    assert np.all(p > 0)


def test_priority_from_q_range_checks():
    with pytest.raises(QRangeError):
        priority_from_q(0.5, 50)
    with pytest.raises(QRangeError):
        priority_from_q(-51.0, 50)
    with pytest.raises(ValueError):
        priority_from_q(-1.0, 50, alpha=0.0)


def test_uniform_buffer_positions(beta, small_dataset):
    assert len(beta) == small_dataset.num_transitions
    last = len(small_dataset.trajectories[0]) - 1
    assert beta.position(last) == (0, last)
    assert beta.position(last + 1) == (1, 0)
    assert beta.traj_end[0] == len(small_dataset.trajectories[0])


def test_her_futures_stay_in_trajectory(beta, rng):
    idx = beta.sample_indices(10_000, rng)
    j = future_indices(beta, idx, rng)
    assert np.all(j >= idx)
    assert np.all(beta.traj_id[j] == beta.traj_id[idx])


def test_her_relabels_are_reward_consistent(beta, open5, rng):
    idx = beta.sample_indices(10_000, rng)
    out = her_relabel_columns(beta, idx, rng)
    expected = np.where(open5.goal_of_table[out.next_states] == out.goals, 0, -1)
    assert np.array_equal(out.rewards, expected)
    assert np.array_equal(out.states, beta.batch.states[idx])
    t = her_relabel(beta, 0, rng)
    assert t.state == beta.batch.states[0]


def test_her_on_last_step_uses_its_own_next_state(beta, open5, rng):
    last = int(beta.traj_end[0]) - 1
    t = her_relabel(beta, last, rng)
    assert t.goal == open5.goal_of(int(beta.batch.next_states[last]))
    assert t.reward == 0 and t.done


def test_prioritized_insert_and_overwrite_lowest():
    buf = PrioritizedBuffer(3)
    for i, p in enumerate([0.5, 0.1, 0.9]):
        assert per_insert(buf, _t(i), p) == i
    leaf = buf.insert(_t(7), 0.7)
    assert leaf == 1
    assert len(buf) == 3
    assert buf.items().states.tolist() == [0, 7, 2]
    assert buf.total_priority == pytest.approx(2.1)


def test_prioritized_update_and_errors(rng):
    buf = PrioritizedBuffer(4)
    with pytest.raises(EmptyBufferError):
        per_sample(buf, 1, rng)
    buf.insert(_t(0), 1.0)
    with pytest.raises(ValueError):
        buf.insert(_t(1), 0.0)
    with pytest.raises(IndexError):
        per_update(buf, 2, 1.0)
    per_update(buf, 0, 3.0)
    assert buf.total_priority == 3.0


def test_every_item_sampled(rng):
    buf = PrioritizedBuffer(50)
    batch = TransitionBatch.from_transitions(_t(i) for i in range(50))
    buf.insert_many(batch, rng.uniform(0.01, 1.0, size=50))
    seen = per_sample(buf, 50_000, rng)
    assert set(seen.states.tolist()) == set(range(50))


def test_insert_many_past_capacity_keeps_high_priorities():
    buf = PrioritizedBuffer(4)
    batch = TransitionBatch.from_transitions(_t(i) for i in range(6))
    buf.insert_many(batch, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    assert len(buf) == 4
    assert sorted(buf.priorities().tolist()) == [3.0, 4.0, 5.0, 6.0]


def test_csv_dump_round_trip(tmp_path, rng):
    buf = PrioritizedBuffer(10)
    batch = TransitionBatch.from_transitions(_t(i) for i in range(10))
    buf.insert_many(batch, rng.uniform(0.01, 1.0, size=10))
    buf.dump_csv(tmp_path / "buf.csv")
    back = PrioritizedBuffer.load_csv(tmp_path / "buf.csv")
    assert np.array_equal(back.priorities(), buf.priorities())
    assert back.items().transitions() == buf.items().transitions()
    assert back.to_csv() == buf.to_csv()


def test_mixed_sample_composition(beta, rng):
    batch, comp = mixed_sample(beta, GoalSwapSampler(beta), 64, 0.5, 0.5, rng)
    assert len(batch) == 64
    assert comp.n_augmented == 32 and comp.n_dataset == 32
    batch, comp = mixed_sample(beta, None, 10, 0.0, 0.0, rng)
    assert comp == type(comp)(10, 0, 0)


def test_mixed_sample_requires_augmented_source(beta, rng):
    with pytest.raises(EmptyBufferError):
        mixed_sample(beta, None, 8, 0.5, 0.5, rng)
    with pytest.raises(ValueError):
        mixed_sample(beta, None, 8, 1.5, 0.5, rng)


def test_her_ratio_honored(beta, rng):
    draws, n = 10_000, 32
    total = sum(mixed_sample(beta, None, n, 0.0, 0.5, rng)[1].n_her for _ in range(draws))
    trials = draws * n
    sigma = np.sqrt(trials * 0.25)
    assert abs(total - trials / 2) < 4 * sigma


def test_mixed_batch_rewards_consistent(beta, open5, rng):
    for _ in range(200):
        batch, _ = mixed_sample(beta, GoalSwapSampler(beta), 32, 0.5, 0.5, rng)
        expected = np.where(open5.goal_of_table[batch.next_states] == batch.goals, 0, -1)
        assert np.array_equal(batch.rewards, expected)


def test_her_futures_uniform_over_remaining_steps(beta, rng):
    remaining = beta.traj_end - np.arange(len(beta))
    start = int(np.argmax(remaining >= 5))
    m = int(remaining[start])
    assert m >= 5
    n = 50_000
    j = future_indices(beta, np.full(n, start), rng)
    counts = np.bincount(j - start, minlength=m)
    assert counts.size == m
    p = 1.0 / m
    assert np.all(np.abs(counts - n * p) < 4 * np.sqrt(n * p * (1 - p)))


def test_mixed_sample_counts_fuzz(beta, rng):
    aug = GoalSwapSampler(beta)
    for _ in range(300):
        n = int(rng.integers(1, 200))
        rho = float(rng.random())
        batch, comp = mixed_sample(beta, aug, n, rho, 0.5, rng)
        assert comp.total == len(batch) == n
        assert comp.n_augmented == int(np.floor(rho * n))
        assert comp.n_her <= comp.n_dataset


def test_two_items_sampled_three_to_one(rng):
    buf = PrioritizedBuffer(2)
    per_insert(buf, _t(0), 3.0)
    per_insert(buf, _t(1), 1.0)
    n = 100_000
    hits = int(np.sum(per_sample(buf, n, rng).states == 0))
    assert abs(hits - 0.75 * n) < 3 * np.sqrt(n * 0.75 * 0.25)
