import numpy as np
import pytest

from gc_core import (GCTransition, TabularEnv, Trajectory, TransitionBatch, is_terminal,
                     sparse_reward)


def test_sparse_reward():
    assert sparse_reward(3, 3) == 0
    assert sparse_reward(2, 3) == -1


def test_transition_timed_out():
    assert GCTransition(0, 5, 1, -1, 1, True).timed_out
    assert not GCTransition(0, 1, 1, 0, 1, True).timed_out
    assert not GCTransition(0, 5, 1, -1, 1, False).timed_out


def test_trajectory_rejects_mixed_goals_and_broken_chains():
    with pytest.raises(ValueError):
        Trajectory((GCTransition(0, 2, 0, -1, 1, False), GCTransition(1, 3, 0, 0, 2, True)), 2, True)
    with pytest.raises(ValueError):
        Trajectory((GCTransition(0, 2, 0, -1, 1, False), GCTransition(3, 2, 0, 0, 2, True)), 2, True)


def test_rollout_stops_on_arrival(chain_env):
    traj = chain_env.rollout(0, 2, [0, 0, 0, 0])
    assert len(traj) == 2
    assert traj.success
    assert traj.episode_return == -2
    assert [t.reward for t in traj] == [-1, 0]
    assert [t.done for t in traj] == [False, True]


def test_rollout_times_out_at_h_max(chain_env):
    traj = chain_env.rollout(3, 0, [0] * 10)
    assert len(traj) == chain_env.H_max
    assert not traj.success
    assert traj.transitions[-1].timed_out
    assert not any(t.done for t in traj.transitions[:-1])


def test_is_terminal(chain_env):
    assert is_terminal(chain_env, 2, 2)
    assert not chain_env.is_terminal(1, 2)


def test_tabular_env_validation():
    with pytest.raises(ValueError):
        TabularEnv([[0, 5]])
    with pytest.raises(ValueError):
        TabularEnv([[0]], goal_of_table=[0, 1])
    with pytest.raises(ValueError):
        TabularEnv([[0]], H_max=0)


def test_tabular_env_tables_are_read_only():
    table = np.array([[1], [0]])
    env = TabularEnv(table)
    table[0, 0] = 0
    assert env.step(0, 0) == 1
    with pytest.raises(ValueError):
        env.next_state_table[0, 0] = 0


def test_batch_relabel_recomputes_reward_and_keeps_timeouts():
    batch = TransitionBatch.from_transitions([
        GCTransition(0, 9, 0, -1, 1, False),
        GCTransition(1, 9, 0, -1, 2, True),   # step budget ran out
        GCTransition(2, 2, 0, 0, 2, True),
    ])
    goal_of = np.arange(10)
    out = batch.relabel(np.array([1, 7, 5]), goal_of)
    assert out.rewards.tolist() == [0, -1, -1]
    assert out.dones.tolist() == [True, True, False]
    assert batch.goals.tolist() == [9, 9, 2]


def test_batch_concatenate_and_take():
    a = TransitionBatch.from_transitions([GCTransition(0, 1, 0, -1, 1, False)])
    b = TransitionBatch.from_transitions([GCTransition(1, 1, 2, 0, 1, True)])
    both = TransitionBatch.concatenate([a, TransitionBatch.empty(), b])
    assert len(both) == 2
    assert both.take(np.array([1])).transition(0) == GCTransition(1, 1, 2, 0, 1, True)
    assert both.transitions()[0] == a.transition(0)
