"""
Random goal-swapping augmentation.

A swap keeps (s, a, s') of a dataset transition, replaces its goal with a
goal achieved somewhere in the dataset and recomputes reward and done.
"""
from __future__ import annotations

from dataclasses import dataclass

from errors import EmptyBufferError
from gc_core import GCTransition, sparse_reward


@dataclass(frozen=True)
class AugmentedTransition:
    """
    A dataset transition relabeled with a swapped goal.

    Args:
        base (GCTransition): Original transition
        swapped_goal (int): Goal replacing base.goal
        recomputed_reward (int): Sparse reward of base.next_state under swapped_goal
        recomputed_done (bool): Arrival under swapped_goal or the base step budget ran out
    """
    base: GCTransition
    swapped_goal: int
    recomputed_reward: int
    recomputed_done: bool

    def as_transition(self):
        b = self.base
        return GCTransition(b.state, self.swapped_goal, b.action, self.recomputed_reward,
                            b.next_state, self.recomputed_done)


def goal_swap(t, g_rand, env):
    """
    Replace the goal of a transition.

    An AugmentedTransition is relabeled from its base, so swapping back to
    the base goal gives the base transition exactly, budget flag included.

    Args:
        t (GCTransition or AugmentedTransition): Transition to relabel (not modified)
        g_rand (int): New goal
        env (GCEnvironment): Supplies the state -> goal mapping

    Returns:
        AugmentedTransition: The relabeled transition
    """
    base = t.base if isinstance(t, AugmentedTransition) else t
    reward = sparse_reward(env.goal_of(base.next_state), g_rand)
    done = reward == 0 or base.timed_out
    return AugmentedTransition(base, int(g_rand), reward, done)


def swap_columns(dataset_buffer, n, rng):
    """
    Draw n uniform dataset transitions, each paired with an independent goal
    drawn uniformly from the goals achieved in the dataset.

    Args:
        dataset_buffer (UniformBuffer): Source transitions
        n (int): Number of samples
        rng (numpy.random.Generator): Source of randomness

    Returns:
        TransitionBatch: n swapped transitions
    """
    if len(dataset_buffer) == 0:
        raise EmptyBufferError("cannot sample swaps from an empty buffer")
    idx = rng.integers(len(dataset_buffer), size=n)
    goals = dataset_buffer.achieved_goals[rng.integers(dataset_buffer.achieved_goals.size, size=n)]
    return dataset_buffer.batch.take(idx).relabel(goals, dataset_buffer.goal_of_table)


def sample_swap_batch(dataset_buffer, n, rng):
    """
    Draw n swapped transitions as AugmentedTransition objects.

    Consumes the generator exactly like swap_columns, so both return the same
    swaps for the same generator state.
    """
    if len(dataset_buffer) == 0:
        raise EmptyBufferError("cannot sample swaps from an empty buffer")
    idx = rng.integers(len(dataset_buffer), size=n)
    goals = dataset_buffer.achieved_goals[rng.integers(dataset_buffer.achieved_goals.size, size=n)]
    out = []
    for i, g in zip(idx, goals):
        t = dataset_buffer.batch.transition(int(i))
        r = sparse_reward(int(dataset_buffer.goal_of_table[t.next_state]), int(g))
        out.append(AugmentedTransition(t, int(g), r, r == 0 or t.timed_out))
    return out


class GoalSwapSampler:
    """
    Fresh random swaps on every draw; stands in for the prioritized buffer
    when training with unfiltered augmentation.
    """
    def __init__(self, dataset_buffer):
        self.dataset_buffer = dataset_buffer

    def __len__(self):
        return len(self.dataset_buffer)

    def sample(self, n, rng):
        return swap_columns(self.dataset_buffer, n, rng)
