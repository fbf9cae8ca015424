"""
Goal-conditioned MDP core: ids, transitions, trajectories, the sparse reward
and the environment base class every other module builds on.

Value convention: every step taken from a state that has not achieved the
goal costs one unit, and an episode ends as soon as the goal is achieved.
With no discounting, V*(s, g) is then minus the shortest-path distance from
s to g. The reward stored on a transition is evaluated on its next state
(0 on arrival, -1 otherwise).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Tuple

import numpy as np

GOAL_REWARD = 0
STEP_REWARD = -1


def sparse_reward(achieved, goal):
    """
    Sparse goal reward with a zero distance threshold.

    Args:
        achieved (int): Goal achieved by the state being scored
        goal (int): Commanded goal

    Returns:
        int: 0 if the goal is achieved, -1 otherwise
    """
    return GOAL_REWARD if achieved == goal else STEP_REWARD


def is_terminal(env, s, g):
    """True iff state s achieves goal g."""
    return env.goal_of(s) == g


@dataclass(frozen=True, slots=True)
class GCTransition:
    """One goal-conditioned step {s, g, a, r, s', done}."""
    state: int
    goal: int
    action: int
    reward: int
    next_state: int
    done: bool

    @property
    def timed_out(self):
        """True if the episode ended here on the step budget, not on arrival."""
        return self.done and self.reward != GOAL_REWARD


@dataclass(frozen=True)
class Trajectory:
    """
    Ordered transitions sharing one commanded goal.

    Args:
        transitions (tuple): GCTransition objects in time order
        commanded_goal (int): Goal the episode was commanded with
        success (bool): Whether the final achieved goal equals the commanded goal
    """
    transitions: Tuple[GCTransition, ...]
    commanded_goal: int
    success: bool

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(self.transitions))
        for t in self.transitions:
            if t.goal != self.commanded_goal:
                raise ValueError("All transitions of a trajectory must share the commanded goal.")
        for prev, nxt in zip(self.transitions, self.transitions[1:]):
            if prev.next_state != nxt.state:
                raise ValueError("Trajectory transitions do not chain.")

    def __len__(self):
        return len(self.transitions)

    def __iter__(self) -> Iterator[GCTransition]:
        return iter(self.transitions)

    @property
    def episode_return(self):
        """Return under the per-step cost convention: minus the number of steps."""
        return -len(self.transitions)


@dataclass(frozen=True)
class TransitionBatch:
    """
    Column-oriented batch of transitions used by buffers and learners.

    All arrays share the same length; states, goals, actions, rewards and
    next_states are int64, dones is bool.
    """
    states: np.ndarray
    goals: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return int(self.states.shape[0])

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, z, np.zeros(0, dtype=bool))

    @classmethod
    def from_transitions(cls, transitions: Iterable[GCTransition]):
        rows = [(t.state, t.goal, t.action, t.reward, t.next_state, t.done) for t in transitions]
        if not rows:
            return cls.empty()
        cols = list(zip(*rows))
        return cls(
            states=np.asarray(cols[0], dtype=np.int64),
            goals=np.asarray(cols[1], dtype=np.int64),
            actions=np.asarray(cols[2], dtype=np.int64),
            rewards=np.asarray(cols[3], dtype=np.int64),
            next_states=np.asarray(cols[4], dtype=np.int64),
            dones=np.asarray(cols[5], dtype=bool),
        )

    @classmethod
    def concatenate(cls, batches):
        batches = [b for b in batches if len(b)]
        if not batches:
            return cls.empty()
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in
                     ("states", "goals", "actions", "rewards", "next_states", "dones")))

    def take(self, idx):
        """Select rows by an index array."""
        return TransitionBatch(self.states[idx], self.goals[idx], self.actions[idx],
                               self.rewards[idx], self.next_states[idx], self.dones[idx])

    def transition(self, i):
        return GCTransition(int(self.states[i]), int(self.goals[i]), int(self.actions[i]),
                            int(self.rewards[i]), int(self.next_states[i]), bool(self.dones[i]))

    def transitions(self):
        return [self.transition(i) for i in range(len(self))]

    def relabel(self, goals, goal_of_table):
        """
        Replace the goals of every row and recompute reward and done.

        A row that ended on the step budget keeps its done flag; otherwise
        done follows the recomputed reward.

        Args:
            goals (numpy.ndarray): New goal per row
            goal_of_table (numpy.ndarray): State -> goal mapping

        Returns:
            TransitionBatch: Relabeled copy; inputs are not modified
        """
        goals = np.asarray(goals, dtype=np.int64)
        timed_out = self.dones & (self.rewards != GOAL_REWARD)
        arrived = goal_of_table[self.next_states] == goals
        rewards = np.where(arrived, GOAL_REWARD, STEP_REWARD).astype(np.int64)
        return TransitionBatch(self.states, goals, self.actions, rewards,
                               self.next_states, arrived | timed_out)


class GCEnvironment:
    """
    Base class for deterministic goal-conditioned environments.

    Subclasses fill ``next_state_table`` (num_states x num_actions) and
    ``goal_of_table`` (num_states); every query is answered from those two
    tables, so environments are read-only after construction.
    """
    next_state_table: np.ndarray
    goal_of_table: np.ndarray
    H_max: int

    @property
    def num_states(self):
        return int(self.next_state_table.shape[0])

    @property
    def num_actions(self):
        return int(self.next_state_table.shape[1])

    @property
    def num_goals(self):
        return int(self.goal_of_table.max()) + 1

    @property
    def initial_states(self):
        return np.arange(self.num_states, dtype=np.int64)

    @property
    def goals(self):
        return np.unique(self.goal_of_table)

    def step(self, s, a):
        """
        Deterministic transition function.

        Args:
            s (int): Current state id
            a (int): Action id

        Returns:
            int: Next state id
        """
        return int(self.next_state_table[s, a])

    def goal_of(self, s):
        return int(self.goal_of_table[s])

    def is_terminal(self, s, g):
        return is_terminal(self, s, g)

    def reward(self, next_state, g):
        return sparse_reward(self.goal_of(next_state), g)

    def rollout(self, s0, g, actions):
        """
        Replay a recorded action sequence.

        Args:
            s0 (int): Initial state
            g (int): Commanded goal
            actions (Iterable[int]): Actions to apply, cut short on arrival or at H_max

        Returns:
            Trajectory: The resulting trajectory
        """
        transitions = []
        s = s0
        for t, a in enumerate(actions):
            if t >= self.H_max:
                break
            s2 = self.step(s, a)
            r = self.reward(s2, g)
            done = r == GOAL_REWARD or t == self.H_max - 1
            transitions.append(GCTransition(s, g, int(a), r, s2, done))
            s = s2
            if done:
                break
        return Trajectory(tuple(transitions), g, self.goal_of(s) == g)


class TabularEnv(GCEnvironment):
    """
    Environment given directly by its transition and goal tables.

    Args:
        next_state_table (array-like): next_state_table[s, a] = T(s, a)
        goal_of_table (array-like): goal_of_table[s] = phi(s); defaults to the identity
        H_max (int): Episode step budget
    """
    def __init__(self, next_state_table, goal_of_table=None, H_max=50):
        table = np.array(next_state_table, dtype=np.int64)
        if table.ndim != 2 or table.size == 0:
            raise ValueError("next_state_table must be a non-empty 2-D array.")
        if table.min() < 0 or table.max() >= table.shape[0]:
            raise ValueError("next_state_table refers to unknown states.")
        if goal_of_table is None:
            goal_of_table = np.arange(table.shape[0])
        goal_of_table = np.array(goal_of_table, dtype=np.int64)
        if goal_of_table.shape != (table.shape[0],) or goal_of_table.min() < 0:
            raise ValueError("goal_of_table must map every state to a goal id.")
        if H_max < 1:
            raise ValueError("H_max must be positive.")
        self.next_state_table = table
        self.goal_of_table = goal_of_table
        self.next_state_table.flags.writeable = False
        self.goal_of_table.flags.writeable = False
        self.H_max = int(H_max)
