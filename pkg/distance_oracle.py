"""
Exact shortest-path distances between states and goals.

Used as ground truth for optimal values: V*(s, g) = -dist(s, g).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

UNREACHABLE = -1


@dataclass(frozen=True)
class DistanceOracle:
    """
    dist[s, g] = fewest steps from state s to any state achieving goal g,
    or UNREACHABLE.
    """
    dist: np.ndarray

    def distance(self, s, g):
        return int(self.dist[s, g])

    def reachable(self, s, g):
        return self.dist[s, g] != UNREACHABLE

    def reachable_mask(self):
        return self.dist != UNREACHABLE

    def reachable_pairs(self, exclude_trivial=True):
        """
        All (s, g) pairs with finite distance.

        Args:
            exclude_trivial (bool): Drop pairs where s already achieves g

        Returns:
            numpy.ndarray: Array of shape (n, 2)
        """
        mask = self.reachable_mask()
        if exclude_trivial:
            mask = mask & (self.dist > 0)
        return np.argwhere(mask).astype(np.int64)

    def optimal_actions(self, env, s, g):
        """Actions from s that reduce the distance to g by one."""
        d = self.dist[s, g]
        if d <= 0:
            return np.zeros(0, dtype=np.int64)
        nxt = env.next_state_table[s]
        return np.flatnonzero(self.dist[nxt, g] == d - 1)


def build_oracle(env):
    """
    Breadth-first all-pairs distances on the environment's transition graph.

    Args:
        env (GCEnvironment): Deterministic environment

    Returns:
        DistanceOracle: Distances from every state to every goal
    """
    n = env.num_states
    src = np.repeat(np.arange(n), env.num_actions)
    dst = env.next_state_table.ravel()
    moving = src != dst
    graph = coo_matrix((np.ones(int(moving.sum())), (src[moving], dst[moving])), shape=(n, n)).tocsr()
    state_dist = shortest_path(graph, method="D", directed=True, unweighted=True)

    goal_dist = np.full((n, env.num_goals), np.inf)
    for g in range(env.num_goals):
        achieving = np.flatnonzero(env.goal_of_table == g)
        if achieving.size:
            goal_dist[:, g] = state_dist[:, achieving].min(axis=1)

    dist = np.where(np.isfinite(goal_dist), goal_dist, UNREACHABLE).astype(np.int64)
    return DistanceOracle(dist)
