"""
Replay buffers: the uniform dataset buffer with hindsight relabeling, the
prioritized buffer of goal-swapped transitions, and the mixed sampler that
builds training batches from both.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from artifacts import atomic_write_text, require
from errors import EmptyBufferError, QRangeError
from gc_core import TransitionBatch
from sum_tree import SumTree

log = logging.getLogger(__name__)

BUFFER_CSV_COLUMNS = ("s", "g", "a", "r", "s_next", "done", "priority")


class UniformBuffer:
    """
    Flat view of every dataset transition with its trajectory position.

    Args:
        batch (TransitionBatch): All transitions, trajectories laid out contiguously
        traj_id (numpy.ndarray): Trajectory index of each transition
        step_idx (numpy.ndarray): Step index of each transition within its trajectory
        goal_of_table (numpy.ndarray): State -> goal mapping of the environment
    """
    def __init__(self, batch, traj_id, step_idx, goal_of_table):
        self.batch = batch
        self.traj_id = np.asarray(traj_id, dtype=np.int64)
        self.step_idx = np.asarray(step_idx, dtype=np.int64)
        self.goal_of_table = goal_of_table
        # exclusive end of each transition's trajectory in the flat arrays
        lengths = np.bincount(self.traj_id) if len(batch) else np.zeros(0, dtype=np.int64)
        ends = np.cumsum(lengths)
        self.traj_end = ends[self.traj_id] if len(batch) else np.zeros(0, dtype=np.int64)
        visited = np.concatenate([batch.states, batch.next_states])
        self.achieved_goals = np.unique(goal_of_table[visited])

    @classmethod
    def from_dataset(cls, dataset, env):
        traj_id, step_idx = [], []
        for i, traj in enumerate(dataset.trajectories):
            traj_id.extend([i] * len(traj))
            step_idx.extend(range(len(traj)))
        return cls(dataset.transitions(), traj_id, step_idx, env.goal_of_table)

    def __len__(self):
        return len(self.batch)

    def position(self, index):
        """(trajectory id, step index) of the transition at a flat index."""
        return int(self.traj_id[index]), int(self.step_idx[index])

    def transition(self, index):
        return self.batch.transition(index)

    def sample_indices(self, n, rng):
        if len(self) == 0:
            raise EmptyBufferError("dataset buffer is empty")
        return rng.integers(len(self), size=n)

    def action_mask(self, num_states, num_actions):
        """Boolean (state, action) table of pairs observed in the data."""
        mask = np.zeros((num_states, num_actions), dtype=bool)
        mask[self.batch.states, self.batch.actions] = True
        return mask


def future_indices(buf, indices, rng):
    """
    For each flat index, a uniformly drawn index at or after it within the
    same trajectory.
    """
    indices = np.asarray(indices, dtype=np.int64)
    span = buf.traj_end[indices] - indices
    return indices + rng.integers(span)


def her_relabel(buf, index, rng):
    """
    Hindsight relabeling with the "future" strategy.

    The new goal is the goal achieved by the next state of a transition drawn
    uniformly from this one and those after it in the same trajectory.

    Args:
        buf (UniformBuffer): Dataset buffer
        index (int): Flat index of the transition to relabel
        rng (numpy.random.Generator): Source of randomness

    Returns:
        GCTransition: Relabeled transition with recomputed reward and done
    """
    return her_relabel_columns(buf, np.array([index]), rng).transition(0)


def her_relabel_columns(buf, indices, rng):
    """Vectorized her_relabel over an index array."""
    j = future_indices(buf, indices, rng)
    goals = buf.goal_of_table[buf.batch.next_states[j]]
    return buf.batch.take(np.asarray(indices)).relabel(goals, buf.goal_of_table)


def priority_from_q(q, H_max, alpha=1.0, eps=1e-3):
    """
    Sampling priority of a goal-swapped transition from its frozen Q estimate.

    ((q + H_max) / H_max + eps) ** alpha, strictly positive and increasing in q.

    Args:
        q (float or numpy.ndarray): Q-value(s) in [-H_max, 0]
        H_max (int): Horizon bound of the Q-table
        alpha (float): Exponent (> 0)
        eps (float): Floor added before the exponent (> 0)

    Raises:
        QRangeError: If any q lies outside [-H_max, 0]
    """
    if alpha <= 0 or eps <= 0:
        raise ValueError("alpha and eps must be positive")
    arr = np.asarray(q, dtype=np.float64)
    if np.any(arr < -H_max) or np.any(arr > 0) or np.any(np.isnan(arr)):
        raise QRangeError(f"Q-values must lie in [{-H_max}, 0]; is the table clipped?")
    p = ((arr + H_max) / H_max + eps) ** alpha
    return float(p) if p.ndim == 0 else p


class PrioritizedBuffer:
    """
    Fixed-capacity store of transitions sampled in proportion to priority.

    When full, a new item replaces the lowest-priority item.

    Args:
        capacity (int): Maximum number of items
        alpha (float): Priority exponent used by priority_from_q
        eps (float): Priority floor used by priority_from_q
    """
    def __init__(self, capacity, alpha=1.0, eps=1e-3):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.alpha = alpha
        self.eps = eps
        self.tree = SumTree(self.capacity)
        self.size = 0
        self._cols = {
            "states": np.zeros(self.capacity, dtype=np.int64),
            "goals": np.zeros(self.capacity, dtype=np.int64),
            "actions": np.zeros(self.capacity, dtype=np.int64),
            "rewards": np.zeros(self.capacity, dtype=np.int64),
            "next_states": np.zeros(self.capacity, dtype=np.int64),
            "dones": np.zeros(self.capacity, dtype=bool),
        }

    def __len__(self):
        return self.size

    @property
    def total_priority(self):
        return self.tree.total

    def priorities(self):
        return self.tree.leaves()[:self.size].copy()

    def items(self):
        """Stored transitions in leaf order."""
        return TransitionBatch(**{k: v[:self.size].copy() for k, v in self._cols.items()})

    def _write(self, leaf, batch, row):
        for name, col in self._cols.items():
            col[leaf] = getattr(batch, name)[row]

    def insert(self, transition, priority):
        """
        Store one transition.

        Returns:
            int: Leaf the item was written to
        """
        if not priority > 0:
            raise ValueError("priority must be strictly positive")
        if self.size < self.capacity:
            leaf = self.size
            self.size += 1
        else:
            leaf = int(np.argmin(self.tree.leaves()[:self.capacity]))
        self._write(leaf, TransitionBatch.from_transitions([transition]), 0)
        self.tree.update(leaf, priority)
        return leaf

    def insert_many(self, batch, priorities):
        """Store a batch; rows that fit in free space are written in one pass."""
        priorities = np.asarray(priorities, dtype=np.float64)
        if np.any(~(priorities > 0)):
            raise ValueError("priorities must be strictly positive")
        n_free = min(self.capacity - self.size, len(batch))
        if n_free:
            leaves = np.arange(self.size, self.size + n_free)
            for name, col in self._cols.items():
                col[leaves] = getattr(batch, name)[:n_free]
            self.size += n_free
            self.tree.set_many(leaves, priorities[:n_free])
        for row in range(n_free, len(batch)):
            self.insert(batch.transition(row), float(priorities[row]))

    def update(self, leaf, priority):
        if not 0 <= leaf < self.size:
            raise IndexError(f"leaf {leaf} holds no item")
        if not priority > 0:
            raise ValueError("priority must be strictly positive")
        self.tree.update(leaf, priority)

    def sample_leaves(self, n, rng):
        if self.size == 0:
            raise EmptyBufferError("prioritized buffer is empty")
        return self.tree.sample(n, rng)

    def sample(self, n, rng):
        leaves = self.sample_leaves(n, rng)
        return TransitionBatch(**{k: v[leaves] for k, v in self._cols.items()})

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(BUFFER_CSV_COLUMNS)
        items = self.items()
        for i, p in enumerate(self.priorities()):
            writer.writerow([items.states[i], items.goals[i], items.actions[i], items.rewards[i],
                             items.next_states[i], int(items.dones[i]), repr(float(p))])
        return out.getvalue()

    def dump_csv(self, path):
        return atomic_write_text(path, self.to_csv())

    @classmethod
    def load_csv(cls, path, capacity=None, alpha=1.0, eps=1e-3):
        """Rebuild a buffer from dump_csv output; priorities are restored exactly."""
        with open(require(path, "priority buffer dump"), "r", encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            raise EmptyBufferError(f"{path} holds no items")
        cols = {c: [row[c] for row in rows] for c in BUFFER_CSV_COLUMNS}
        batch = TransitionBatch(
            states=np.asarray(cols["s"], dtype=np.int64),
            goals=np.asarray(cols["g"], dtype=np.int64),
            actions=np.asarray(cols["a"], dtype=np.int64),
            rewards=np.asarray(cols["r"], dtype=np.int64),
            next_states=np.asarray(cols["s_next"], dtype=np.int64),
            dones=np.asarray(cols["done"], dtype=np.int64).astype(bool),
        )
        buf = cls(capacity or len(rows), alpha=alpha, eps=eps)
        buf.insert_many(batch, np.asarray(cols["priority"], dtype=np.float64))
        return buf


def per_insert(buf, item, priority):
    return buf.insert(item, priority)


def per_update(buf, leaf, priority):
    buf.update(leaf, priority)


def per_sample(buf, n, rng):
    return buf.sample(n, rng)


@dataclass(frozen=True)
class BatchComposition:
    """Where the rows of a mixed batch came from."""
    n_dataset: int
    n_augmented: int
    n_her: int

    @property
    def total(self):
        return self.n_dataset + self.n_augmented


def mixed_sample(beta, beta_aug, batch, rho, her_ratio, rng):
    """
    Build one training batch from the dataset buffer and an augmented source.

    floor(rho * batch) rows come from beta_aug (by priority for a
    PrioritizedBuffer, fresh swaps for a GoalSwapSampler); the rest are drawn
    uniformly from beta, each HER-relabeled with probability her_ratio.

    Args:
        beta (UniformBuffer): Dataset buffer
        beta_aug: Object with sample(n, rng) -> TransitionBatch, or None when rho is 0
        batch (int): Batch size
        rho (float): Augmented share in [0, 1]
        her_ratio (float): HER probability in [0, 1]
        rng (numpy.random.Generator): Source of randomness

    Returns:
        tuple: (TransitionBatch, BatchComposition)
    """
    if not 0.0 <= rho <= 1.0 or not 0.0 <= her_ratio <= 1.0:
        raise ValueError("rho and her_ratio must lie in [0, 1]")
    n_aug = int(np.floor(rho * batch))
    n_base = batch - n_aug

    parts = []
    n_her = 0
    if n_base:
        idx = beta.sample_indices(n_base, rng)
        her = rng.random(n_base) < her_ratio
        n_her = int(her.sum())
        base = beta.batch.take(idx)
        if n_her:
            relabeled = her_relabel_columns(beta, idx[her], rng)
            goals = base.goals.copy()
            goals[her] = relabeled.goals
            base = base.relabel(goals, beta.goal_of_table)
        parts.append(base)
    if n_aug:
        if beta_aug is None or len(beta_aug) == 0:
            raise EmptyBufferError("augmented source is empty but rho > 0")
        parts.append(beta_aug.sample(n_aug, rng))
    return TransitionBatch.concatenate(parts), BatchComposition(n_base, n_aug, n_her)
