"""
Tabular offline goal-conditioned Q-learning and the two-stage training
pipeline: pre-train with random goal swaps, fill a prioritized buffer of
swaps scored by the frozen table, then retrain.

Two backups are available: "plain" maximizes over every action at the next
state, "dataset_constrained" only over actions observed there in the data.
"""
from __future__ import annotations

import csv
import io
import logging
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from artifacts import atomic_write_bytes, atomic_write_text, require
from errors import ConfigError, GCRLError
from gc_core import GOAL_REWARD, TransitionBatch
from goal_swap import GoalSwapSampler, swap_columns
from replay_buffers import PrioritizedBuffer, UniformBuffer, mixed_sample, priority_from_q
import seeding

log = logging.getLogger(__name__)

KINDS = ("plain", "dataset_constrained")
VARIANTS = ("baseline", "swap", "mem")

_MAGIC = b"GCQT"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIB")


class QTable:
    """
    Dense Q(s, g, a) table with values clipped to [-H_max, 0].

    Args:
        values (numpy.ndarray): float64 array of shape (states, goals, actions)
        H_max (int): Horizon bound; -H_max marks "never reached"
        kind (str): "plain" or "dataset_constrained"
        goal_of_table (numpy.ndarray, optional): State -> goal map; identity if omitted
    """
    def __init__(self, values, H_max, kind="plain", goal_of_table=None):
        if kind not in KINDS:
            raise ValueError(f"Unknown learner kind: {kind}")
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError("Q values must be a 3-D array")
        self.values = values
        self.H_max = int(H_max)
        self.kind = kind
        if goal_of_table is None:
            goal_of_table = np.arange(values.shape[0])
        self.goal_of_table = np.asarray(goal_of_table, dtype=np.int64)

    @classmethod
    def pessimistic(cls, num_states, num_goals, num_actions, H_max, kind="plain", goal_of_table=None):
        values = np.full((num_states, num_goals, num_actions), -float(H_max))
        return cls(values, H_max, kind, goal_of_table)

    @classmethod
    def for_env(cls, env, kind="plain"):
        return cls.pessimistic(env.num_states, env.num_goals, env.num_actions, env.H_max, kind,
                               env.goal_of_table)

    @property
    def shape(self):
        return self.values.shape

    @property
    def frozen(self):
        return not self.values.flags.writeable

    def freeze(self):
        self.values.flags.writeable = False
        return self

    def copy(self, kind=None):
        return QTable(self.values.copy(), self.H_max, kind or self.kind, self.goal_of_table)

    def q(self, s, g, a):
        return float(self.values[s, g, a])

    def v(self, s, g):
        return float(self.values[s, g].max())

    def to_bytes(self):
        S, G, A = self.shape
        header = _HEADER.pack(_MAGIC, _FORMAT_VERSION, S, G, A, self.H_max, KINDS.index(self.kind))
        return header + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data, goal_of_table=None, source="<bytes>"):
        if len(data) < _HEADER.size:
            raise GCRLError(f"{source}: Q-table file too short")
        magic, version, S, G, A, H_max, kind = _HEADER.unpack_from(data)
        if magic != _MAGIC or version != _FORMAT_VERSION:
            raise GCRLError(f"{source}: not a version {_FORMAT_VERSION} Q-table file")
        body = data[_HEADER.size:]
        if len(body) != S * G * A * 8 or kind >= len(KINDS):
            raise GCRLError(f"{source}: corrupt Q-table file")
        values = np.frombuffer(body, dtype="<f8").reshape(S, G, A).astype(np.float64)
        return cls(values, H_max, KINDS[kind], goal_of_table)

    def save(self, path):
        return atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path, goal_of_table=None):
        with open(require(path, "Q-table"), "rb") as f:
            return cls.from_bytes(f.read(), goal_of_table, str(path))

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("s", "g", "a", "q"))
        for (s, g, a), q in np.ndenumerate(self.values):
            writer.writerow((s, g, a, repr(float(q))))
        return out.getvalue()

    def dump_csv(self, path):
        return atomic_write_text(path, self.to_csv())


@dataclass(frozen=True)
class DatasetActionMask:
    """observed[s, a] is True iff action a was taken from state s in the dataset."""
    observed: np.ndarray

    @classmethod
    def from_buffer(cls, buf, num_states, num_actions):
        observed = buf.action_mask(num_states, num_actions)
        observed.flags.writeable = False
        return cls(observed)


@dataclass(frozen=True)
class TrainSchedule:
    """
    How long and on what mixture to train.

    Args:
        updates (int): Number of batch updates
        batch_size (int): Transitions per update
        learning_rate (float): Step size in (0, 1]
        rho (float): Share of each batch taken from the augmented source
        her_ratio (float): Probability of HER relabeling per dataset row
        rng_seed (int): Seed of the training stream
    """
    updates: int = 50_000
    batch_size: int = 64
    learning_rate: float = 0.25
    rho: float = 0.5
    her_ratio: float = 0.5
    rng_seed: int = 0

    def validate(self, prefix="schedule"):
        if not isinstance(self.updates, int) or self.updates < 0:
            raise ConfigError(f"{prefix}.updates", "must be a non-negative integer")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"{prefix}.batch_size", "must be a positive integer")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"{prefix}.learning_rate", "must lie in (0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"{prefix}.rho", "must lie in [0, 1]")
        if not 0.0 <= self.her_ratio <= 1.0:
            raise ConfigError(f"{prefix}.her_ratio", "must lie in [0, 1]")
        if not isinstance(self.rng_seed, int) or self.rng_seed < 0:
            raise ConfigError(f"{prefix}.rng_seed", "must be a non-negative integer")
        return self


def bellman_targets(q, batch, mask=None):
    """
    Undiscounted one-step targets.

    0 when the state already achieves the goal, -1 on arrival, otherwise
    -1 plus the best next-state value. The constrained backup maximizes only
    over observed actions and treats a state with none as worth -H_max.
    """
    at_goal = q.goal_of_table[batch.states] == batch.goals
    arrived = batch.rewards == GOAL_REWARD
    nxt = q.values[batch.next_states, batch.goals]
    if mask is None:
        best = nxt.max(axis=1)
    else:
        allowed = mask.observed[batch.next_states]
        best = np.where(allowed, nxt, -np.inf).max(axis=1)
        best = np.where(allowed.any(axis=1), best, -float(q.H_max))
    return np.where(at_goal, 0.0, np.where(arrived, -1.0, -1.0 + best))


def bellman_update_batch(q, batch, lr, mask=None):
    """
    Move every (s, g, a) in the batch toward its target, then clip.

    Targets are computed from the table before the update; when a triple
    repeats in the batch the last occurrence wins.
    """
    if q.frozen:
        raise ValueError("cannot update a frozen Q-table")
    if not 0.0 < lr <= 1.0:
        raise ValueError("learning rate must lie in (0, 1]")
    if len(batch) == 0:
        return q
    target = bellman_targets(q, batch, mask)
    idx = (batch.states, batch.goals, batch.actions)
    current = q.values[idx]
    q.values[idx] = np.clip(current + lr * (target - current), -q.H_max, 0.0)
    return q


def bellman_update(q, t, lr, mask=None):
    """Single-transition form of bellman_update_batch."""
    return bellman_update_batch(q, TransitionBatch.from_transitions([t]), lr, mask)


def full_coverage_batch(env):
    """Every (s, g, a) triple of the environment as one transition."""
    S, A = env.num_states, env.num_actions
    goals = env.goals
    s, g, a = np.meshgrid(np.arange(S), goals, np.arange(A), indexing="ij")
    s, g, a = s.ravel(), g.ravel(), a.ravel()
    s2 = env.next_state_table[s, a]
    arrived = env.goal_of_table[s2] == g
    rewards = np.where(arrived, 0, -1).astype(np.int64)
    return TransitionBatch(s.astype(np.int64), g.astype(np.int64), a.astype(np.int64),
                           rewards, s2.astype(np.int64), arrived)


def solve_full_coverage(env, kind="plain", mask=None, max_sweeps=None, lr=1.0, return_history=False):
    """
    Synchronous sweeps over every transition until the table stops changing.

    Args:
        env (GCEnvironment): Environment
        kind (str): Learner kind stored on the table
        mask (DatasetActionMask, optional): Action mask for the constrained backup
        max_sweeps (int, optional): Sweep limit; defaults to states + H_max + 1
        lr (float): Step size
        return_history (bool): Also return the max change per sweep

    Returns:
        QTable or (QTable, list)
    """
    q = QTable.for_env(env, kind)
    batch = full_coverage_batch(env)
    limit = max_sweeps or env.num_states + env.H_max + 1
    history = []
    for _ in range(limit):
        before = q.values.copy()
        bellman_update_batch(q, batch, lr, mask)
        change = float(np.abs(q.values - before).max())
        history.append(change)
        if change == 0.0:
            break
    return (q, history) if return_history else q


class GreedyPolicy:
    """argmax_a Q(s, g, a) with ties going to the lowest action index."""
    def __init__(self, q):
        self.actions = np.argmax(q.values, axis=2)

    def __call__(self, s, g):
        return int(self.actions[s, g])


def greedy_policy(q):
    return GreedyPolicy(q)


class OfflineTrainer:
    """
    Runs batch updates of one Q-table from a dataset buffer and an optional
    augmented source.

    Args:
        q (QTable): Table to train in place
        beta (UniformBuffer): Dataset buffer
        aug_source: PrioritizedBuffer, GoalSwapSampler or None
        schedule (TrainSchedule): Updates, batch size, mixture
        rng (numpy.random.Generator): Training stream
        mask (DatasetActionMask, optional): Enables the constrained backup
        name (str): Label used in progress logs
    """
    def __init__(self, q, beta, aug_source, schedule, rng, mask=None, name="train"):
        self.q = q
        self.beta = beta
        self.aug_source = aug_source
        self.schedule = schedule
        self.rng = rng
        self.mask = mask
        self.name = name
        self.rho = schedule.rho if aug_source is not None else 0.0
        self.stats = {
            "updates": 0,
            "dataset_rows": 0,
            "augmented_rows": 0,
            "her_rows": 0,
        }

    def step(self):
        batch, comp = mixed_sample(self.beta, self.aug_source, self.schedule.batch_size,
                                   self.rho, self.schedule.her_ratio, self.rng)
        bellman_update_batch(self.q, batch, self.schedule.learning_rate, self.mask)
        self.stats["updates"] += 1
        self.stats["dataset_rows"] += comp.n_dataset
        self.stats["augmented_rows"] += comp.n_augmented
        self.stats["her_rows"] += comp.n_her
        return comp

    def run(self, num_updates=None):
        num_updates = self.schedule.updates if num_updates is None else num_updates
        report_every = max(1, num_updates // 10)
        for i in range(num_updates):
            self.step()
            if (i + 1) % report_every == 0 or i == num_updates - 1:
                log.info("%s update %d/%d: mean Q %.3f", self.name, i + 1, num_updates,
                         float(self.q.values.mean()))
        return self.stats


def pretrain_q(dataset, env, schedule, rng=None):
    """
    Pre-train the frozen scoring table: constrained backups on batches mixing
    dataset rows (with HER) and fresh random goal swaps.

    Args:
        dataset (OfflineDataset): Offline data
        env (GCEnvironment): Environment the data came from
        schedule (TrainSchedule): Pre-training schedule
        rng (numpy.random.Generator, optional): Defaults to the "pretrain" stream of schedule.rng_seed

    Returns:
        QTable: Frozen dataset_constrained table
    """
    if len(dataset) == 0 or dataset.num_transitions == 0:
        raise ValueError("cannot pre-train on an empty dataset")
    schedule.validate("pretrain")
    rng = rng or seeding.stream(schedule.rng_seed, "pretrain")
    beta = UniformBuffer.from_dataset(dataset, env)
    mask = DatasetActionMask.from_buffer(beta, env.num_states, env.num_actions)
    q = QTable.for_env(env, "dataset_constrained")
    trainer = OfflineTrainer(q, beta, GoalSwapSampler(beta), schedule, rng, mask, name="pretrain")
    trainer.run()
    return q.freeze()


def fill_priority_buffer(q, dataset_buffer, capacity, rng, alpha=1.0, eps=1e-3, chunk=8192):
    """
    Fill a prioritized buffer to capacity with random goal swaps, each
    scored by priority_from_q(Q(s, g_swapped, a)).

    Swaps whose state already achieves the swapped goal are skipped: their
    target is pinned at 0 and no backup reads them, yet they would hold the
    top priority.

    Args:
        q (QTable): Frozen scoring table
        dataset_buffer (UniformBuffer): Source of transitions and goals
        capacity (int): Number of items to store
        rng (numpy.random.Generator): Source of randomness
        alpha (float): Priority exponent
        eps (float): Priority floor

    Returns:
        PrioritizedBuffer: Full buffer
    """
    if not q.frozen:
        raise ValueError("the scoring Q-table must be frozen before filling the buffer")
    buf = PrioritizedBuffer(capacity, alpha=alpha, eps=eps)
    goal_of = dataset_buffer.goal_of_table
    goals = dataset_buffer.achieved_goals
    if goals.size == 1 and np.all(goal_of[dataset_buffer.batch.states] == goals[0]):
        raise GCRLError("every goal swap starts at its own goal; the dataset is degenerate")
    skipped = 0
    while len(buf) < capacity:
        n = min(chunk, capacity - len(buf))
        swaps = swap_columns(dataset_buffer, n, rng)
        keep = goal_of[swaps.states] != swaps.goals
        skipped += int(n - keep.sum())
        swaps = swaps.take(np.flatnonzero(keep))
        if len(swaps) == 0:
            continue
        w = q.values[swaps.states, swaps.goals, swaps.actions]
        buf.insert_many(swaps, priority_from_q(w, q.H_max, alpha, eps))
    log.info("Filled prioritized buffer: %d items, total priority %.1f, %d at-goal swaps skipped",
             len(buf), buf.total_priority, skipped)
    return buf


def build_trainer(dataset, env, schedule, variant, pretrained=None, priority_buffer=None,
                  kind="dataset_constrained", warm_start=False, buffer_capacity=None,
                  alpha=1.0, eps=1e-3, rng=None):
    """
    Set up retraining for one variant without running it.

    baseline uses only the dataset buffer, swap adds fresh random swaps, mem
    adds draws from the prioritized buffer (filled from `pretrained` when no
    buffer is given).
    """
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant: {variant}")
    if kind not in KINDS:
        raise ValueError(f"Unknown learner kind: {kind}")
    schedule.validate("train")
    rng = rng or seeding.stream(schedule.rng_seed, "train")
    beta = UniformBuffer.from_dataset(dataset, env)
    mask = DatasetActionMask.from_buffer(beta, env.num_states, env.num_actions) \
        if kind == "dataset_constrained" else None

    aug_source = None
    if variant == "swap":
        aug_source = GoalSwapSampler(beta)
    elif variant == "mem":
        if priority_buffer is None:
            if pretrained is None:
                raise ValueError("variant 'mem' requires a pre-trained Q-table")
            capacity = buffer_capacity or 10 * len(beta)
            priority_buffer = fill_priority_buffer(pretrained, beta, capacity,
                                                   seeding.stream(schedule.rng_seed, "buffer"), alpha, eps)
        aug_source = priority_buffer

    if warm_start:
        if pretrained is None:
            raise ValueError("warm start requires a pre-trained Q-table")
        q = pretrained.copy(kind)
    else:
        q = QTable.for_env(env, kind)
    return OfflineTrainer(q, beta, aug_source, schedule, rng, mask, name=f"train[{variant}]")


def train_agent(dataset, env, schedule, variant, pretrained: Optional[QTable] = None, **kwargs):
    """
    Retrain an agent for one variant.

    Args:
        dataset (OfflineDataset): Offline data
        env (GCEnvironment): Environment
        schedule (TrainSchedule): Retraining schedule
        variant (str): "baseline", "swap" or "mem"
        pretrained (QTable, optional): Frozen scoring table; required for mem
        **kwargs: Passed to build_trainer

    Returns:
        QTable: Trained table
    """
    trainer = build_trainer(dataset, env, schedule, variant, pretrained, **kwargs)
    trainer.run()
    return trainer.q
