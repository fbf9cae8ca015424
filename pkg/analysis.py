"""
Verification studies: Q-value separation between reachable and swapped
transitions, reachability classifiers on the Q feature, policy evaluation
and multi-seed significance tests.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy import stats
from scipy.special import expit

from distance_oracle import build_oracle
from errors import GCRLError
from gc_core import TransitionBatch
from goal_swap import swap_columns
from replay_buffers import UniformBuffer

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class LabeledQSample:
    q: float
    label: str


def _arrays(samples):
    q = np.array([s.q for s in samples], dtype=np.float64)
    y = np.array([s.label == POSITIVE for s in samples], dtype=bool)
    return q, y


def positive_transitions(dataset):
    """Transitions of successful expert trajectories, evaluated under their own goals."""
    return TransitionBatch.from_transitions(
        t for traj, tag in zip(dataset.trajectories, dataset.provenance)
        if tag == "expert" and traj.success for t in traj)


def collect_labeled_q(q, dataset, env, n_per_class, rng, oracle=None, max_draws=1_000_000):
    """
    Score positive and negative transitions with a Q-table.

    Positives are drawn from successful expert trajectories; negatives are
    random goal swaps, restricted to goals unreachable from the swapped
    state when an oracle is given.

    Args:
        q (QTable): Scoring table
        dataset (OfflineDataset): Offline data
        env (GCEnvironment): Environment
        n_per_class (int): Samples per class
        rng (numpy.random.Generator): Source of randomness
        oracle (DistanceOracle, optional): Enables unreachable-only negatives

    Returns:
        list: 2 * n_per_class LabeledQSample, positives first
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    pos = positive_transitions(dataset)
    if len(pos) == 0:
        raise GCRLError("dataset has no successful expert trajectories to draw positives from")
    pos = pos.take(rng.integers(len(pos), size=n_per_class))

    beta = UniformBuffer.from_dataset(dataset, env)
    negs = []
    have = 0
    drawn = 0
    while have < n_per_class:
        if drawn >= max_draws:
            raise GCRLError(f"found only {have} of {n_per_class} negatives in {drawn} swaps")
        chunk = swap_columns(beta, 4096, rng)
        drawn += len(chunk)
        if oracle is not None:
            chunk = chunk.take(np.flatnonzero(~oracle.reachable_mask()[chunk.states, chunk.goals]))
        negs.append(chunk)
        have += len(chunk)
    neg = TransitionBatch.concatenate(negs).take(np.arange(n_per_class))

    q_pos = q.values[pos.states, pos.goals, pos.actions]
    q_neg = q.values[neg.states, neg.goals, neg.actions]
    return ([LabeledQSample(float(v), POSITIVE) for v in q_pos]
            + [LabeledQSample(float(v), NEGATIVE) for v in q_neg])


@dataclass(frozen=True)
class QHistogram:
    edges: np.ndarray
    count_positive: np.ndarray
    count_negative: np.ndarray

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("bin_left", "bin_right", "count_positive", "count_negative"))
        for i in range(len(self.count_positive)):
            writer.writerow((repr(float(self.edges[i])), repr(float(self.edges[i + 1])),
                             int(self.count_positive[i]), int(self.count_negative[i])))
        return out.getvalue()


def q_histogram(samples, bins, H_max):
    """
    Per-class counts over shared bins spanning [-H_max, 0].

    The last bin is closed on the right, so q = 0 lands in it.
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    if not samples:
        raise ValueError("no samples to histogram")
    q, y = _arrays(samples)
    edges = np.linspace(-float(H_max), 0.0, bins + 1)
    pos, _ = np.histogram(q[y], bins=edges)
    neg, _ = np.histogram(q[~y], bins=edges)
    return QHistogram(edges, pos, neg)


def _check_two_classes(y):
    if y.size == 0 or y.all() or not y.any():
        raise ValueError("classifier needs samples of both classes")


def _threshold_accuracy(q, y, thresholds):
    pos = np.sort(q[y])
    neg = np.sort(q[~y])
    pos_ge = pos.size - np.searchsorted(pos, thresholds, side="left")
    neg_lt = np.searchsorted(neg, thresholds, side="left")
    return (pos_ge + neg_lt) / q.size


@dataclass(frozen=True)
class ThresholdFit:
    threshold: float
    train_accuracy: float

    def predict(self, q):
        return np.asarray(q) >= self.threshold


def fit_threshold_classifier(samples):
    """
    Best single cut on the Q feature: predict positive iff q >= threshold.

    Candidates are the midpoints between consecutive distinct values plus
    the two cuts that label everything one class; ties go to the lowest
    threshold.
    """
    q, y = _arrays(samples)
    _check_two_classes(y)
    u = np.unique(q)
    candidates = np.concatenate([[u[0]], (u[:-1] + u[1:]) / 2.0, [u[-1] + 1.0]])
    acc = _threshold_accuracy(q, y, candidates)
    best = int(np.argmax(acc))
    return ThresholdFit(float(candidates[best]), float(acc[best]))


@dataclass(frozen=True)
class LogisticFit:
    weight: float
    bias: float
    train_accuracy: float

    def predict(self, q):
        return self.weight * np.asarray(q) + self.bias >= 0.0

    @property
    def boundary(self):
        return -self.bias / self.weight if self.weight else float("nan")


def fit_logistic_1d(samples, steps=2000, lr=0.5):
    """
    Logistic regression on the scalar Q feature by gradient descent on the
    mean binary cross-entropy. The feature is standardized during fitting;
    returned parameters act on raw q.
    """
    q, y = _arrays(samples)
    _check_two_classes(y)
    mu = q.mean()
    sd = q.std() or 1.0
    x = (q - mu) / sd
    t = y.astype(np.float64)
    w = b = 0.0
    for _ in range(steps):
        err = expit(w * x + b) - t
        w -= lr * float(np.mean(err * x))
        b -= lr * float(np.mean(err))
    weight = w / sd
    bias = b - w * mu / sd
    acc = float(np.mean((weight * q + bias >= 0.0) == y))
    return LogisticFit(weight, bias, acc)


def classification_report(samples, rng, steps=2000, lr=0.5):
    """
    Train accuracy on all samples and held-out accuracy on a random 50/50
    split, for both classifiers.
    """
    q, y = _arrays(samples)
    threshold = fit_threshold_classifier(samples)
    logistic = fit_logistic_1d(samples, steps, lr)

    order = rng.permutation(len(samples))
    half = len(samples) // 2
    train = [samples[i] for i in order[:half]]
    test_idx = order[half:]
    report = {
        "n_samples": len(samples),
        "threshold": {"threshold": threshold.threshold, "train_accuracy": threshold.train_accuracy},
        "logistic": {"weight": logistic.weight, "bias": logistic.bias,
                     "train_accuracy": logistic.train_accuracy},
    }
    try:
        t_half = fit_threshold_classifier(train)
        l_half = fit_logistic_1d(train, steps, lr)
    except ValueError:
        log.warning("Held-out split has a single class; skipping held-out accuracy")
        return report
    report["threshold"]["heldout_accuracy"] = float(np.mean(t_half.predict(q[test_idx]) == y[test_idx]))
    report["logistic"]["heldout_accuracy"] = float(np.mean(l_half.predict(q[test_idx]) == y[test_idx]))
    return report


def separation_test(samples):
    """
    One-sided Welch test that positives score higher than negatives.

    Returns:
        dict: mean_positive, mean_negative, difference, t, p
    """
    q, y = _arrays(samples)
    _check_two_classes(y)
    res = stats.ttest_ind(q[y], q[~y], equal_var=False, alternative="greater")
    return {
        "mean_positive": float(q[y].mean()),
        "mean_negative": float(q[~y].mean()),
        "difference": float(q[y].mean() - q[~y].mean()),
        "t": float(res.statistic),
        "p": float(res.pvalue),
    }


def sample_eval_pairs(oracle, episodes, rng):
    """Uniform (start, goal) pairs over reachable pairs with start != goal."""
    pairs = oracle.reachable_pairs(exclude_trivial=True)
    if pairs.size == 0:
        raise ValueError("environment has no reachable evaluation pairs")
    return pairs[rng.integers(len(pairs), size=episodes)]


@dataclass(frozen=True)
class EvalEntry:
    """Evaluation of one policy over a set of episodes."""
    seed: int
    mean_reward: float
    success_rate: float
    mean_length: float


def evaluate_policy(policy, env, episodes, rng, oracle=None, pairs=None, seed=0):
    """
    Roll out a policy from (start, goal) pairs with the H_max step cap.

    The episode reward is minus the number of steps taken, so an optimal
    rollout earns -d(s0, g) and a failed one -H_max.

    Args:
        policy (callable): (s, g) -> action
        env (GCEnvironment): Environment
        episodes (int): Number of episodes
        rng (numpy.random.Generator): Used to draw pairs when none are given
        oracle (DistanceOracle, optional): Needed when pairs are drawn here
        pairs (numpy.ndarray, optional): Fixed (start, goal) pairs
        seed (int): Recorded on the entry

    Returns:
        EvalEntry: Aggregates over the episodes

    Raises:
        ValueError: If fewer pairs than episodes are given
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    if pairs is None:
        if oracle is None:
            oracle = build_oracle(env)
        pairs = sample_eval_pairs(oracle, episodes, rng)
    elif len(pairs) < episodes:
        raise ValueError(f"{episodes} episodes requested but only {len(pairs)} (start, goal) pairs given")
    rewards, lengths, successes = [], [], []
    for s0, g in pairs[:episodes]:
        s, g = int(s0), int(g)
        steps = 0
        reached = env.goal_of(s) == g
        while not reached and steps < env.H_max:
            s = env.step(s, policy(s, g))
            steps += 1
            reached = env.goal_of(s) == g
        rewards.append(-steps)
        lengths.append(steps)
        successes.append(reached)
    return EvalEntry(int(seed), float(np.mean(rewards)), float(np.mean(successes)), float(np.mean(lengths)))


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std}


@dataclass
class EvalReport:
    """Per-seed evaluation entries of one variant."""
    variant: str
    entries: List[EvalEntry] = field(default_factory=list)

    @property
    def seeds(self):
        return [e.seed for e in self.entries]

    def rewards(self):
        return np.array([e.mean_reward for e in self.entries], dtype=np.float64)

    def aggregate(self):
        return {
            "mean_reward": _mean_std([e.mean_reward for e in self.entries]),
            "success_rate": _mean_std([e.success_rate for e in self.entries]),
            "mean_length": _mean_std([e.mean_length for e in self.entries]),
        }

    def to_dict(self):
        return {
            "variant": self.variant,
            "seeds": self.seeds,
            "mean_reward": [e.mean_reward for e in self.entries],
            "success_rate": [e.success_rate for e in self.entries],
            "mean_length": [e.mean_length for e in self.entries],
            "aggregate": self.aggregate(),
        }

    @classmethod
    def from_dict(cls, data):
        entries = [EvalEntry(s, r, sr, ml) for s, r, sr, ml in
                   zip(data["seeds"], data["mean_reward"], data["success_rate"], data["mean_length"])]
        return cls(data["variant"], entries)


def welch_t(a, b):
    """
    Welch's two-sample t-test.

    Identical constant samples give t = 0, p = 1; distinct constant samples
    give an infinite t and p = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.var() == 0 and b.var() == 0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        return float(np.sign(a.mean() - b.mean()) * np.inf), 0.0
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class SignificanceRow:
    variant_a: str
    variant_b: str
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    t: float
    p: float


def compare_variants(reports: Dict[str, EvalReport]):
    """
    Pairwise Welch tests on per-seed mean rewards.

    Args:
        reports (dict): variant name -> EvalReport, each with at least 2 seeds

    Returns:
        list: SignificanceRow per unordered variant pair, in insertion order
    """
    for name, report in reports.items():
        if len(report.entries) < 2:
            raise ValueError(f"variant '{name}' needs at least 2 seeds for a t-test")
    rows = []
    for (na, ra), (nb, rb) in itertools.combinations(reports.items(), 2):
        a, b = ra.rewards(), rb.rewards()
        t, p = welch_t(a, b)
        sa, sb = _mean_std(a), _mean_std(b)
        rows.append(SignificanceRow(na, nb, sa["mean"], sa["std"], sb["mean"], sb["std"], t, p))
    return rows


def significance_csv(rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("variant_a", "variant_b", "mean_a", "std_a", "mean_b", "std_b", "t", "p"))
    for r in rows:
        writer.writerow((r.variant_a, r.variant_b, repr(r.mean_a), repr(r.std_a),
                         repr(r.mean_b), repr(r.std_b), repr(r.t), repr(r.p)))
    return out.getvalue()
