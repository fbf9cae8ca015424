"""
Offline goal-conditioned datasets: expert/random generation and JSONL files.

File layout: line 1 is a header {"env": {...}, "seed": int, "version": 1};
every following line is one trajectory
{"goal": int, "success": bool, "tag": "expert"|"random", "steps": [[s, a, r, s_next, done], ...]}.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import List


from artifacts import atomic_write_text
from errors import DatasetParseError, MissingArtifactError
from gc_core import GCTransition, TransitionBatch, Trajectory, sparse_reward
from grid_env import GridSpec, build_env
from distance_oracle import build_oracle
import seeding

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TAGS = ("expert", "random")


@dataclass
class OfflineDataset:
    """
    Trajectories plus the information needed to reproduce them.

    Args:
        trajectories (list): Trajectory objects
        env_spec (GridSpec): Layout the data was collected on
        provenance (list): Tag per trajectory, "expert" or "random"
        rng_seed (int): Seed the data was generated from
    """
    trajectories: List[Trajectory]
    env_spec: GridSpec
    provenance: List[str]
    rng_seed: int

    def __post_init__(self):
        if len(self.trajectories) != len(self.provenance):
            raise ValueError("provenance must have one tag per trajectory")
        for tag in self.provenance:
            if tag not in TAGS:
                raise ValueError(f"Unknown provenance tag: {tag}")

    def __len__(self):
        return len(self.trajectories)

    @property
    def num_transitions(self):
        return sum(len(t) for t in self.trajectories)

    def count(self, tag):
        return sum(1 for p in self.provenance if p == tag)

    def tagged(self, tag):
        return [t for t, p in zip(self.trajectories, self.provenance) if p == tag]

    def success_rate(self, tag=None):
        trajs = self.trajectories if tag is None else self.tagged(tag)
        if not trajs:
            return 0.0
        return sum(t.success for t in trajs) / len(trajs)

    def transitions(self):
        return TransitionBatch.from_transitions(t for traj in self.trajectories for t in traj)


def _draw_pair(env, rng, oracle=None):
    """Uniform (start, goal) with start != goal; reachable only if an oracle is given."""
    starts = env.initial_states
    goals = env.goals
    for _ in range(10_000):
        s0 = int(starts[rng.integers(starts.size)])
        g = int(goals[rng.integers(goals.size)])
        if env.goal_of(s0) == g:
            continue
        if oracle is not None and not oracle.reachable(s0, g):
            continue
        return s0, g
    raise ValueError("Environment has no valid (start, goal) pair.")


def _has_valid_pair(env, oracle=None):
    not_at_goal = env.goal_of_table[:, None] != env.goals[None, :]
    if oracle is None:
        return bool(not_at_goal.any())
    return bool((not_at_goal & oracle.reachable_mask()[:, env.goals]).any())


def _run_episode(env, s0, g, choose_action):
    transitions = []
    s = s0
    for t in range(env.H_max):
        a = int(choose_action(s, g))
        s2 = env.step(s, a)
        r = sparse_reward(env.goal_of(s2), g)
        done = r == 0 or t == env.H_max - 1
        transitions.append(GCTransition(s, g, a, r, s2, done))
        s = s2
        if done:
            break
    return Trajectory(tuple(transitions), g, env.goal_of(s) == g)


def generate_expert(env, n, noise, rng, oracle=None):
    """
    Noisy shortest-path trajectories.

    With probability (1 - noise) per step the action is drawn uniformly from
    the BFS-optimal actions, otherwise uniformly from all actions. Pairs whose
    goal is unreachable from the start are redrawn.

    Args:
        env (GCEnvironment): Environment
        n (int): Number of trajectories
        noise (float): Per-step probability of a random action, in [0, 1]
        rng (numpy.random.Generator): Source of randomness
        oracle (DistanceOracle, optional): Precomputed distances for env

    Returns:
        list: n Trajectory objects
    """
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    if n < 0:
        raise ValueError("n must be non-negative")
    oracle = oracle or build_oracle(env)
    if n and not _has_valid_pair(env, oracle):
        raise ValueError("Environment has no reachable (start, goal) pair.")

    trajectories = []
    for child in rng.spawn(n):
        s0, g = _draw_pair(env, child, oracle)

        def choose(s, goal, child=child):
            if child.random() < noise:
                return child.integers(env.num_actions)
            best = oracle.optimal_actions(env, s, goal)
            return best[child.integers(best.size)]

        trajectories.append(_run_episode(env, s0, g, choose))
    return trajectories


def generate_random(env, n, rng):
    """
    Uniform-random-action trajectories from uniform (start, goal) pairs.

    Args:
        env (GCEnvironment): Environment
        n (int): Number of trajectories
        rng (numpy.random.Generator): Source of randomness

    Returns:
        list: n Trajectory objects
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n and not _has_valid_pair(env):
        raise ValueError("Environment has no valid (start, goal) pair.")
    trajectories = []
    for child in rng.spawn(n):
        s0, g = _draw_pair(env, child)
        trajectories.append(_run_episode(env, s0, g, lambda s, goal, child=child: child.integers(env.num_actions)))
    return trajectories


def generate_dataset(env, n_expert, n_random, noise, seed):
    """
    Expert/random mixture, a pure function of (env, request, seed).

    Returns:
        OfflineDataset: n_expert expert trajectories followed by n_random random ones
    """
    expert = generate_expert(env, n_expert, noise, seeding.stream(seed, "dataset/expert"))
    random_ = generate_random(env, n_random, seeding.stream(seed, "dataset/random"))
    ds = OfflineDataset(expert + random_, env.spec, ["expert"] * n_expert + ["random"] * n_random, seed)
    log.info("Generated %d expert + %d random trajectories (%d transitions, expert success %.2f)",
             n_expert, n_random, ds.num_transitions, ds.success_rate("expert"))
    return ds


def check_rewards(dataset, env):
    """
    Recompute every reward from the sparse reward rule.

    Returns:
        list: (trajectory index, step index) of every inconsistent transition
    """
    bad = []
    for i, traj in enumerate(dataset.trajectories):
        for k, t in enumerate(traj):
            if t.reward != sparse_reward(env.goal_of(t.next_state), t.goal):
                bad.append((i, k))
    return bad


def _encode_trajectory(traj, tag):
    return {
        "goal": traj.commanded_goal,
        "success": bool(traj.success),
        "tag": tag,
        "steps": [[t.state, t.action, t.reward, t.next_state, int(t.done)] for t in traj],
    }


def dumps_dataset(ds):
    """Serialize to the JSONL text format."""
    lines = [json.dumps({"env": ds.env_spec.to_dict(), "seed": ds.rng_seed, "version": FORMAT_VERSION},
                        separators=(",", ":"))]
    for traj, tag in zip(ds.trajectories, ds.provenance):
        lines.append(json.dumps(_encode_trajectory(traj, tag), separators=(",", ":")))
    return "\n".join(lines) + "\n"


def save_dataset(ds, path):
    """
    Write a dataset file atomically.

    Args:
        ds (OfflineDataset): Dataset to write
        path (str or Path): Destination

    Returns:
        Path: The written path
    """
    return atomic_write_text(path, dumps_dataset(ds))


def _field(obj, name, kind, path, line):
    if not isinstance(obj, dict) or name not in obj:
        raise DatasetParseError(path, line, name, "missing")
    value = obj[name]
    ok = isinstance(value, kind) and not (kind is int and isinstance(value, bool))
    if not ok:
        raise DatasetParseError(path, line, name, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_steps(raw, goal, env, path, line):
    if not isinstance(raw, list):
        raise DatasetParseError(path, line, "steps", "expected list")
    transitions = []
    for k, step in enumerate(raw):
        name = f"steps[{k}]"
        if not isinstance(step, list) or len(step) != 5:
            raise DatasetParseError(path, line, name, "expected [s, a, r, s_next, done]")
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in step):
            raise DatasetParseError(path, line, name, "expected integers")
        s, a, r, s2, done = step
        if r not in (0, -1):
            raise DatasetParseError(path, line, name, f"reward {r} not in {{-1, 0}}")
        if done not in (0, 1):
            raise DatasetParseError(path, line, name, f"done {done} not in {{0, 1}}")
        if not (0 <= s < env.num_states and 0 <= s2 < env.num_states):
            raise DatasetParseError(path, line, name, f"state id outside [0, {env.num_states})")
        if not 0 <= a < env.num_actions:
            raise DatasetParseError(path, line, name, f"action {a} outside [0, {env.num_actions})")
        if env.step(s, a) != s2:
            raise DatasetParseError(path, line, name, f"action {a} from state {s} does not lead to {s2}")
        if r != sparse_reward(env.goal_of(s2), goal):
            raise DatasetParseError(path, line, name, f"reward {r} contradicts goal {goal}")
        transitions.append(GCTransition(s, goal, a, r, s2, bool(done)))
    return transitions


def loads_dataset(text, path="<string>"):
    """
    Parse the JSONL text format.

    Raises:
        DatasetParseError: On any malformed line; no partial dataset is returned
    """
    if not text:
        raise DatasetParseError(path, 1, "header", "empty file")
    if not text.endswith("\n"):
        raise DatasetParseError(path, text.count("\n") + 1, "line", "truncated (no trailing newline)")
    lines = text.split("\n")[:-1]

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetParseError(path, 1, "header", str(exc)) from None
    version = _field(header, "version", int, path, 1)
    if version != FORMAT_VERSION:
        raise DatasetParseError(path, 1, "version", f"unsupported version {version}")
    seed = _field(header, "seed", int, path, 1)
    env = _field(header, "env", dict, path, 1)
    try:
        spec = GridSpec.from_dict(env)
        grid = build_env(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(path, 1, "env", str(exc)) from None

    trajectories, provenance = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(path, lineno, "line", str(exc)) from None
        goal = _field(obj, "goal", int, path, lineno)
        if not 0 <= goal < grid.num_goals:
            raise DatasetParseError(path, lineno, "goal", f"goal {goal} outside [0, {grid.num_goals})")
        success = _field(obj, "success", bool, path, lineno)
        tag = _field(obj, "tag", str, path, lineno)
        if tag not in TAGS:
            raise DatasetParseError(path, lineno, "tag", f"unknown tag {tag!r}")
        steps = _parse_steps(obj.get("steps"), goal, grid, path, lineno)
        try:
            traj = Trajectory(tuple(steps), goal, success)
        except ValueError as exc:
            raise DatasetParseError(path, lineno, "steps", str(exc)) from None
        trajectories.append(traj)
        provenance.append(tag)
    return OfflineDataset(trajectories, spec, provenance, seed)


def load_dataset(path):
    """Read a dataset file written by save_dataset."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise MissingArtifactError(path, "dataset") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[:exc.start].count(b"\n") + 1
        raise DatasetParseError(path, line, "line", f"invalid UTF-8 at byte {exc.start}") from None
    return loads_dataset(text, path)
