"""
Stage orchestration: each cmd_* function runs one stage from files on disk
to files on disk, so stages can be re-run on their own. cmd_pipeline chains
them and runs the per-(variant, seed) retraining in parallel.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

from analysis import (EvalReport, classification_report, collect_labeled_q, compare_variants,
                      evaluate_policy, positive_transitions, q_histogram, sample_eval_pairs,
                      separation_test, significance_csv)
from artifacts import (RunManifest, atomic_write_text, content_hash, file_sha256, is_cached,
                       mark_cached, require, write_json)
from distance_oracle import build_oracle
from errors import ConfigError, GCRLError, StageError
from experiment_config import ExperimentConfig
from grid_env import build_env
from offline_dataset import check_rewards, generate_dataset, load_dataset, save_dataset
from q_learner import QTable, fill_priority_buffer, greedy_policy, pretrain_q, train_agent
from replay_buffers import PrioritizedBuffer, UniformBuffer
import seeding

log = logging.getLogger(__name__)


class RunPaths:
    """Where every artifact of a run lives under the output directory."""
    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.dataset = self.root / "dataset.jsonl"
        self.pretrained = self.root / "pretrain_q.bin"
        self.buffer = self.root / "buffer.csv"
        self.qhist = self.root / "qhist.csv"
        self.classify = self.root / "classify.json"
        self.significance = self.root / "significance.csv"
        self.manifest = self.root / "manifest.json"

    def trained(self, variant, seed):
        return self.root / "train" / variant / f"seed_{seed}.bin"

    def report(self, variant):
        return self.root / "reports" / f"{variant}.json"


def _record(config, started, **artifacts):
    """Add artifacts to the run manifest, starting a new one if the config changed."""
    paths = RunPaths(config.output_dir)
    config_hash = config.hash()
    manifest = None
    if paths.manifest.exists():
        manifest = RunManifest.load(paths.manifest)
        if manifest.config_hash != config_hash:
            manifest = None
    manifest = manifest or RunManifest(config_hash, config.seed)
    for name, path in artifacts.items():
        manifest.add(name, path)
    manifest.wall_clock_seconds += time.time() - started
    manifest.save(paths.manifest)
    return manifest


def _load_inputs(config, dataset_path):
    dataset = load_dataset(require(dataset_path, "dataset"))
    if dataset.env_spec != config.env.grid_spec():
        log.warning("Dataset was generated on a different grid than the config describes; using the dataset's")
    env = build_env(dataset.env_spec, config.env.H_max)
    return dataset, env


def _load_q(path, env, what="Q-table"):
    q = QTable.load(require(path, what), env.goal_of_table)
    if q.shape != (env.num_states, env.num_goals, env.num_actions):
        raise GCRLError(f"{path}: Q-table shape {q.shape} does not match the environment")
    return q


def cmd_gen_data(config):
    """
    Generate the offline dataset.

    Returns:
        Path: The dataset file
    """
    started = time.time()
    paths = RunPaths(config.output_dir)
    key = content_hash("gen-data", config.to_dict()["env"], config.to_dict()["dataset"],
                       config.dataset_seed)
    if is_cached(paths.dataset, key):
        log.info("Reusing cached dataset %s", paths.dataset)
    else:
        env = config.env.build()
        ds = generate_dataset(env, config.dataset.n_expert, config.dataset.n_random,
                              config.dataset.noise, config.dataset_seed)
        bad = check_rewards(ds, env)
        if bad:
            raise GCRLError(f"{len(bad)} generated transitions have inconsistent rewards")
        save_dataset(ds, paths.dataset)
        mark_cached(paths.dataset, key)
    _record(config, started, dataset=paths.dataset)
    return paths.dataset


def cmd_pretrain(config, dataset_path=None):
    """
    Pre-train the frozen scoring table with random goal swaps.

    Returns:
        Path: The Q-table file
    """
    started = time.time()
    paths = RunPaths(config.output_dir)
    dataset_path = Path(dataset_path or paths.dataset)
    key = content_hash("pretrain", config.to_dict()["pretrain"], config.env.H_max, config.seed,
                       file_sha256(require(dataset_path, "dataset")))
    if is_cached(paths.pretrained, key):
        log.info("Reusing cached pre-trained table %s", paths.pretrained)
    else:
        dataset, env = _load_inputs(config, dataset_path)
        q = pretrain_q(dataset, env, config.pretrain.schedule(config.seed),
                       rng=seeding.stream(config.seed, "pretrain"))
        q.save(paths.pretrained)
        mark_cached(paths.pretrained, key)
    _record(config, started, pretrained=paths.pretrained)
    return paths.pretrained


def cmd_fill_buffer(config, q_path=None, dataset_path=None):
    """
    Fill the prioritized buffer with swaps scored by the pre-trained table.

    Returns:
        Path: The buffer CSV dump
    """
    started = time.time()
    paths = RunPaths(config.output_dir)
    q_path = Path(q_path or paths.pretrained)
    dataset_path = Path(dataset_path or paths.dataset)
    key = content_hash("fill-buffer", config.to_dict()["buffer"], config.seed,
                       file_sha256(require(dataset_path, "dataset")),
                       file_sha256(require(q_path, "pre-trained Q-table")))
    if is_cached(paths.buffer, key):
        log.info("Reusing cached buffer %s", paths.buffer)
    else:
        dataset, env = _load_inputs(config, dataset_path)
        q = _load_q(q_path, env, "pre-trained Q-table").freeze()
        beta = UniformBuffer.from_dataset(dataset, env)
        capacity = config.buffer.capacity or 10 * len(beta)
        buf = fill_priority_buffer(q, beta, capacity, seeding.stream(config.seed, "buffer"),
                                   config.buffer.alpha, config.buffer.eps)
        buf.dump_csv(paths.buffer)
        mark_cached(paths.buffer, key)
    _record(config, started, buffer=paths.buffer)
    return paths.buffer


def _train_key(config, variant, run_seed, dataset_path, buffer_path, q_path):
    parts = ["train", config.to_dict()["train"], variant, run_seed, config.seed, config.env.H_max,
             file_sha256(dataset_path)]
    if variant == "mem":
        parts += [config.to_dict()["buffer"], file_sha256(buffer_path)]
    if config.train.warm_start:
        parts.append(file_sha256(q_path))
    return content_hash(*parts)


def _train_run(config, variant, run_seed, dataset_path, buffer_path, q_path, out_path):
    if variant == "mem":
        require(buffer_path, "priority buffer (variant 'mem' needs fill-buffer first)")
    if config.train.warm_start:
        require(q_path, "pre-trained Q-table (train.warm_start is set)")
    key = _train_key(config, variant, run_seed, require(dataset_path, "dataset"), buffer_path, q_path)
    if is_cached(out_path, key):
        log.info("Reusing cached table %s", out_path)
        return out_path

    dataset, env = _load_inputs(config, dataset_path)
    pretrained = _load_q(q_path, env).freeze() if config.train.warm_start else None
    priority_buffer = None
    if variant == "mem":
        priority_buffer = PrioritizedBuffer.load_csv(buffer_path, alpha=config.buffer.alpha,
                                                     eps=config.buffer.eps)
    q = train_agent(dataset, env, config.train.schedule(run_seed), variant, pretrained,
                    priority_buffer=priority_buffer, kind=config.train.learner_kind,
                    warm_start=config.train.warm_start,
                    rng=seeding.stream(config.seed, "train", run_seed))
    q.save(out_path)
    mark_cached(out_path, key)
    return out_path


def _train_job(args):
    # runs in a worker process; the parent records the manifest
    config_dict, variant, run_seed = args
    config = ExperimentConfig.from_dict(config_dict)
    paths = RunPaths(config.output_dir)
    return str(_train_run(config, variant, run_seed, paths.dataset, paths.buffer, paths.pretrained,
                          paths.trained(variant, run_seed)))


def cmd_train(config, variant, run_seed, dataset_path=None, buffer_path=None, q_path=None, out_path=None):
    """
    Retrain one agent for one variant and run seed.

    Args:
        config (ExperimentConfig): Run configuration
        variant (str): "baseline", "swap" or "mem"
        run_seed (int): Seed of this training run
        dataset_path, buffer_path, q_path (Path, optional): Inputs; default to the run layout
        out_path (Path, optional): Destination of the trained table

    Returns:
        Path: The trained Q-table file
    """
    started = time.time()
    paths = RunPaths(config.output_dir)
    out_path = _train_run(config, variant, run_seed,
                          Path(dataset_path or paths.dataset),
                          Path(buffer_path or paths.buffer),
                          Path(q_path or paths.pretrained),
                          Path(out_path or paths.trained(variant, run_seed)))
    _record(config, started, **{f"train/{variant}/seed_{run_seed}": out_path})
    return out_path


def evaluate_table(config, q, env, run_seed, variant="agent", oracle=None):
    """
    Greedy rollouts of one table on the evaluation pairs of a run seed.

    The pairs depend only on (master seed, run seed), so every variant is
    scored on the same tasks.
    """
    oracle = oracle or build_oracle(env)
    rng = seeding.stream(config.seed, "eval", run_seed)
    pairs = sample_eval_pairs(oracle, config.eval.episodes, rng)
    entry = evaluate_policy(greedy_policy(q), env, config.eval.episodes, rng, pairs=pairs, seed=run_seed)
    log.info("%s seed %d: mean reward %.2f, success %.2f", variant, run_seed,
             entry.mean_reward, entry.success_rate)
    return entry


def cmd_evaluate(config, q_path, variant="agent", run_seed=None, dataset_path=None, out_path=None):
    """
    Evaluate one trained table and write a single-entry report.

    Returns:
        EvalReport: The written report
    """
    started = time.time()
    paths = RunPaths(config.output_dir)
    run_seed = config.eval.seeds[0] if run_seed is None else run_seed
    _, env = _load_inputs(config, dataset_path or paths.dataset)
    q = _load_q(q_path, env)
    report = EvalReport(variant, [evaluate_table(config, q, env, run_seed, variant)])
    out_path = Path(out_path or paths.root / "reports" / f"{variant}_seed_{run_seed}.json")
    write_json(out_path, report.to_dict())
    _record(config, started, **{f"report/{variant}/seed_{run_seed}": out_path})
    return report


def _labeled_samples(config, q_path, dataset_path):
    dataset, env = _load_inputs(config, dataset_path)
    q = _load_q(q_path, env)
    oracle = build_oracle(env) if config.analysis.negatives == "unreachable" else None
    samples = collect_labeled_q(q, dataset, env, config.analysis.n_per_class,
                                seeding.stream(config.seed, "analysis"), oracle=oracle)
    return samples, env


def cmd_qhist(config, q_path=None, dataset_path=None, out_path=None):
    """
    Histogram the Q-values of positive and swapped transitions.

    Returns:
        Path: The histogram CSV
    """
    started = time.time()
    paths = RunPaths(config.output_dir)
    samples, env = _labeled_samples(config, q_path or paths.pretrained, dataset_path or paths.dataset)
    hist = q_histogram(samples, config.analysis.bins, env.H_max)
    out_path = atomic_write_text(out_path or paths.qhist, hist.to_csv())
    _record(config, started, qhist=out_path)
    return out_path


def cmd_classify(config, q_path=None, dataset_path=None, out_path=None):
    """
    Reachability classifiers on the Q feature plus the separation test.

    Returns:
        dict: The written report
    """
    started = time.time()
    paths = RunPaths(config.output_dir)
    samples, _ = _labeled_samples(config, q_path or paths.pretrained, dataset_path or paths.dataset)
    report = classification_report(samples, seeding.stream(config.seed, "analysis/split"),
                                   config.analysis.logistic_steps, config.analysis.logistic_lr)
    report["negatives"] = config.analysis.negatives
    report["separation"] = separation_test(samples)
    out_path = write_json(out_path or paths.classify, report)
    _record(config, started, classify=out_path)
    return report


@contextmanager
def stage(name):
    """Run a pipeline stage, reporting any failure under the stage's name."""
    log.info("== %s ==", name)
    try:
        yield
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def cmd_pipeline(config):
    """
    gen-data, pretrain, fill-buffer, train for every (variant, seed),
    evaluate and compare; then the qhist and classify studies, which are
    skipped with a warning when the data holds no successful expert
    trajectory.

    Returns:
        dict: Per-variant aggregates, the significance rows, the table path
        and the classifier report (None when the studies were skipped)
    """
    paths = RunPaths(config.output_dir)
    with stage("gen-data"):
        cmd_gen_data(config)
    with stage("pretrain"):
        cmd_pretrain(config)
    if "mem" in config.variants:
        with stage("fill-buffer"):
            cmd_fill_buffer(config)

    runs = [(v, s) for v in config.variants for s in config.eval.seeds]
    with stage("train"):
        started = time.time()
        if config.jobs > 1 and len(runs) > 1:
            log.info("Training %d runs on %d workers", len(runs), config.jobs)
            jobs = [(config.to_dict(), v, s) for v, s in runs]
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                list(pool.map(_train_job, jobs))
        else:
            for v, s in runs:
                _train_run(config, v, s, paths.dataset, paths.buffer, paths.pretrained, paths.trained(v, s))
        _record(config, started, **{f"train/{v}/seed_{s}": paths.trained(v, s) for v, s in runs})

    reports = {}
    with stage("evaluate"):
        started = time.time()
        _, env = _load_inputs(config, paths.dataset)
        oracle = build_oracle(env)
        for v in config.variants:
            entries = [evaluate_table(config, _load_q(paths.trained(v, s), env), env, s, v, oracle)
                       for s in config.eval.seeds]
            reports[v] = EvalReport(v, entries)
            write_json(paths.report(v), reports[v].to_dict())
        _record(config, started, **{f"report/{v}": paths.report(v) for v in config.variants})

    with stage("compare"):
        started = time.time()
        rows = compare_variants(reports)
        atomic_write_text(paths.significance, significance_csv(rows))
        _record(config, started, significance=paths.significance)

    classify = None
    dataset, _ = _load_inputs(config, paths.dataset)
    if len(positive_transitions(dataset)) == 0:
        log.warning("No successful expert trajectories; skipping the qhist and classify studies")
    else:
        with stage("qhist"):
            cmd_qhist(config)
        with stage("classify"):
            classify = cmd_classify(config)

    return {
        "aggregate": {v: r.aggregate() for v, r in reports.items()},
        "significance": [asdict(r) for r in rows],
        "significance_path": str(paths.significance),
        "classify": classify,
    }
