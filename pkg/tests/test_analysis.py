import math

import numpy as np
import pytest

from analysis import (NEGATIVE, POSITIVE, EvalEntry, EvalReport, LabeledQSample,
                      classification_report, collect_labeled_q, compare_variants, evaluate_policy,
                      fit_logistic_1d, fit_threshold_classifier, q_histogram, sample_eval_pairs,
                      separation_test, significance_csv, welch_t)
from distance_oracle import build_oracle
from errors import GCRLError
from offline_dataset import generate_dataset
from q_learner import QTable, greedy_policy, solve_full_coverage


def samples(pos, neg):
    return [LabeledQSample(float(q), POSITIVE) for q in pos] + [LabeledQSample(float(q), NEGATIVE) for q in neg]


def test_histogram_conserves_counts(rng):
    s = samples(rng.uniform(-50, 0, 300), rng.uniform(-50, 0, 200))
    hist = q_histogram(s, 10, 50)
    assert hist.count_positive.sum() == 300
    assert hist.count_negative.sum() == 200
    assert hist.edges[0] == -50 and hist.edges[-1] == 0


def test_histogram_zero_values_land_in_last_bin():
    hist = q_histogram(samples([0.0] * 5, [0.0] * 3), 4, 20)
    assert hist.count_positive.tolist() == [0, 0, 0, 5]
    assert hist.count_negative.tolist() == [0, 0, 0, 3]


def test_histogram_is_order_invariant(rng):
    s = samples(rng.uniform(-20, 0, 50), rng.uniform(-20, 0, 50))
    shuffled = [s[i] for i in rng.permutation(len(s))]
    assert q_histogram(s, 7, 20).to_csv() == q_histogram(shuffled, 7, 20).to_csv()


def test_histogram_csv_header_and_errors():
    csv_text = q_histogram(samples([-1.0], [-2.0]), 2, 4).to_csv()
    assert csv_text.splitlines()[0] == "bin_left,bin_right,count_positive,count_negative"
    with pytest.raises(ValueError):
        q_histogram([], 4, 10)
    with pytest.raises(ValueError):
        q_histogram(samples([-1.0], [-2.0]), 1, 10)


def test_threshold_separated_classes():
    fit = fit_threshold_classifier(samples([-1, -2, -3], [-10, -12, -11]))
    assert fit.train_accuracy == 1.0
    assert fit.threshold == pytest.approx(-6.5)


def test_threshold_identical_distributions():
    fit = fit_threshold_classifier(samples([-5.0] * 10, [-5.0] * 10))
    assert fit.train_accuracy == pytest.approx(0.5)


def test_threshold_requires_both_classes():
    with pytest.raises(ValueError):
        fit_threshold_classifier(samples([-1.0, -2.0], []))


def test_threshold_invariant_under_monotone_transform(rng):
    pos, neg = rng.normal(-5, 3, 200), rng.normal(-10, 3, 200)
    base = fit_threshold_classifier(samples(pos, neg)).train_accuracy
    warped = fit_threshold_classifier(samples(np.exp(pos / 4) * 3 + 1, np.exp(neg / 4) * 3 + 1))
    assert warped.train_accuracy == pytest.approx(base)


def test_logistic_separated_data():
    s = samples(np.linspace(-5, -1, 20), np.linspace(-30, -20, 20))
    fit = fit_logistic_1d(s, steps=3000, lr=0.5)
    assert fit.train_accuracy == 1.0
    assert -20 < fit.boundary < -5


def test_logistic_close_to_threshold(rng):
    s = samples(rng.normal(-6, 4, 500), rng.normal(-14, 4, 500))
    thr = fit_threshold_classifier(s).train_accuracy
    log = fit_logistic_1d(s, steps=2000, lr=0.5).train_accuracy
    assert abs(thr - log) <= 0.02


def test_classification_report_has_heldout(rng):
    s = samples(rng.normal(-3, 1, 100), rng.normal(-9, 1, 100))
    report = classification_report(s, rng, steps=500)
    assert report["threshold"]["train_accuracy"] > 0.95
    assert "heldout_accuracy" in report["threshold"]
    assert "heldout_accuracy" in report["logistic"]


def test_separation_test_one_sided(rng):
    res = separation_test(samples(rng.normal(-3, 1, 200), rng.normal(-6, 1, 200)))
    assert res["difference"] > 0
    assert res["p"] < 0.01
    flipped = separation_test(samples(rng.normal(-6, 1, 200), rng.normal(-3, 1, 200)))
    assert flipped["p"] > 0.99


def test_collect_labeled_q(open5, small_dataset, rng):
    q = solve_full_coverage(open5)
    s = collect_labeled_q(q, small_dataset, open5, 150, rng)
    assert sum(x.label == POSITIVE for x in s) == 150
    assert sum(x.label == NEGATIVE for x in s) == 150
    assert all(-open5.H_max <= x.q <= 0 for x in s)
    pos = np.mean([x.q for x in s if x.label == POSITIVE])
    neg = np.mean([x.q for x in s if x.label == NEGATIVE])
    assert pos > neg


def test_collect_labeled_q_unreachable_negatives(islands, rng):
    ds = generate_dataset(islands, 20, 20, 0.0, seed=4)
    q = solve_full_coverage(islands)
    s = collect_labeled_q(q, ds, islands, 100, rng, oracle=build_oracle(islands))
    neg = [x.q for x in s if x.label == NEGATIVE]
    assert all(v == -islands.H_max for v in neg)
    hist = q_histogram(s, 8, islands.H_max)
    assert hist.count_negative[0] == 100
    assert fit_threshold_classifier(s).train_accuracy == 1.0


def test_collect_labeled_q_needs_positives(open5):
    ds = generate_dataset(open5, 0, 10, 0.1, seed=0)
    with pytest.raises(GCRLError):
        collect_labeled_q(QTable.for_env(open5), ds, open5, 10, np.random.default_rng(0))


def test_optimal_policy_evaluation(open5, rng):
    oracle = build_oracle(open5)
    pairs = sample_eval_pairs(oracle, 50, rng)
    entry = evaluate_policy(greedy_policy(solve_full_coverage(open5)), open5, 50, rng, pairs=pairs)
    assert entry.success_rate == 1.0
    expected = -np.mean([oracle.distance(s, g) for s, g in pairs])
    assert entry.mean_reward == pytest.approx(expected)


def test_random_policy_worse_than_optimal(four_rooms):
    oracle = build_oracle(four_rooms)
    pairs = sample_eval_pairs(oracle, 50, np.random.default_rng(0))
    act = np.random.default_rng(1)
    rand = evaluate_policy(lambda s, g: int(act.integers(4)), four_rooms, 50, act, pairs=pairs)
    best = evaluate_policy(greedy_policy(solve_full_coverage(four_rooms)), four_rooms, 50, act, pairs=pairs)
    assert rand.success_rate < best.success_rate == 1.0


def test_evaluation_rejects_too_few_pairs(open5, rng):
    pairs = sample_eval_pairs(build_oracle(open5), 10, rng)
    with pytest.raises(ValueError, match="only 10"):
        evaluate_policy(lambda s, g: 0, open5, 50, rng, pairs=pairs)


def test_eval_report_aggregate_round_trip():
    report = EvalReport("mem", [EvalEntry(1, -5.0, 1.0, 5.0), EvalEntry(2, -7.0, 0.5, 9.0)])
    agg = report.aggregate()
    assert agg["mean_reward"]["mean"] == -6.0
    assert agg["mean_reward"]["std"] == pytest.approx(math.sqrt(2.0))
    assert EvalReport.from_dict(report.to_dict()) == report


def _report(name, rewards):
    return EvalReport(name, [EvalEntry(i, r, 1.0, -r) for i, r in enumerate(rewards)])


def test_compare_identical_reports():
    rows = compare_variants({"a": _report("a", [-3, -4, -5]), "b": _report("b", [-3, -4, -5])})
    assert rows[0].p == pytest.approx(1.0)
    assert rows[0].t == pytest.approx(0.0)


def test_compare_constant_identical_reports():
    assert welch_t([-4, -4], [-4, -4]) == (0.0, 1.0)


def test_compare_disjoint_reports_significant():
    rows = compare_variants({"mem": _report("mem", np.linspace(-5, -4, 10)),
                             "baseline": _report("baseline", np.linspace(-9, -8, 10))})
    assert rows[0].p < 0.05
    assert rows[0].t > 0


def test_welch_t_matches_hand_computation():
    a, b = [1.0, 2.0, 3.0], [2.0, 4.0, 9.0]
    # means 2 and 5, sample variances 1 and 13
    t_expected = (2.0 - 5.0) / math.sqrt(1.0 / 3 + 13.0 / 3)
    t, _ = welch_t(a, b)
    assert t == pytest.approx(t_expected)


def test_compare_needs_two_seeds():
    with pytest.raises(ValueError):
        compare_variants({"a": _report("a", [-1]), "b": _report("b", [-2, -3])})


def test_significance_csv_columns():
    rows = compare_variants({"a": _report("a", [-3, -4]), "b": _report("b", [-5, -7]),
                             "c": _report("c", [-1, -2])})
    lines = significance_csv(rows).splitlines()
    assert lines[0] == "variant_a,variant_b,mean_a,std_a,mean_b,std_b,t,p"
    assert len(lines) == 4
