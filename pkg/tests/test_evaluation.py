import itertools

import numpy as np
import pytest

from ademiner.classifier import DocumentClassifier
from ademiner.corpus import EntitySpan
from ademiner.errors import ConfigurationError, EvaluationError
from ademiner.evaluation import (
    EntityMatchReport,
    MatchCounts,
    aggregate,
    benchmark_timing,
    classification_report,
    evaluate_entities,
    match_entities,
    overlap_any_counts,
    prf,
    run_cv_experiment,
)
from helpers import separable_classification_corpus


def spans_match_oracle(g, p, mode):
    if g.label != p.label:
        return False
    if mode == "strict":
        return (g.start, g.end) == (p.start, p.end)
    return g.start < p.end and p.start < g.end


def best_matching_oracle(gold, pred, mode):
    """Exhaustive maximum one-to-one matching over all partial injections."""
    for k in range(min(len(gold), len(pred)), 0, -1):
        for gold_subset in itertools.combinations(range(len(gold)), k):
            for perm in itertools.permutations(range(len(pred)), k):
                if all(spans_match_oracle(gold[g], pred[p], mode)
                       for g, p in zip(gold_subset, perm)):
                    return k
    return 0


class TestPrf:
    def test_perfect(self):
        assert prf(1, 0, 0) == (1.0, 1.0, 1.0)

    def test_all_zero_convention(self):
        assert prf(0, 0, 0) == (0.0, 0.0, 0.0)

    def test_hand_arithmetic_case(self):
        p, r, f = prf(3, 1, 2)
        assert p == pytest.approx(0.75)
        assert r == pytest.approx(0.6)
        assert f == pytest.approx(2 * 0.75 * 0.6 / 1.35)
        assert f == pytest.approx(0.6667, abs=5e-5)

    def test_negative_counts_rejected(self):
        with pytest.raises(EvaluationError):
            prf(-1, 0, 0)


class TestAggregate:
    def test_single_label_macro_equals_micro(self):
        counts = {"ADE": MatchCounts(tp=3, fp=1, fn=2)}
        assert aggregate(counts, "macro") == aggregate(counts, "micro")

    def test_two_label_hand_case(self):
        counts = {"ADE": MatchCounts(tp=1, fp=0, fn=0), "Drug": MatchCounts(tp=0, fp=1, fn=1)}
        macro = aggregate(counts, "macro")
        assert macro[2] == pytest.approx(0.5)
        micro = aggregate(counts, "micro")
        p, r, f = prf(1, 1, 1)
        assert micro == pytest.approx((p, r, f))
        assert micro[2] == pytest.approx(0.5)

    def test_empty_label_contributes_zero_to_macro(self):
        counts = {"ADE": MatchCounts(tp=1, fp=0, fn=0), "Drug": MatchCounts()}
        assert aggregate(counts, "macro")[2] == pytest.approx(0.5)

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            aggregate({"ADE": MatchCounts()}, "weighted")


class TestMatchEntities:
    def test_exact_match_counts_in_both_modes(self):
        gold = [EntitySpan(0, 2, "ADE")]
        pred = [EntitySpan(0, 2, "ADE")]
        for mode in ("strict", "relax"):
            c = match_entities(gold, pred, mode)["ADE"]
            assert (c.tp, c.fp, c.fn) == (1, 0, 0)

    def test_partial_overlap_strict_vs_relax(self):
        gold = [EntitySpan(0, 2, "ADE")]
        pred = [EntitySpan(0, 1, "ADE")]
        strict = match_entities(gold, pred, "strict")["ADE"]
        assert (strict.tp, strict.fp, strict.fn) == (0, 1, 1)
        relax = match_entities(gold, pred, "relax")["ADE"]
        assert (relax.tp, relax.fp, relax.fn) == (1, 0, 0)

    def test_label_mismatch_never_matches(self):
        gold = [EntitySpan(0, 2, "ADE")]
        pred = [EntitySpan(0, 2, "Drug")]
        for mode in ("strict", "relax"):
            counts = match_entities(gold, pred, mode)
            assert counts["ADE"].fn == 1
            assert counts["Drug"].fp == 1

    def test_one_to_one_pairing(self):
        # two predictions overlap one gold span: only one may match
        gold = [EntitySpan(0, 4, "ADE")]
        pred = [EntitySpan(0, 1, "ADE"), EntitySpan(2, 3, "ADE")]
        relax = match_entities(gold, pred, "relax")["ADE"]
        assert (relax.tp, relax.fp, relax.fn) == (1, 1, 0)

    def test_relax_tp_at_least_strict_tp_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            gold = random_span_set(rng)
            pred = random_span_set(rng)
            strict = match_entities(gold, pred, "strict")
            relax = match_entities(gold, pred, "relax")
            for label in ("ADE", "Drug"):
                assert relax[label].tp >= strict[label].tp

    def test_strict_greedy_equals_exhaustive_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            gold = random_span_set(rng)
            pred = random_span_set(rng)
            for label in ("ADE", "Drug"):
                g = [s for s in gold if s.label == label]
                p = [s for s in pred if s.label == label]
                counts = match_entities(gold, pred, "strict")[label]
                assert counts.tp == best_matching_oracle(g, p, "strict")

    def test_relax_optimal_tp_reported(self):
        # greedy pairing can be suboptimal in relax mode; the report says so
        gold = [EntitySpan(0, 2, "ADE"), EntitySpan(1, 3, "ADE")]
        pred = [EntitySpan(1, 2, "ADE"), EntitySpan(0, 1, "ADE")]
        counts = match_entities(gold, pred, "relax")["ADE"]
        assert counts.optimal_tp == best_matching_oracle(gold, pred, "relax")
        assert counts.optimal_tp >= counts.tp

    def test_overlap_any_counting(self):
        gold = [EntitySpan(0, 4, "ADE")]
        pred = [EntitySpan(0, 1, "ADE"), EntitySpan(2, 3, "ADE")]
        counts = overlap_any_counts(gold, pred)["ADE"]
        assert counts == {"matched_pred": 2, "total_pred": 2,
                          "matched_gold": 1, "total_gold": 1}


def random_span_set(rng, max_spans=4, n_tokens=6):
    spans = []
    for _ in range(int(rng.integers(0, max_spans + 1))):
        start = int(rng.integers(0, n_tokens))
        end = int(rng.integers(start + 1, n_tokens + 1))
        spans.append(EntitySpan(start, end, "ADE" if rng.random() < 0.5 else "Drug"))
    return spans


class TestEntityMatchReport:
    def test_report_structure(self):
        report = evaluate_entities(
            [[EntitySpan(0, 2, "ADE")]], [[EntitySpan(0, 2, "ADE")]])
        data = report.to_dict()
        assert data["strict"]["macro"]["f1"] == pytest.approx(0.5)  # Drug contributes 0
        assert data["strict"]["labels"]["ADE"]["f1"] == 1.0
        assert "optimal_tp" in data["relax"]["labels"]["ADE"]
        assert data["relax"]["labels"]["ADE"]["greedy_equals_optimal"]

    def test_micro_single_label_equals_label_f1(self):
        report = EntityMatchReport()
        report.add_document([EntitySpan(0, 1, "ADE"), EntitySpan(2, 3, "ADE")],
                            [EntitySpan(0, 1, "ADE"), EntitySpan(4, 5, "ADE")])
        block = report.block("strict")
        assert block["micro"]["f1"] == pytest.approx(block["labels"]["ADE"]["f1"])


class TestClassificationReport:
    def test_perfect_predictions(self):
        report = classification_report(["ADE", "NEG"], ["ADE", "NEG"])
        assert report["macro"]["f1"] == 1.0 and report["micro"]["f1"] == 1.0

    def test_all_one_class_on_balanced_set(self):
        report = classification_report(["ADE", "NEG", "ADE", "NEG"], ["ADE"] * 4)
        assert report["accuracy"] == 0.5
        assert report["micro"]["f1"] == pytest.approx(0.5)

    def test_hand_built_confusion_case(self):
        # counts: NEG: tp=2, fp=1, fn=1; ADE: tp=2, fp=1, fn=1
        gold = ["NEG", "NEG", "NEG", "ADE", "ADE", "ADE"]
        pred = ["NEG", "NEG", "ADE", "ADE", "ADE", "NEG"]
        report = classification_report(gold, pred)
        for label in ("NEG", "ADE"):
            assert report["labels"][label]["precision"] == pytest.approx(2 / 3)
            assert report["labels"][label]["recall"] == pytest.approx(2 / 3)
        assert report["macro"]["f1"] == pytest.approx(2 / 3)
        assert report["accuracy"] == pytest.approx(4 / 6)

    def test_empty_gold_rejected(self):
        with pytest.raises(EvaluationError):
            classification_report([], [])


class TestCvExperiment:
    def test_two_fold_smoke_and_determinism(self):
        docs, store = separable_classification_corpus(20, seed=0)

        def build():
            return DocumentClassifier(embeddings=store, epochs=5, seed=0)

        report = run_cv_experiment("classify", docs, build, k=2, seed=1)
        assert len(report["folds"]) == 2
        assert "macro_f1" in report["summary"]
        again = run_cv_experiment("classify", docs, build, k=2, seed=1)
        assert report == again

    def test_perfect_synthetic_task_mean_one_stdev_zero(self):
        docs, store = separable_classification_corpus(40, seed=3)

        def build():
            return DocumentClassifier(embeddings=store, epochs=30, seed=0)

        report = run_cv_experiment("classify", docs, build, k=2, seed=0)
        assert report["summary"]["macro_f1"]["mean"] == pytest.approx(1.0)
        assert report["summary"]["macro_f1"]["stdev"] == pytest.approx(0.0)

    def test_folds_never_leak(self):
        docs, store = separable_classification_corpus(30, seed=5)
        from ademiner.corpus import kfold_split

        for split in kfold_split(docs, k=3, seed=2):
            assert not (set(split.train) | set(split.dev)) & set(split.test)

    def test_unknown_task(self):
        docs, store = separable_classification_corpus(10)
        with pytest.raises(ConfigurationError):
            run_cv_experiment("parsing", docs, lambda: None, k=2)

    def test_config_echo_embedded(self):
        docs, store = separable_classification_corpus(20, seed=0)
        report = run_cv_experiment(
            "classify", docs, lambda: DocumentClassifier(embeddings=store, epochs=2, seed=0),
            k=2, seed=1, config_echo={"epochs": 2, "seed": 0})
        assert report["config"] == {"epochs": 2, "seed": 0}


class TestCsvExport:
    def test_csv_mirrors_macro_micro_rows(self, tmp_path):
        from ademiner.evaluation import report_to_csv

        docs, store = separable_classification_corpus(20, seed=0)
        report = run_cv_experiment(
            "classify", docs, lambda: DocumentClassifier(embeddings=store, epochs=2, seed=0),
            k=2, seed=1)
        path = tmp_path / "report.csv"
        report_to_csv(report, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("fold,row,macro_f1,micro_f1")
        assert lines[1].startswith("0,macro,")
        assert lines[2].startswith("0,micro,")
        assert any(l.startswith("summary,mean") for l in lines)
        assert any(l.startswith("summary,stdev") for l in lines)


class TestBenchmarkTiming:
    def test_report_schema(self):
        docs, store = separable_classification_corpus(16, seed=0)
        clf = DocumentClassifier(embeddings=store, epochs=2, seed=0)
        report = benchmark_timing("classify", clf, docs)
        assert set(report) == {"stage", "train_seconds", "infer_seconds", "f1",
                               "hardware", "epochs", "config"}
        assert report["config"]["epochs"] == 2
        assert report["train_seconds"] > 0
        assert report["infer_seconds"] > 0
        assert isinstance(report["hardware"], str) and report["hardware"]

    def test_accuracy_identical_across_runs(self):
        docs, store = separable_classification_corpus(16, seed=1)
        r1 = benchmark_timing("classify", DocumentClassifier(embeddings=store, epochs=3, seed=0), docs)
        r2 = benchmark_timing("classify", DocumentClassifier(embeddings=store, epochs=3, seed=0), docs)
        assert r1["f1"] == r2["f1"]

    def test_empty_corpus_rejected(self):
        _, store = separable_classification_corpus(4)
        with pytest.raises(ConfigurationError):
            benchmark_timing("classify", DocumentClassifier(embeddings=store), [])
