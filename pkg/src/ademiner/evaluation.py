"""Entity, classification, and relation scoring plus the CV and timing drivers.

Strict matching requires identical boundaries and label; relax matching
accepts any overlap with the same label. Pairing is one-to-one and greedy
in textual order, and relax reports also carry the optimal-assignment TP
count so greedy-vs-optimal divergence is visible. The O tag never enters
any count.
"""

from __future__ import annotations

import json
import logging
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from ademiner.corpus import CLASS_LABELS, ENTITY_LABELS, RELATION_LABELS, kfold_split
from ademiner.errors import ConfigurationError, EvaluationError, SpanError

logger = logging.getLogger(__name__)


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    optimal_tp: int = 0

    def add(self, other):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.optimal_tp += other.optimal_tp


def prf(tp, fp, fn):
    """Precision, recall, F1 with the zero-denominator -> 0 convention."""
    if min(tp, fp, fn) < 0:
        raise EvaluationError(f"negative counts: tp={tp} fp={fp} fn={fn}")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def aggregate(per_label_counts, mode="macro"):
    """Macro: unweighted mean of per-label P/R/F1. Micro: P/R/F1 of pooled counts."""
    if not per_label_counts:
        raise EvaluationError("aggregate needs at least one label")
    if mode == "macro":
        scores = [prf(c.tp, c.fp, c.fn) for c in per_label_counts.values()]
        n = len(scores)
        return tuple(sum(s[i] for s in scores) / n for i in range(3))
    if mode == "micro":
        tp = sum(c.tp for c in per_label_counts.values())
        fp = sum(c.fp for c in per_label_counts.values())
        fn = sum(c.fn for c in per_label_counts.values())
        return prf(tp, fp, fn)
    raise ConfigurationError(f"unknown aggregation mode {mode!r}")


def _spans_match(gold, pred, mode):
    if gold.label != pred.label:
        return False
    if mode == "strict":
        return gold.start == pred.start and gold.end == pred.end
    return gold.overlaps(pred)


def _optimal_matching(gold, pred, mode):
    """Maximum bipartite matching size via augmenting paths (small sets)."""
    match_of_pred = [-1] * len(pred)

    def try_assign(gi, visited):
        for pi in range(len(pred)):
            if visited[pi] or not _spans_match(gold[gi], pred[pi], mode):
                continue
            visited[pi] = True
            if match_of_pred[pi] == -1 or try_assign(match_of_pred[pi], visited):
                match_of_pred[pi] = gi
                return True
        return False

    size = 0
    for gi in range(len(gold)):
        if try_assign(gi, [False] * len(pred)):
            size += 1
    return size


def match_entities(gold, pred, mode="strict"):
    """Per-label TP/FP/FN under one matching mode.

    Each gold and each predicted span takes part in at most one match;
    pairing is greedy over predictions in textual order against the first
    available gold span.
    """
    if mode not in ("strict", "relax"):
        raise ConfigurationError(f"unknown matching mode {mode!r}")
    for span in list(gold) + list(pred):
        if span.start >= span.end:
            raise SpanError(f"malformed span {span}")
    counts = {label: MatchCounts() for label in ENTITY_LABELS}
    for label in ENTITY_LABELS:
        gold_l = sorted(s for s in gold if s.label == label)
        pred_l = sorted(s for s in pred if s.label == label)
        taken = [False] * len(gold_l)
        tp = 0
        for p in pred_l:
            for gi, g in enumerate(gold_l):
                if not taken[gi] and _spans_match(g, p, mode):
                    taken[gi] = True
                    tp += 1
                    break
        counts[label].tp = tp
        counts[label].fp = len(pred_l) - tp
        counts[label].fn = len(gold_l) - tp
        counts[label].optimal_tp = _optimal_matching(gold_l, pred_l, mode)
    return counts


def overlap_any_counts(gold, pred):
    """Sensitivity-analysis alternative: many-to-many overlap counting.

    Returns per-label counts of predictions touching any gold span and of
    gold spans touched by any prediction.
    """
    out = {}
    for label in ENTITY_LABELS:
        gold_l = [s for s in gold if s.label == label]
        pred_l = [s for s in pred if s.label == label]
        matched_pred = sum(1 for p in pred_l if any(g.overlaps(p) for g in gold_l))
        matched_gold = sum(1 for g in gold_l if any(p.overlaps(g) for p in pred_l))
        out[label] = {
            "matched_pred": matched_pred,
            "total_pred": len(pred_l),
            "matched_gold": matched_gold,
            "total_gold": len(gold_l),
        }
    return out


@dataclass
class EntityMatchReport:
    """Accumulated strict and relax counts over a corpus."""

    strict: dict = field(default_factory=lambda: {l: MatchCounts() for l in ENTITY_LABELS})
    relax: dict = field(default_factory=lambda: {l: MatchCounts() for l in ENTITY_LABELS})

    def add_document(self, gold, pred):
        for label, c in match_entities(gold, pred, "strict").items():
            self.strict[label].add(c)
        for label, c in match_entities(gold, pred, "relax").items():
            self.relax[label].add(c)

    def block(self, mode):
        counts = self.strict if mode == "strict" else self.relax
        per_label = {}
        for label, c in counts.items():
            p, r, f = prf(c.tp, c.fp, c.fn)
            per_label[label] = {
                "tp": c.tp, "fp": c.fp, "fn": c.fn,
                "precision": p, "recall": r, "f1": f,
            }
            if mode == "relax":
                per_label[label]["optimal_tp"] = c.optimal_tp
                per_label[label]["greedy_equals_optimal"] = c.optimal_tp == c.tp
        macro = aggregate(counts, "macro")
        micro = aggregate(counts, "micro")
        return {
            "labels": per_label,
            "macro": dict(zip(("precision", "recall", "f1"), macro)),
            "micro": dict(zip(("precision", "recall", "f1"), micro)),
        }

    def to_dict(self):
        return {"strict": self.block("strict"), "relax": self.block("relax")}


def evaluate_entities(gold_spans_per_doc, pred_spans_per_doc):
    report = EntityMatchReport()
    for gold, pred in zip(gold_spans_per_doc, pred_spans_per_doc):
        report.add_document(gold, pred)
    return report


def classification_counts(gold_labels, pred_labels, labels=CLASS_LABELS):
    counts = {label: MatchCounts() for label in labels}
    for g, p in zip(gold_labels, pred_labels):
        if g == p:
            counts[g].tp += 1
        else:
            counts[p].fp += 1
            counts[g].fn += 1
    return counts


def classification_report(gold_labels, pred_labels, labels=CLASS_LABELS):
    if not gold_labels:
        raise EvaluationError("no gold labels to evaluate against")
    counts = classification_counts(gold_labels, pred_labels, labels)
    per_label = {}
    for label, c in counts.items():
        p, r, f = prf(c.tp, c.fp, c.fn)
        per_label[label] = {"tp": c.tp, "fp": c.fp, "fn": c.fn,
                            "precision": p, "recall": r, "f1": f}
    return {
        "labels": per_label,
        "macro": dict(zip(("precision", "recall", "f1"), aggregate(counts, "macro"))),
        "micro": dict(zip(("precision", "recall", "f1"), aggregate(counts, "micro"))),
        "accuracy": sum(1 for g, p in zip(gold_labels, pred_labels) if g == p) / len(gold_labels),
    }


def relation_report(gold_labels, pred_labels):
    return classification_report(gold_labels, pred_labels, labels=RELATION_LABELS)


# ---------------------------------------------------------------------------
# cross-validation driver


def _population_stdev(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.std())  # population stdev, ddof=0


def run_cv_experiment(task, documents, build_estimator, k=10, seed=0, config_echo=None):
    """Train/evaluate over k folds and report per-fold plus mean +/- stdev.

    ``build_estimator`` makes a fresh unfitted estimator per fold. The dev
    split carved from each fold's training portion drives the estimator's
    checkpoint rule; nothing else is tuned.
    """
    if task not in ("classify", "ner", "re"):
        raise ConfigurationError(f"unknown task {task!r}")
    splits = kfold_split(documents, k=k, seed=seed)
    folds = []
    for fold_idx, split in enumerate(splits):
        train = [documents[i] for i in split.train]
        dev = [documents[i] for i in split.dev]
        test = [documents[i] for i in split.test]
        estimator = build_estimator()
        try:
            metrics = _run_fold(task, estimator, train, dev, test)
        except Exception as exc:
            raise type(exc)(f"fold {fold_idx}: {exc}") from exc
        folds.append({"fold": fold_idx, "sizes": {"train": len(train), "dev": len(dev),
                                                  "test": len(test)}, "metrics": metrics})
    summary = _summarize_folds(task, folds)
    return {
        "task": task,
        "k": k,
        "seed": seed,
        "config": config_echo or {},
        "folds": folds,
        "summary": summary,
    }


def _run_fold(task, estimator, train, dev, test):
    if task == "classify":
        estimator.fit(train, dev_docs=dev or None)
        predicted = estimator.predict(test)
        return classification_report([d.gold_class for d in test], predicted)
    if task == "ner":
        estimator.fit(train, dev_docs=dev or None)
        predicted = estimator.predict(test)
        return evaluate_entities([d.gold_spans for d in test], predicted).to_dict()
    from ademiner.corpus import labeled_candidates
    train_c = [c for d in train for c in labeled_candidates(d)]
    dev_c = [c for d in dev for c in labeled_candidates(d)]
    test_c = [c for d in test for c in labeled_candidates(d)]
    doc_index = {d.doc_id: d for d in train + dev + test}
    estimator.fit(train_c, documents=doc_index, dev_candidates=dev_c or None)
    predicted = estimator.predict(test_c, documents=doc_index)
    return relation_report([c.label for c in test_c], predicted)


def _metric_paths(task):
    if task == "ner":
        return {
            "strict_macro_f1": ("strict", "macro", "f1"),
            "strict_micro_f1": ("strict", "micro", "f1"),
            "relax_macro_f1": ("relax", "macro", "f1"),
            "relax_micro_f1": ("relax", "micro", "f1"),
        }
    return {"macro_f1": ("macro", "f1"), "micro_f1": ("micro", "f1")}


def _summarize_folds(task, folds):
    summary = {}
    for name, path in _metric_paths(task).items():
        values = []
        for fold in folds:
            node = fold["metrics"]
            for key in path:
                node = node[key]
            values.append(node)
        summary[name] = {"mean": float(np.mean(values)), "stdev": _population_stdev(values)}
    return summary


# ---------------------------------------------------------------------------
# timing harness


def hardware_descriptor():
    cpu = platform.processor() or platform.machine()
    return f"{os.cpu_count()}-core {cpu} ({platform.system().lower()})"


def benchmark_timing(stage, estimator, train_docs, eval_docs=None, **fit_kwargs):
    """Wall-clock train and full-inference timings, plus the resulting F1.

    The epoch count comes from the estimator's configuration and is held
    constant across runs. F1 is strict macro for NER and macro for the
    classifier/relation stages.
    """
    if not train_docs:
        raise ConfigurationError("benchmark needs a non-empty corpus")
    eval_docs = eval_docs if eval_docs is not None else train_docs
    start = time.perf_counter()
    estimator.fit(train_docs, **fit_kwargs)
    train_seconds = time.perf_counter() - start

    start = time.perf_counter()
    predicted = estimator.predict(eval_docs, **{k: v for k, v in fit_kwargs.items()
                                                if k == "documents"})
    infer_seconds = time.perf_counter() - start

    if stage == "ner":
        f1 = evaluate_entities([d.gold_spans for d in eval_docs], predicted).block("strict")["macro"]["f1"]
    elif stage == "classify":
        f1 = classification_report([d.gold_class for d in eval_docs], predicted)["macro"]["f1"]
    elif stage == "re":
        f1 = relation_report([c.label for c in eval_docs], predicted)["macro"]["f1"]
    else:
        raise ConfigurationError(f"unknown stage {stage!r}")
    config_echo = {k: v for k, v in estimator.get_params().items() if k != "embeddings"} \
        if hasattr(estimator, "get_params") else {}
    return {
        "stage": stage,
        "train_seconds": train_seconds,
        "infer_seconds": infer_seconds,
        "f1": f1,
        "hardware": hardware_descriptor(),
        "epochs": getattr(estimator, "epochs", None),
        "config": config_echo,
    }


def report_to_csv(report, path):
    """Mirror the two-row (macro / micro) layout per fold into a CSV file."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        names = list(_metric_paths(report["task"]).keys())
        writer.writerow(["fold", "row"] + names)
        for fold in report["folds"]:
            for row in ("macro", "micro"):
                values = []
                for name, path_keys in _metric_paths(report["task"]).items():
                    node = fold["metrics"]
                    for key in path_keys:
                        node = node[key]
                    values.append(f"{node:.4f}" if row in name or row in path_keys else "")
                writer.writerow([fold["fold"], row] + values)
        writer.writerow([])
        writer.writerow(["summary", "mean"] +
                        [f"{report['summary'][n]['mean']:.4f}" for n in names])
        writer.writerow(["summary", "stdev"] +
                        [f"{report['summary'][n]['stdev']:.4f}" for n in names])


def report_to_json(report, path=None):
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    return text
