"""Command-line interface: train, eval, predict, benchmark, stats.

Exit codes: 0 success, 1 runtime failure (diagnostic on stderr), 2 usage
error. Config files are key=value lines using the hyperparameter names
(dropout_rate, batch_size, learning_rate, epochs, po, lstm_state_size).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ademiner.errors import AdeMinerError, ConfigurationError

logger = logging.getLogger(__name__)

CONFIG_KEY_ALIASES = {
    "epoch": "epochs",
    "po": "decay_po",
    "learning_rate_decay": "decay_po",
    "lstm_state_size": "lstm_size",
}
INT_KEYS = {"epochs", "batch_size", "seed", "lstm_size", "char_dim", "char_filters",
            "char_kernel", "context_window", "declared_length"}
FLOAT_KEYS = {"learning_rate", "decay_po", "dropout_rate", "leaky_slope"}


def parse_config_file(path):
    """key=value lines -> typed dict; # starts a comment."""
    values = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = CONFIG_KEY_ALIASES.get(key, key)
        if key in INT_KEYS:
            values[key] = int(value)
        elif key in FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def _collect_config(args, allowed):
    config = {}
    if getattr(args, "config", None):
        for key, value in parse_config_file(args.config).items():
            if key not in allowed:
                raise ConfigurationError(f"config key {key!r} does not apply to this stage")
            config[key] = value
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        config["epochs"] = args.epochs
    return config


def _load_store(args):
    from ademiner.embeddings import load_cache, load_vectors

    path = Path(args.embeddings)
    if path.suffix == ".bin":
        return load_cache(path)
    return load_vectors(path, oov_policy=getattr(args, "oov_policy", "zeros"))


def _load_docs(args):
    from ademiner.corpus import read_conll, read_jsonl_docs

    if (args.conll is None) == (args.jsonl is None):
        raise ConfigurationError("provide exactly one of --conll or --jsonl")
    return read_conll(args.conll) if args.conll else read_jsonl_docs(args.jsonl)


def _load_dev_docs(args):
    from ademiner.corpus import read_conll, read_jsonl_docs

    if getattr(args, "dev_conll", None):
        return read_conll(args.dev_conll)
    if getattr(args, "dev_jsonl", None):
        return read_jsonl_docs(args.dev_jsonl)
    return None


CLASSIFIER_KEYS = {"learning_rate", "decay_po", "batch_size", "epochs", "dropout_rate",
                   "leaky_slope", "seed"}
NER_KEYS = CLASSIFIER_KEYS | {"lstm_size", "char_dim", "char_filters", "char_kernel"}
RE_KEYS = CLASSIFIER_KEYS | {"context_window", "declared_length"}


def _build_estimator(stage, store, config):
    from ademiner.classifier import DocumentClassifier
    from ademiner.ner import NerTagger
    from ademiner.relations import RelationClassifier

    if stage == "classifier":
        return DocumentClassifier(embeddings=store, **config)
    if stage == "ner":
        return NerTagger(embeddings=store, **config)
    return RelationClassifier(embeddings=store, **config)


def cmd_train(args):
    from ademiner.bundle import save_estimator
    from ademiner.corpus import labeled_candidates

    store = _load_store(args)
    allowed = {"classifier": CLASSIFIER_KEYS, "ner": NER_KEYS, "re": RE_KEYS}[args.stage]
    config = _collect_config(args, allowed)
    estimator = _build_estimator(args.stage, store, config)
    docs = _load_docs(args)
    dev = _load_dev_docs(args)
    if args.stage == "re":
        index = {d.doc_id: d for d in docs}
        candidates = [c for d in docs for c in labeled_candidates(d)]
        dev_candidates = None
        if dev:
            index.update({d.doc_id: d for d in dev})
            dev_candidates = [c for d in dev for c in labeled_candidates(d)]
        estimator.fit(candidates, documents=index, dev_candidates=dev_candidates)
    else:
        estimator.fit(docs, dev_docs=dev)
    save_estimator(estimator, args.out)
    echo = {k: v for k, v in estimator.get_params().items() if k != "embeddings"}
    print(json.dumps({"stage": args.stage, "bundle": str(args.out),
                      "trained_on": len(docs), "config": echo}, sort_keys=True))
    return 0


def cmd_eval(args):
    from ademiner.bundle import load_estimator
    from ademiner.corpus import labeled_candidates
    from ademiner.evaluation import (
        evaluate_entities,
        relation_report,
        report_to_json,
        run_cv_experiment,
    )

    store = _load_store(args)
    docs = _load_docs(args)
    modes = [m.strip() for m in args.mode.split(",")] if args.mode else ["strict", "relax"]
    for mode in modes:
        if mode not in ("strict", "relax"):
            raise ConfigurationError(f"unknown evaluation mode {mode!r}")

    if args.cv:
        allowed = {"classifier": CLASSIFIER_KEYS, "ner": NER_KEYS, "re": RE_KEYS}[args.stage]
        config = _collect_config(args, allowed)
        task = {"classifier": "classify", "ner": "ner", "re": "re"}[args.stage]
        report = run_cv_experiment(
            task, docs, lambda: _build_estimator(args.stage, store, config),
            k=args.cv, seed=args.seed or 0, config_echo=config)
    elif args.bundle:
        estimator = load_estimator(args.bundle, embeddings=store)
        echo = {k: v for k, v in estimator.get_params().items() if k != "embeddings"}
        if args.stage == "classifier":
            report = estimator.evaluate(docs)
        elif args.stage == "ner":
            predictions = estimator.predict(docs)
            full = evaluate_entities([d.gold_spans for d in docs], predictions)
            report = {mode: full.block(mode) for mode in modes}
            if args.predictions:
                _write_predictions(docs, predictions, args.predictions)
        else:
            index = {d.doc_id: d for d in docs}
            candidates = [c for d in docs for c in labeled_candidates(d)]
            predicted = estimator.predict(candidates, documents=index)
            report = relation_report([c.label for c in candidates], predicted)
        report["config"] = echo
    else:
        raise ConfigurationError("eval needs either --bundle or --cv K")

    text = report_to_json(report, args.report)
    print(text)
    return 0


def _write_predictions(docs, predictions, path):
    """Emit predicted spans in CoNLL form (or JSONL for a .jsonl path)."""
    from ademiner.corpus import Document, write_conll

    path = Path(path)
    if path.suffix == ".jsonl":
        with path.open("w", encoding="utf-8") as handle:
            for doc, spans in zip(docs, predictions):
                handle.write(json.dumps({
                    "doc_id": doc.doc_id,
                    "spans": [[s.start, s.end, s.label] for s in spans],
                }, sort_keys=True) + "\n")
        return
    tagged = [
        Document(doc_id=d.doc_id, tokens=d.tokens, text=d.text, gold_spans=spans)
        for d, spans in zip(docs, predictions)
    ]
    write_conll(tagged, path)


def cmd_predict(args):
    from ademiner.pipeline import load_pipeline, run_batch_file, run_stream

    store = _load_store(args)
    pipeline = load_pipeline(args.pipeline, embeddings=store)
    if args.stream:
        errors = run_stream(pipeline, workers=args.workers,
                            flush_every=1 if args.flush_each else args.flush_every)
    else:
        errors = run_batch_file(pipeline, args.input, args.output, workers=args.workers)
        print(json.dumps({"input": str(args.input), "output": str(args.output),
                          "errors": errors}, sort_keys=True))
    return 1 if errors else 0


def cmd_benchmark(args):
    from ademiner.corpus import labeled_candidates
    from ademiner.evaluation import benchmark_timing

    store = _load_store(args)
    allowed = {"classifier": CLASSIFIER_KEYS, "ner": NER_KEYS, "re": RE_KEYS}[args.stage]
    config = _collect_config(args, allowed)
    estimator = _build_estimator(args.stage, store, config)
    docs = _load_docs(args)
    stage = {"classifier": "classify", "ner": "ner", "re": "re"}[args.stage]
    if args.stage == "re":
        index = {d.doc_id: d for d in docs}
        candidates = [c for d in docs for c in labeled_candidates(d)]
        report = benchmark_timing(stage, estimator, candidates, documents=index)
    else:
        report = benchmark_timing(stage, estimator, docs)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_stats(args):
    from ademiner.corpus import corpus_stats

    docs = _load_docs(args)
    print(json.dumps(corpus_stats(docs).to_dict(), indent=2, sort_keys=True))
    return 0


def _add_data_arguments(parser, dev=False):
    parser.add_argument("--conll", type=Path, help="CoNLL file (token TAB tag)")
    parser.add_argument("--jsonl", type=Path, help="JSONL document file")
    if dev:
        parser.add_argument("--dev-conll", type=Path, help="development set, CoNLL")
        parser.add_argument("--dev-jsonl", type=Path, help="development set, JSONL")


def _add_common_arguments(parser, config=True):
    parser.add_argument("--embeddings", type=Path, required=True,
                        help="word vector file (text format, or .bin cache)")
    parser.add_argument("--oov-policy", choices=("zeros", "hashed-bucket"),
                        default="zeros", help="vector for out-of-vocabulary tokens")
    parser.add_argument("--seed", type=int, default=None)
    if config:
        parser.add_argument("--config", type=Path,
                            help="key=value hyperparameter file")
        parser.add_argument("--epochs", type=int, default=None,
                            help="override the epoch count")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ademiner",
        description="Adverse drug event mining: classification, NER, relation extraction.")
    parser.add_argument("--verbose", action="store_true", help="INFO-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one stage and write a model bundle")
    train.add_argument("stage", choices=("classifier", "ner", "re"))
    _add_data_arguments(train, dev=True)
    _add_common_arguments(train)
    train.add_argument("--out", type=Path, required=True, help="bundle output path")
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a bundle or run cross-validation")
    evaluate.add_argument("stage", choices=("classifier", "ner", "re"))
    _add_data_arguments(evaluate)
    _add_common_arguments(evaluate)
    evaluate.add_argument("--bundle", type=Path, help="trained model bundle")
    evaluate.add_argument("--cv", type=int, default=None, metavar="K",
                          help="run K-fold cross-validation instead")
    evaluate.add_argument("--mode", default=None,
                          help="entity matching modes, e.g. strict,relax")
    evaluate.add_argument("--report", type=Path, help="write the JSON report here too")
    evaluate.add_argument("--predictions", type=Path,
                          help="ner only: write predicted spans (CoNLL, or .jsonl)")
    evaluate.set_defaults(func=cmd_eval)

    predict = sub.add_parser("predict", help="run the full pipeline on JSONL documents")
    predict.add_argument("--pipeline", type=Path, required=True,
                         help="pipeline manifest referencing stage bundles")
    _add_common_arguments(predict, config=False)
    predict.add_argument("--input", type=Path, help="input JSONL (batch mode)")
    predict.add_argument("--output", type=Path, help="output JSONL (batch mode)")
    predict.add_argument("--stream", action="store_true",
                         help="read stdin, write stdout, line for line")
    predict.add_argument("--workers", type=int, default=1)
    predict.add_argument("--flush-every", type=int, default=64,
                         help="stream micro-batch size")
    predict.add_argument("--flush-each", action="store_true",
                         help="flush after every record (latency over throughput)")
    predict.set_defaults(func=cmd_predict)

    benchmark = sub.add_parser("benchmark", help="wall-clock train/infer timing report")
    benchmark.add_argument("--stage", choices=("classifier", "ner", "re"), required=True)
    _add_data_arguments(benchmark)
    _add_common_arguments(benchmark)
    benchmark.add_argument("--report", type=Path, help="write the JSON report here too")
    benchmark.set_defaults(func=cmd_benchmark)

    stats = sub.add_parser("stats", help="corpus statistics as JSON")
    _add_data_arguments(stats)
    stats.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "predict":
        if args.stream and (args.input or args.output):
            parser.error("--stream conflicts with --input/--output")
        if not args.stream and not (args.input and args.output):
            parser.error("batch mode needs both --input and --output")
    try:
        return args.func(args)
    except AdeMinerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
