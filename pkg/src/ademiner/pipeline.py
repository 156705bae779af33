"""End-to-end pipeline: classify -> gate -> tag entities -> pair -> relate.

Documents classified NEG stop at the gate: they leave the pipeline with no
entities and no relations. Batch execution preserves input order and
produces byte-identical output for any worker count; workers are forked
processes so CPU-bound inference actually parallelizes.
"""

from __future__ import annotations

import itertools
import json
import logging
import multiprocessing
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ademiner.bundle import estimator_from_bundle, load_bundle
from ademiner.corpus import Document, generate_relation_candidates
from ademiner.errors import ConfigurationError, DataFormatError
from ademiner.tokenization import tokenize

logger = logging.getLogger(__name__)

DEFAULT_FLUSH_EVERY = 64


@dataclass
class Pipeline:
    """Composed stages sharing one embedding store."""

    embeddings: object
    ner: object
    re: object = None
    classifier: object = None

    def __post_init__(self):
        # dimension mismatches fail here, never mid-stream
        if self.embeddings is None:
            raise ConfigurationError("pipeline needs an embedding store")
        store_dim = self.embeddings.dim
        if self.classifier is not None:
            if self.classifier.input_dim_ != store_dim:
                raise ConfigurationError(
                    f"classifier was trained with embedding dim {self.classifier.input_dim_}, "
                    f"store provides {store_dim}")
            self.classifier.embeddings = self.embeddings
        if self.ner is None:
            raise ConfigurationError("pipeline needs a ner stage")
        if self.ner.input_word_dim_ != store_dim:
            raise ConfigurationError(
                f"ner stage was trained with embedding dim {self.ner.input_word_dim_}, "
                f"store provides {store_dim}")
        self.ner.embeddings = self.embeddings
        if self.re is not None:
            from ademiner.relations import feature_length
            expected = feature_length(store_dim, self.re.declared_length)
            if self.re.input_dim_ != expected:
                raise ConfigurationError(
                    f"relation stage expects features of length {self.re.input_dim_}, "
                    f"store dim {store_dim} yields {expected}")
            self.re.embeddings = self.embeddings

    def run(self, doc):
        """PipelineOutput dict for one document."""
        output = {"doc_id": doc.doc_id, "class": None, "entities": [], "relations": []}
        if self.classifier is not None:
            label, probs = self.classifier.classify(doc)
            output["class"] = {"label": label, "probability": round(float(probs.max()), 6)}
            if label == "NEG":
                return output  # gate: no further processing
        if not doc.tokens:
            return output
        spans = self.ner.predict([doc])[0]
        output["entities"] = [
            {"text": doc.span_text(s), "start": s.start, "end": s.end, "label": s.label}
            for s in spans
        ]
        if self.re is None:
            return output
        candidates = generate_relation_candidates(doc, spans=spans)
        if candidates:
            probs = self.re.predict_proba(candidates, documents={doc.doc_id: doc})
            for cand, p in zip(candidates, probs):
                label = self.re.classes_[int(p.argmax())]
                output["relations"].append({
                    "ade": doc.span_text(cand.ade),
                    "drug": doc.span_text(cand.drug),
                    "ade_span": [cand.ade.start, cand.ade.end],
                    "drug_span": [cand.drug.start, cand.drug.end],
                    "label": label,
                    "probability": round(float(p.max()), 6),
                })
        return output


def load_pipeline(manifest_path, embeddings):
    """Pipeline manifest: JSON with stage-name -> bundle-path entries."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    stages = {}
    for name in ("classifier", "ner", "re"):
        rel = manifest.get("stages", {}).get(name)
        if rel is None:
            stages[name] = None
            continue
        bundle = load_bundle(manifest_path.parent / rel)
        if bundle.stage != name:
            raise ConfigurationError(
                f"pipeline manifest lists {rel} as the {name} stage, "
                f"but the bundle contains a {bundle.stage} model")
        stages[name] = estimator_from_bundle(bundle, embeddings=embeddings)
    if stages["ner"] is None:
        raise ConfigurationError("pipeline manifest must reference at least a ner bundle")
    return Pipeline(embeddings=embeddings, classifier=stages["classifier"],
                    ner=stages["ner"], re=stages["re"])


def save_pipeline_manifest(path, ner, classifier=None, re=None):
    manifest = {"format_version": 1, "stages": {"ner": str(ner)}}
    if classifier is not None:
        manifest["stages"]["classifier"] = str(classifier)
    if re is not None:
        manifest["stages"]["re"] = str(re)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# batch / stream execution


def parse_input_line(line, line_no):
    """JSONL input record -> Document; raises DataFormatError on bad lines."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", line=line_no)
    if not isinstance(record, dict) or not isinstance(record.get("text"), str):
        raise DataFormatError("record must be an object with a string 'text' field",
                              line=line_no)
    return Document(
        doc_id=str(record.get("doc_id", f"line{line_no}")),
        tokens=tokenize(record["text"]),
        text=record["text"],
        dep_heads=list(record["dep_heads"]) if record.get("dep_heads") is not None else None,
    )


_WORKER_PIPELINE = None


def _init_worker(pipeline):
    global _WORKER_PIPELINE
    _WORKER_PIPELINE = pipeline


def _process_line(item):
    line_no, line = item
    try:
        doc = parse_input_line(line, line_no)
        result = _WORKER_PIPELINE.run(doc)
    except Exception as exc:  # error records keep the stream going
        return json.dumps({"error": str(exc), "line": line_no, "raw": line.rstrip("\n")},
                          sort_keys=True), True
    return json.dumps(result, sort_keys=True), False


def run_batch(pipeline, lines, workers=1, first_line=1):
    """Process an iterable of JSONL lines; yields (output_line, is_error).

    Output order equals input order for every worker count; failed lines
    become error records (carrying the original line number and raw text)
    and processing continues.
    """
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    items = [(i, line) for i, line in enumerate(lines, start=first_line) if line.strip()]
    if workers == 1 or len(items) < 2 * workers:
        _init_worker(pipeline)
        yield from map(_process_line, items)
        return
    context = multiprocessing.get_context("fork")
    chunk = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers, mp_context=context,
                             initializer=_init_worker, initargs=(pipeline,)) as pool:
        yield from pool.map(_process_line, items, chunksize=chunk)


def run_batch_file(pipeline, input_path, output_path, workers=1, window=4096):
    """File-to-file batch run with bounded memory; returns the error count."""
    errors = 0
    consumed = 0
    with Path(input_path).open("r", encoding="utf-8") as src, \
            Path(output_path).open("w", encoding="utf-8") as dst:
        while True:
            chunk = list(itertools.islice(src, window))
            if not chunk:
                break
            for line, is_error in run_batch(pipeline, chunk, workers=workers,
                                            first_line=consumed + 1):
                dst.write(line + "\n")
                errors += int(is_error)
            consumed += len(chunk)
    if errors:
        logger.warning("%s: %d input lines produced error records", input_path, errors)
    return errors


def run_stream(pipeline, source=None, sink=None, workers=1, flush_every=DEFAULT_FLUSH_EVERY):
    """Line-delimited stdin -> stdout processing with bounded memory.

    Records are processed in micro-batches of ``flush_every`` (1 flushes
    after every record); one output line per input line, order preserved.
    Returns the number of error records.
    """
    source = source if source is not None else sys.stdin
    sink = sink if sink is not None else sys.stdout
    if flush_every < 1:
        raise ConfigurationError(f"flush_every must be >= 1, got {flush_every}")
    errors = 0
    batch = []
    line_no = 0

    def emit(batch_lines):
        nonlocal errors
        first = line_no - len(batch_lines) + 1
        for out, is_error in run_batch(pipeline, batch_lines, workers=workers,
                                       first_line=first):
            sink.write(out + "\n")
            errors += int(is_error)
        sink.flush()

    for raw in source:
        line_no += 1
        batch.append(raw)
        if len(batch) >= flush_every:
            emit(batch)
            batch = []
    if batch:
        emit(batch)
    return errors
