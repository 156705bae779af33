"""Synthetic corpora and embedding stores shared across the test suite."""

import numpy as np

from ademiner.corpus import Document, EntitySpan, RelationCandidate
from ademiner.embeddings import EmbeddingStore
from ademiner.tokenization import tokenize


def doc_from_text(text, doc_id="d", **kwargs):
    return Document(doc_id=doc_id, tokens=tokenize(text), text=text, **kwargs)


def clustered_store(dim=8, seed=0, n_per_cluster=30):
    """Two well-separated token clusters plus neutral filler tokens.

    pos/neg cluster tokens sit at opposite ends of the first axis; filler
    tokens are small-noise vectors near the origin.
    """
    rng = np.random.default_rng(seed)
    vocab = {}
    rows = []

    def add(token, center):
        vocab[token] = len(rows)
        rows.append((center + rng.normal(scale=0.05, size=dim)).astype(np.float32))

    pos_center = np.zeros(dim)
    pos_center[0] = 3.0
    neg_center = np.zeros(dim)
    neg_center[0] = -3.0
    for i in range(n_per_cluster):
        add(f"sympt{i}", pos_center)
        add(f"calm{i}", neg_center)
        add(f"fill{i}", np.zeros(dim))
    return EmbeddingStore(dim, vocab, np.stack(rows))


def separable_classification_corpus(n_docs=40, seed=0):
    """Documents whose mean embeddings form two linearly separable clusters."""
    rng = np.random.default_rng(seed)
    store = clustered_store(seed=seed + 1)
    docs = []
    for i in range(n_docs):
        label = "ADE" if i % 2 == 0 else "NEG"
        family = "sympt" if label == "ADE" else "calm"
        words = [f"{family}{rng.integers(0, 30)}" for _ in range(4)]
        words += [f"fill{rng.integers(0, 30)}" for _ in range(3)]
        rng.shuffle(words)
        docs.append(doc_from_text(" ".join(words), doc_id=f"cls{i}", gold_class=label))
    return docs, store


def ner_template_store(dim=16, seed=0, n_drugs=20, n_ades=20):
    """Per-token vectors with a strong drug/reaction/verb cluster structure."""
    rng = np.random.default_rng(seed)
    vocab = {}
    rows = []

    def add(token, axis):
        center = np.zeros(dim)
        center[axis] = 2.5
        vocab[token] = len(rows)
        rows.append((center + rng.normal(scale=0.1, size=dim)).astype(np.float32))

    for i in range(n_drugs):
        add(f"drugname{i}", axis=0)
    for i in range(n_ades):
        add(f"reaction{i}", axis=1)
    add("caused", axis=2)
    add("after", axis=3)
    add("taking", axis=3)
    return EmbeddingStore(dim, vocab, np.stack(rows))


def ner_template_corpus(n_docs=20, seed=0):
    """Template sentences "DRUG caused REACTION" with unique entity tokens."""
    store = ner_template_store(seed=seed)
    docs = []
    for i in range(n_docs):
        text = f"drugname{i} caused reaction{i}"
        docs.append(doc_from_text(
            text, doc_id=f"ner{i}",
            gold_spans=[EntitySpan(0, 1, "Drug"), EntitySpan(2, 3, "ADE")]))
    return docs, store


def distance_relation_corpus(n_docs=40, seed=0, threshold=5):
    """Candidates whose label is decided purely by token distance.

    Every document has one reaction and two drugs: one within ``threshold``
    tokens (Positive) and one beyond it (Negative).
    """
    rng = np.random.default_rng(seed)
    store = ner_template_store(seed=seed)
    docs, candidates = [], []
    for i in range(n_docs):
        near = int(rng.integers(1, threshold))
        far = int(rng.integers(threshold + 1, 10))
        words = [f"reaction{rng.integers(0, 20)}"] + ["after"] * 10
        near_drug = f"drugname{rng.integers(0, 20)}"
        far_drug = f"drugname{rng.integers(0, 20)}"
        words[near] = near_drug
        words[far] = far_drug
        doc = doc_from_text(" ".join(words), doc_id=f"re{i}")
        ade = EntitySpan(0, 1, "ADE")
        docs.append(doc)
        candidates.append(RelationCandidate(ade, EntitySpan(near, near + 1, "Drug"),
                                            doc.doc_id, "Positive"))
        candidates.append(RelationCandidate(ade, EntitySpan(far, far + 1, "Drug"),
                                            doc.doc_id, "Negative"))
    return docs, candidates, store


def doc_index(docs):
    return {d.doc_id: d for d in docs}


# ---------------------------------------------------------------------------
# end-to-end fixtures: one store shared by all three stages

DRUGS = ["insulin", "advil", "fluvastatin", "lipitor", "aspirin", "metformin",
         "ibuprofen", "statin", "prozac", "zoloft"]
SYMPTOMS = ["drowsy", "cramps", "hives", "nausea", "headaches", "dizzy", "rash",
            "fatigue", "vomiting", "insomnia"]
MULTI_SYMPTOM_HEADS = ["blurred", "stomach", "chest"]
MULTI_SYMPTOM_TAILS = ["vision", "pain", "tightness"]
NEGATION = ["haven't", "no", "any", "fine", "ok", "suits", "helped", "without"]
FILLER = ["I", "feel", "a", "bit", "&", "have", "little", "after", "taking", "me",
          "gave", "took", "just", "and", "had", "so", "far", "but", "@yho",
          "gastric", "problems", "my", "the", "today", "works", "for"]


def write_store_as_text(store, path):
    """Serialize a store back to the loadable text vector format."""
    inverse = sorted(store.vocab.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as handle:
        for token, idx in inverse:
            values = " ".join(repr(float(v)) for v in store.matrix[idx])
            handle.write(f"{token} {values}\n")
    return path


def shared_store(dim=12, seed=0):
    """One embedding store whose clusters make all three stages learnable."""
    rng = np.random.default_rng(seed)
    vocab = {}
    rows = []

    def add(token, axis, strength=2.5):
        center = np.zeros(dim)
        if axis is not None:
            center[axis] = strength
        vocab[token] = len(rows)
        rows.append((center + rng.normal(scale=0.08, size=dim)).astype(np.float32))

    for w in DRUGS:
        add(w, axis=0)
    for w in SYMPTOMS + MULTI_SYMPTOM_HEADS + MULTI_SYMPTOM_TAILS:
        add(w, axis=1)
    for w in NEGATION:
        add(w, axis=2)
    for w in FILLER:
        add(w, axis=None, strength=0.0)
    return EmbeddingStore(dim, vocab, np.stack(rows))


def _span_of(words, phrase, label):
    tokens = phrase.split()
    for i in range(len(words) - len(tokens) + 1):
        if words[i:i + len(tokens)] == tokens:
            return EntitySpan(i, i + len(tokens), label)
    raise AssertionError(f"{phrase!r} not found in {words}")


def tagged_doc(text, drugs=(), symptoms=(), doc_id="d", relations=None, gold_class=None):
    doc = doc_from_text(text, doc_id=doc_id, gold_class=gold_class)
    words = [t.text for t in doc.tokens]
    spans = [_span_of(words, s, "ADE") for s in symptoms]
    spans += [_span_of(words, d, "Drug") for d in drugs]
    doc.gold_spans = sorted(spans)
    if relations is not None:
        doc.gold_relations = [
            (_span_of(words, ade, "ADE"), _span_of(words, drug, "Drug"), label)
            for ade, drug, label in relations
        ]
    return doc


def pipeline_training_corpus(seed=0):
    """Documents carrying class, span, and relation supervision at once.

    Two sentence frames: "I feel a bit S & have a little S2 after taking D."
    (every drug-symptom pair related) and "@yho D1 gave me S, but D2 suits
    me!" (S relates to D1, not D2). NEG frames mention drugs without any
    reaction.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(14):
        s1 = SYMPTOMS[i % len(SYMPTOMS)]
        head = MULTI_SYMPTOM_HEADS[i % len(MULTI_SYMPTOM_HEADS)]
        tail = MULTI_SYMPTOM_TAILS[i % len(MULTI_SYMPTOM_TAILS)]
        s2 = f"{head} {tail}"
        d = DRUGS[i % len(DRUGS)]
        docs.append(tagged_doc(
            f"I feel a bit {s1} & have a little {s2} after taking {d}.",
            drugs=[d], symptoms=[s1, s2], doc_id=f"frameA{i}", gold_class="ADE",
            relations=[(s1, d, "Positive"), (s2, d, "Positive")]))
    for i in range(14):
        d1 = DRUGS[i % len(DRUGS)]
        d2 = DRUGS[(i + 3) % len(DRUGS)]
        s = SYMPTOMS[(i + 5) % len(SYMPTOMS)]
        docs.append(tagged_doc(
            f"@yho {d1} gave me {s}, but {d2} suits me!",
            drugs=[d1, d2], symptoms=[s], doc_id=f"frameB{i}", gold_class="ADE",
            relations=[(s, d1, "Positive"), (s, d2, "Negative")]))
    for i in range(14):
        d = DRUGS[(i + 1) % len(DRUGS)]
        neg = NEGATION[i % len(NEGATION)]
        docs.append(tagged_doc(
            f"I just took {d} and {neg} had any gastric problems so far.",
            drugs=[d], doc_id=f"frameC{i}", gold_class="NEG"))
    rng.shuffle(docs)
    return docs


def trained_pipeline(seed=0, epochs_scale=1.0):
    """Classifier + NER + RE trained on the shared corpus, as a Pipeline."""
    from ademiner.classifier import DocumentClassifier
    from ademiner.corpus import labeled_candidates
    from ademiner.ner import NerTagger
    from ademiner.pipeline import Pipeline
    from ademiner.relations import RelationClassifier

    store = shared_store(seed=seed)
    docs = pipeline_training_corpus(seed=seed)
    classifier = DocumentClassifier(
        embeddings=store, epochs=max(2, int(25 * epochs_scale)), seed=seed).fit(docs)
    ner_docs = [d for d in docs if d.gold_class == "ADE"]
    tagger = NerTagger(embeddings=store, lstm_size=32, dropout_rate=0.3,
                       epochs=max(2, int(35 * epochs_scale)), seed=seed).fit(ner_docs)
    candidates = [c for d in ner_docs for c in labeled_candidates(d)]
    relation = RelationClassifier(
        embeddings=store, epochs=max(2, int(50 * epochs_scale)), seed=seed).fit(
        candidates, documents=doc_index(docs))
    return Pipeline(embeddings=store, classifier=classifier, ner=tagger, re=relation)
