"""Shared test helpers: synthetic corpora and an independent relevance oracle.

The oracle computes relatedness from raw record dicts with its own counting
and pairwise cosine code so index-path results can be checked against a
second, unrelated implementation of the same definition.
"""

from __future__ import annotations

import json
import math
import random
import re

from docrecs import CorpusStore, ingest_corpus

WORDS = [
    "retrieval", "ranking", "corpus", "metadata", "citation", "library",
    "digital", "search", "query", "vector", "cosine", "index", "term",
    "frequency", "weight", "cluster", "topic", "model", "neural", "graph",
    "network", "social", "science", "survey", "analysis", "method", "study",
    "evaluation", "system", "user", "behavior", "click", "log", "archive",
    "repository", "journal", "conference", "proceedings", "abstract",
    "semantic", "lexical", "language", "translation", "entity", "linking",
    "knowledge", "ontology", "taxonomy", "classification", "regression",
    "learning", "feature", "sparse", "dense", "embedding", "similarity",
    "relevance", "feedback", "precision", "recall", "measure", "benchmark",
    "dataset", "sample", "random", "distribution", "statistics", "inference",
    "bayesian", "markov", "chain", "process", "stream", "filter", "signal",
    "noise", "pattern", "mining", "discovery", "recommendation", "profile",
    "interest", "reading", "annotation", "review", "editorial", "policy",
    "economics", "history", "culture", "education", "media", "discourse",
    "migration", "labor", "health", "survey2", "panel", "cohort", "interview",
]

VENUES = ["Journal of Findings", "Annual Workshop", "Field Review", "Open Letters"]

FIRST_NAMES = ["ada", "grace", "alan", "edsger", "barbara", "donald", "radia", "vint"]
LAST_NAMES = ["lovelace", "hopper", "turing", "dijkstra", "liskov", "knuth", "perlman", "cerf"]

TOKEN_RE = re.compile(r"[^\W_]+")


class Vocabulary:
    """A word population with Zipf-shaped draw weights.

    ``size`` beyond the base list is filled with derived rare words, and the
    author/venue pools grow with it, giving large corpora the long
    vocabulary tail real metadata has.
    """

    def __init__(self, size: int | None = None):
        if size is None or size <= len(WORDS):
            self.words = list(WORDS)
            self.author_names = [f"{f} {l}" for f in FIRST_NAMES for l in LAST_NAMES]
            self.venues = list(VENUES)
        else:
            extra = [f"{WORDS[i % len(WORDS)]}{i}" for i in range(size - len(WORDS))]
            self.words = list(WORDS) + extra
            pool = max(64, size // 10)
            self.author_names = [
                f"{FIRST_NAMES[i % len(FIRST_NAMES)]}{i} {LAST_NAMES[i % len(LAST_NAMES)]}{i}"
                for i in range(pool)
            ]
            venue_pool = max(32, size // 100)
            self.venues = [
                f"{self.words[(i * 13) % len(self.words)]} press{i}" for i in range(venue_pool)
            ]
        weights = [1.0 / (rank + 50.0) for rank in range(len(self.words))]
        self.cum_weights = []
        total = 0.0
        for w in weights:
            total += w
            self.cum_weights.append(total)

    def sample(self, rng: random.Random, k: int) -> list[str]:
        return rng.choices(self.words, cum_weights=self.cum_weights, k=k)

    def sample_distinct(self, rng: random.Random, k: int) -> list[str]:
        picked: dict[str, None] = {}
        while len(picked) < k:
            for word in self.sample(rng, k - len(picked)):
                picked.setdefault(word, None)
        return list(picked)


_DEFAULT_VOCAB = Vocabulary()

ORACLE_FIELD_WEIGHTS = {
    "title": 3.0,
    "keywords": 2.0,
    "abstract": 1.0,
    "venue": 1.0,
    "authors": 1.0,
}


def make_record(
    rng: random.Random,
    doc_id: str,
    collection: str = "main",
    with_abstract: bool = True,
    vocab: Vocabulary = _DEFAULT_VOCAB,
) -> dict:
    """A plausible metadata record as a raw dict (JSON Lines shape)."""
    record = {
        "id": doc_id,
        "collection_id": collection,
        "title": " ".join(vocab.sample(rng, rng.randint(4, 8))),
        "authors": rng.sample(vocab.author_names, rng.randint(1, 3)),
        "venue": rng.choice(vocab.venues),
        "keywords": vocab.sample_distinct(rng, rng.randint(0, 4)),
        "year": rng.randint(1990, 2017),
        "readership": rng.randint(0, 50),
    }
    if with_abstract:
        record["abstract"] = " ".join(vocab.sample(rng, rng.randint(15, 40)))
    return record


def make_corpus(
    rng: random.Random,
    n_docs: int,
    collections: tuple[str, ...] = ("main",),
    with_abstract: bool = True,
    id_prefix: str = "doc",
    vocab_size: int | None = None,
) -> list[dict]:
    vocab = _DEFAULT_VOCAB if vocab_size is None else Vocabulary(vocab_size)
    width = len(str(max(n_docs - 1, 1)))
    return [
        make_record(
            rng,
            f"{id_prefix}-{i:0{width}d}",
            collection=rng.choice(collections),
            with_abstract=with_abstract,
            vocab=vocab,
        )
        for i in range(n_docs)
    ]


def build_store(tmp_path, records: list[dict], name: str = "store") -> CorpusStore:
    store = CorpusStore(tmp_path / name)
    summary = ingest_corpus([json.dumps(r) for r in records], store)
    assert summary.rejected == 0, summary.reject_reasons
    return store


# --- independent oracle -------------------------------------------------


def oracle_tokens(text: str) -> list[str]:
    return [t for t in TOKEN_RE.findall(text.lower()) if len(t) >= 2]


def _oracle_field_text(record: dict, field: str) -> str:
    value = record.get(field)
    if value is None:
        return ""
    if isinstance(value, list):
        return " ".join(value)
    return str(value)


def oracle_vectors(records: list[dict]) -> tuple[dict[str, dict[str, float]], dict[str, float]]:
    """TF-IDF vectors and norms computed directly from raw records."""
    weighted_counts: dict[str, dict[str, float]] = {}
    for record in records:
        counts: dict[str, float] = {}
        for field, weight in ORACLE_FIELD_WEIGHTS.items():
            for token in oracle_tokens(_oracle_field_text(record, field)):
                counts[token] = counts.get(token, 0.0) + weight
        weighted_counts[record["id"]] = counts

    df: dict[str, int] = {}
    for counts in weighted_counts.values():
        for term in counts:
            df[term] = df.get(term, 0) + 1
    n = len(records)

    vectors: dict[str, dict[str, float]] = {}
    norms: dict[str, float] = {}
    for doc_id, counts in weighted_counts.items():
        vector = {
            term: tf * math.log(1.0 + n / df[term]) for term, tf in counts.items()
        }
        vectors[doc_id] = vector
        norms[doc_id] = math.sqrt(sum(w * w for w in vector.values()))
    return vectors, norms


def oracle_more_like_this(
    records: list[dict],
    query_id: str,
    k: int,
    scope: set[str] | None = None,
) -> list[tuple[str, float]]:
    """Exhaustive pairwise cosine over full vectors, same tie policy."""
    vectors, norms = oracle_vectors(records)
    collections = {r["id"]: r.get("collection_id", "") for r in records}
    query_vector = vectors[query_id]
    query_norm = norms[query_id]
    results: list[tuple[str, float]] = []
    for record in records:
        doc_id = record["id"]
        if doc_id == query_id:
            continue
        if scope is not None and collections[doc_id] not in scope:
            continue
        candidate = vectors[doc_id]
        dot = sum(w * candidate[t] for t, w in query_vector.items() if t in candidate)
        if dot <= 0.0 or query_norm == 0.0 or norms[doc_id] == 0.0:
            continue
        results.append((doc_id, min(1.0, dot / (query_norm * norms[doc_id]))))
    results.sort(key=lambda pair: (-pair[1], pair[0]))
    return results[:k]
