"""Inverted index over document metadata with TF-IDF more-like-this retrieval.

Each document field is tokenized and counted with a per-field weight, so the
weighted term frequency is ``tf(t, d) = sum over fields f of weight(f) *
count(t in field f)``. Vector weights are ``tf(t, d) * idf(t)`` with
``idf(t) = ln(1 + N / df(t))``, and relatedness is the cosine between a
query vector restricted to its strongest terms and each candidate's full
vector.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass
from typing import Collection, Mapping, NamedTuple

from .corpus import CorpusStore, DocumentRecord

DEFAULT_FIELD_WEIGHTS: Mapping[str, float] = {
    "title": 3.0,
    "keywords": 2.0,
    "abstract": 1.0,
    "venue": 1.0,
    "authors": 1.0,
}

# How many of the query document's strongest terms feed the similarity
# computation; None disables the restriction.
DEFAULT_QUERY_TERMS = 25

_TOKEN_RE = re.compile(r"[^\W_]+")  # runs of Unicode letters and digits


def tokenize(text: str, stopwords: Collection[str] = frozenset()) -> list[str]:
    """Lowercase and split on every character that is not a letter or digit.

    Tokens shorter than two characters and stopwords are dropped; input
    order is preserved.
    """
    return [
        token
        for token in _TOKEN_RE.findall(text.lower())
        if len(token) >= 2 and token not in stopwords
    ]


class ScoredCandidate(NamedTuple):
    document_id: str
    score: float


@dataclass(frozen=True)
class Index:
    """Immutable TF-IDF index; safe to share across threads once built."""

    doc_count: int
    postings: Mapping[str, tuple[tuple[str, float], ...]]  # term -> ((doc, weighted tf), ...)
    doc_vectors: Mapping[str, Mapping[str, float]]  # doc -> {term: tf * idf}
    doc_norms: Mapping[str, float]
    field_weights: Mapping[str, float]
    collections: Mapping[str, str]  # doc -> collection_id
    titles: Mapping[str, str]
    collection_ids: frozenset[str] = frozenset()  # every collection present

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.doc_vectors

    def __len__(self) -> int:
        return self.doc_count

    def ids_in_collections(self, scope: Collection[str]) -> list[str]:
        """All indexed document ids whose collection is in ``scope``, id ascending."""
        return sorted(d for d, c in self.collections.items() if c in scope)


def _field_text(record: DocumentRecord, field_name: str) -> str:
    if field_name == "title":
        return record.title
    if field_name == "abstract":
        return record.abstract or ""
    if field_name == "venue":
        return record.venue or ""
    if field_name == "authors":
        return " ".join(record.authors)
    if field_name == "keywords":
        return " ".join(record.keywords)
    raise ValueError(f"unknown field: {field_name}")


def build_index(
    store: CorpusStore,
    field_weights: Mapping[str, float] | None = None,
    stopwords: Collection[str] = frozenset(),
) -> Index:
    """Build an immutable index over every document in ``store``."""
    if len(store) == 0:
        raise ValueError("cannot index an empty corpus store")
    weights = dict(DEFAULT_FIELD_WEIGHTS if field_weights is None else field_weights)
    unknown = set(weights) - set(DEFAULT_FIELD_WEIGHTS)
    if unknown:
        raise ValueError(f"unknown fields: {sorted(unknown)}")
    if not weights or any(w <= 0 for w in weights.values()):
        raise ValueError("field weights must be positive")

    term_freqs: dict[str, dict[str, float]] = {}
    for record in store.documents():
        counts: dict[str, float] = {}
        for field_name, weight in weights.items():
            for token in tokenize(_field_text(record, field_name), stopwords):
                counts[token] = counts.get(token, 0.0) + weight
        term_freqs[record.id] = counts

    doc_count = len(term_freqs)
    postings_acc: dict[str, list[tuple[str, float]]] = {}
    for doc_id, counts in term_freqs.items():
        for term, value in counts.items():
            postings_acc.setdefault(term, []).append((doc_id, value))

    idf_by_term = {
        term: math.log(1.0 + doc_count / len(plist)) for term, plist in postings_acc.items()
    }
    doc_vectors: dict[str, dict[str, float]] = {}
    doc_norms: dict[str, float] = {}
    for doc_id, counts in term_freqs.items():
        vector = {term: value * idf_by_term[term] for term, value in counts.items()}
        doc_vectors[doc_id] = vector
        doc_norms[doc_id] = math.sqrt(sum(w * w for w in vector.values()))

    collections = {r.id: r.collection_id for r in store.documents()}
    return Index(
        doc_count=doc_count,
        postings={term: tuple(plist) for term, plist in postings_acc.items()},
        doc_vectors=doc_vectors,
        doc_norms=doc_norms,
        field_weights=weights,
        collections=collections,
        titles={r.id: r.title for r in store.documents()},
        collection_ids=frozenset(collections.values()),
    )


def idf(index: Index, term: str) -> float:
    """Inverse document frequency, ``ln(1 + N / df)``; 0.0 for unseen terms."""
    plist = index.postings.get(term)
    if not plist:
        return 0.0
    return math.log(1.0 + index.doc_count / len(plist))


def document_vector(index: Index, doc_id: str) -> dict[str, float]:
    """The stored (term, tf * idf) pairs of an indexed document."""
    try:
        return dict(index.doc_vectors[doc_id])
    except KeyError:
        raise KeyError(f"unknown document id: {doc_id}") from None


def more_like_this(
    index: Index,
    query_doc: str,
    k: int,
    scope: Collection[str],
    max_query_terms: int | None = DEFAULT_QUERY_TERMS,
) -> list[ScoredCandidate]:
    """Rank in-scope documents by cosine relatedness to ``query_doc``.

    The query vector is restricted to its ``max_query_terms`` strongest terms
    (ties broken by term string ascending); each candidate keeps its full
    vector. Candidates are every indexed document whose collection is in
    ``scope`` except the query document itself; zero-score candidates are
    omitted and the result is ordered by (score descending, document id
    ascending). Cosine values are clamped to [0, 1] against float round-off.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    vector = index.doc_vectors.get(query_doc)
    if vector is None:
        raise KeyError(f"unknown document id: {query_doc}")
    if not scope:
        return []

    terms = sorted(vector.items(), key=lambda item: (-item[1], item[0]))
    if max_query_terms is not None:
        terms = terms[:max_query_terms]
    if not terms:
        return []
    query_norm = math.sqrt(sum(w * w for _, w in terms))

    collections = index.collections
    check_scope = not index.collection_ids <= frozenset(scope)
    dots: dict[str, float] = {}
    for term, query_weight in terms:
        factor = query_weight * idf(index, term)
        for doc_id, weighted_tf in index.postings[term]:
            if doc_id == query_doc:
                continue
            if check_scope and collections[doc_id] not in scope:
                continue
            dots[doc_id] = dots.get(doc_id, 0.0) + factor * weighted_tf

    norms = index.doc_norms
    ranked = [
        ScoredCandidate(doc_id, min(1.0, dot / (query_norm * norms[doc_id])))
        for doc_id, dot in dots.items()
        if dot > 0.0
    ]
    # nsmallest on the composite key returns exactly sorted(...)[:k]
    return heapq.nsmallest(k, ranked, key=lambda c: (-c.score, c.document_id))
