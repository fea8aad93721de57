"""Recommendation arms, weighted rotation, re-ranking, and set assembly.

All functions here are pure over an immutable :class:`~docrecs.index.Index`
and :class:`PopularityTable`; callers supply their own random source, so
concurrent calls are safe as long as each call owns its ``rng``.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Collection, Mapping, NamedTuple, Sequence

from .arms import AlgorithmArm
from .corpus import CorpusStore, PartnerConfig
from .index import DEFAULT_QUERY_TERMS, Index, ScoredCandidate, more_like_this

DEFAULT_RERANK_POOL = 50


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class PopularityEntry:
    clicks: int = 0
    deliveries: int = 0
    readership: int = 0


class PopularityTable:
    """Per-document popularity signals plus each document's collection.

    Unknown documents read as all-zero entries, so the table can be consulted
    for any candidate without existence checks.
    """

    def __init__(
        self,
        entries: Mapping[str, PopularityEntry] | None = None,
        collections: Mapping[str, str] | None = None,
    ):
        self._entries = dict(entries or {})
        self._collections = dict(collections or {})

    @classmethod
    def from_store(cls, store: CorpusStore) -> "PopularityTable":
        """A zero-count table carrying only readership from the corpus."""
        entries = {r.id: PopularityEntry(readership=r.readership) for r in store.documents()}
        collections = {r.id: r.collection_id for r in store.documents()}
        return cls(entries, collections)

    def get(self, doc_id: str) -> PopularityEntry:
        return self._entries.get(doc_id, PopularityEntry())

    def collection(self, doc_id: str) -> str | None:
        return self._collections.get(doc_id)

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._entries


class RecommendedItem(NamedTuple):
    recommendation_id: str
    rank: int
    document_id: str
    score: float
    title: str


@dataclass(frozen=True)
class RecommendationSet:
    """One delivered ranked list; ``set_id`` links deliveries to later clicks."""

    set_id: str
    partner_id: str
    query_document_id: str
    algorithm: AlgorithmArm
    created_at: datetime
    items: tuple[RecommendedItem, ...]


def select_arm(arm_weights: Mapping[AlgorithmArm, float], rng: random.Random) -> AlgorithmArm:
    """Pick an arm with probability weight / sum(weights).

    Consumes exactly one draw from ``rng``. Raises ValueError when no weight
    is positive.
    """
    weights = [(arm, arm_weights[arm]) for arm in AlgorithmArm if arm in arm_weights]
    if any(w < 0 for _, w in weights):
        raise ValueError("arm weights must be non-negative")
    total = sum(w for _, w in weights)
    if total <= 0:
        raise ValueError("at least one arm weight must be positive")
    draw = rng.random() * total
    cumulative = 0.0
    chosen = None
    for arm, weight in weights:
        if weight <= 0:
            continue
        chosen = arm
        cumulative += weight
        if draw < cumulative:
            return arm
    return chosen  # round-off fallback: the last positive-weight arm


def recommend_content_based(
    index: Index,
    query_doc: str,
    k: int,
    scope: Collection[str],
    max_query_terms: int | None = DEFAULT_QUERY_TERMS,
) -> list[ScoredCandidate]:
    """TF-IDF cosine relatedness; delegates to :func:`more_like_this`."""
    return more_like_this(index, query_doc, k, scope, max_query_terms)


def recommend_most_popular(
    pop: PopularityTable,
    query_doc: str,
    k: int,
    scope: Collection[str],
) -> list[ScoredCandidate]:
    """Top-k in-scope documents by (clicks, deliveries, readership) descending.

    Full ties fall back to document id ascending. The score field carries the
    normalized rank ``1 - (rank - 1) / k`` for serialization uniformity.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = [d for d in pop if d != query_doc and pop.collection(d) in scope]

    def sort_key(doc_id: str):
        entry = pop.get(doc_id)
        return (-entry.clicks, -entry.deliveries, -entry.readership, doc_id)

    top = heapq.nsmallest(k, candidates, key=sort_key)  # == sorted(...)[:k]
    return [ScoredCandidate(d, 1.0 - i / k) for i, d in enumerate(top)]


def recommend_stereotype(
    config: PartnerConfig,
    query_doc: str,
    k: int,
    scope: Collection[str],
) -> list[ScoredCandidate]:
    """The partner's curated list, filtered and truncated.

    ``scope`` is the set of candidate document ids that exist and are in the
    partner's collections; list order is preserved and the query document is
    excluded. Scores carry the normalized rank as in most-popular.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    picked = [d for d in config.stereotype_list if d != query_doc and d in scope]
    return [ScoredCandidate(d, 1.0 - i / k) for i, d in enumerate(picked[:k])]


def rerank_bibliometric(
    candidates: Sequence[ScoredCandidate],
    pop: PopularityTable,
    pool_size: int = DEFAULT_RERANK_POOL,
) -> list[ScoredCandidate]:
    """Re-sort the leading pool by readership; the tail keeps its positions.

    The first ``min(pool_size, len(candidates))`` entries are ordered by
    (readership descending, original score descending, document id
    ascending); scores are never altered, so the output is a permutation of
    the input.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    head = sorted(
        candidates[:pool_size],
        key=lambda c: (-pop.get(c.document_id).readership, -c.score, c.document_id),
    )
    return head + list(candidates[pool_size:])


def _opaque_id(prefix: str, rng: random.Random) -> str:
    return f"{prefix}{rng.getrandbits(96):024x}"


def produce_recommendations(
    index: Index,
    pop: PopularityTable,
    config: PartnerConfig,
    query_doc: str,
    k: int,
    rng: random.Random,
    *,
    max_query_terms: int | None = DEFAULT_QUERY_TERMS,
    pool_size: int = DEFAULT_RERANK_POOL,
    clock: Callable[[], datetime] = _utc_now,
) -> RecommendationSet:
    """Select an arm, run it, and pad to exactly ``k`` items.

    The readership-rerank arm retrieves a relevance pool of
    ``max(k, pool_size)`` content-based candidates, re-ranks it, and keeps
    the top ``k``, so relevance still gates readership. Shortfalls are padded
    first with most-popular results not already present, then with the
    remaining in-scope documents by id ascending (score 0.0); the only case
    with fewer than ``k`` items is corpus exhaustion.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if query_doc not in index:
        raise KeyError(f"unknown document id: {query_doc}")

    arm = select_arm(config.arm_weights, rng)
    scope = config.allowed_collections

    if arm is AlgorithmArm.CONTENT_BASED:
        primary = recommend_content_based(index, query_doc, k, scope, max_query_terms)
    elif arm is AlgorithmArm.CONTENT_BASED_READERSHIP_RERANK:
        pool = recommend_content_based(
            index, query_doc, max(k, pool_size), scope, max_query_terms
        )
        primary = rerank_bibliometric(pool, pop, pool_size)[:k]
    elif arm is AlgorithmArm.STEREOTYPE:
        listed_in_scope = {
            d
            for d in config.stereotype_list
            if d in index and index.collections[d] in scope
        }
        primary = recommend_stereotype(config, query_doc, k, listed_in_scope)
    else:
        primary = recommend_most_popular(pop, query_doc, k, scope)

    chosen = list(primary[:k])
    seen = {query_doc} | {c.document_id for c in chosen}
    if len(chosen) < k:
        for candidate in recommend_most_popular(pop, query_doc, k, scope):
            if len(chosen) >= k:
                break
            if candidate.document_id in seen:
                continue
            chosen.append(candidate)
            seen.add(candidate.document_id)
    if len(chosen) < k:
        # only reachable when the popularity table does not cover the
        # index's in-scope documents; keeps the k-guarantee regardless
        for doc_id in index.ids_in_collections(scope):
            if len(chosen) >= k:
                break
            if doc_id in seen:
                continue
            chosen.append(ScoredCandidate(doc_id, 0.0))
            seen.add(doc_id)

    set_id = _opaque_id("set-", rng)
    items = tuple(
        RecommendedItem(
            recommendation_id=_opaque_id("rec-", rng),
            rank=rank,
            document_id=candidate.document_id,
            score=candidate.score,
            title=index.titles.get(candidate.document_id, ""),
        )
        for rank, candidate in enumerate(chosen, start=1)
    )
    return RecommendationSet(
        set_id=set_id,
        partner_id=config.partner_id,
        query_document_id=query_doc,
        algorithm=arm,
        created_at=clock(),
        items=items,
    )
