"""Append-only delivery/click event logs and click-through-rate reporting.

Logs are newline-delimited JSON (one event per line, UTF-8, RFC 3339 UTC
timestamps): ``deliveries.jsonl`` and ``clicks.jsonl``. Reports never mutate
the logs, so report runs over the same files are byte-identical.
"""

from __future__ import annotations

import csv
import json
import threading
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import NamedTuple, Sequence

from .arms import AlgorithmArm
from .corpus import CorpusStore
from .recommenders import PopularityEntry, PopularityTable, RecommendationSet

DELIVERY_LOG_FILENAME = "deliveries.jsonl"
CLICK_LOG_FILENAME = "clicks.jsonl"

DEFAULT_BOT_MARKERS: tuple[str, ...] = ("bot", "crawler", "spider", "slurp")

REPORT_VARIANTS = ("raw", "bot_filtered")

CSV_HEADER = ("period", "variant", "algorithm", "deliveries", "clicks", "ctr_percent")


def format_rfc3339(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_rfc3339(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError(f"timestamp without offset: {value}")
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class DeliveryEvent:
    recommendation_id: str
    set_id: str
    partner_id: str
    document_id: str
    algorithm: AlgorithmArm
    delivered_at: datetime
    user_agent: str


@dataclass(frozen=True)
class ClickEvent:
    recommendation_id: str
    clicked_at: datetime


class AnalyticsLog:
    """Delivery and click logs in a directory, with serialized appends.

    A single lock funnels all writers so concurrent request handlers never
    interleave partial lines; each line is flushed as it is written.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.delivery_path = self.root / DELIVERY_LOG_FILENAME
        self.click_path = self.root / CLICK_LOG_FILENAME
        self._lock = threading.Lock()

    def record_delivery(self, rec_set: RecommendationSet, user_agent: str) -> int:
        """Append one DeliveryEvent line per item, in rank order."""
        lines = []
        delivered_at = format_rfc3339(rec_set.created_at)
        for item in rec_set.items:
            payload = {
                "recommendation_id": item.recommendation_id,
                "set_id": rec_set.set_id,
                "partner_id": rec_set.partner_id,
                "document_id": item.document_id,
                "algorithm": rec_set.algorithm.value,
                "delivered_at": delivered_at,
                "user_agent": user_agent,
            }
            lines.append(json.dumps(payload, ensure_ascii=False))
        with self._lock, self.delivery_path.open("a", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
            fh.flush()
        return len(lines)

    def record_click(self, recommendation_id: str, ts: datetime) -> int:
        """Append one ClickEvent line; duplicates are kept (dedup is report-time)."""
        payload = {
            "recommendation_id": recommendation_id,
            "clicked_at": format_rfc3339(ts),
        }
        with self._lock, self.click_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
            fh.flush()
        return 1

    def known_recommendation_ids(self) -> set[str]:
        events, _ = read_delivery_log(self.delivery_path)
        return {e.recommendation_id for e in events}


def read_delivery_log(
    path: str | Path,
) -> tuple[list[DeliveryEvent], list[tuple[int, str]]]:
    """Parse a delivery log; malformed lines are collected, not fatal."""
    events: list[DeliveryEvent] = []
    rejects: list[tuple[int, str]] = []
    path = Path(path)
    if not path.exists():
        return events, rejects
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                events.append(
                    DeliveryEvent(
                        recommendation_id=raw["recommendation_id"],
                        set_id=raw["set_id"],
                        partner_id=raw["partner_id"],
                        document_id=raw["document_id"],
                        algorithm=AlgorithmArm(raw["algorithm"]),
                        delivered_at=parse_rfc3339(raw["delivered_at"]),
                        user_agent=raw.get("user_agent", ""),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                rejects.append((lineno, "malformed delivery event"))
    return events, rejects


def read_click_log(path: str | Path) -> tuple[list[ClickEvent], list[tuple[int, str]]]:
    """Parse a click log; malformed lines are collected, not fatal."""
    events: list[ClickEvent] = []
    rejects: list[tuple[int, str]] = []
    path = Path(path)
    if not path.exists():
        return events, rejects
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                events.append(
                    ClickEvent(
                        recommendation_id=raw["recommendation_id"],
                        clicked_at=parse_rfc3339(raw["clicked_at"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                rejects.append((lineno, "malformed click event"))
    return events, rejects


def classify_requester(
    user_agent: str, bot_markers: Sequence[str] = DEFAULT_BOT_MARKERS
) -> str:
    """Return "bot" iff the lowercased user agent contains a marker; empty means bot."""
    if not user_agent:
        return "bot"
    lowered = user_agent.lower()
    return "bot" if any(marker in lowered for marker in bot_markers) else "human"


class CtrValue(NamedTuple):
    ratio: float
    rendered: str


def compute_ctr(deliveries: int, clicks: int) -> CtrValue:
    """Click-through rate as a ratio and as a percent string.

    The rendered value is ``100 * clicks / deliveries`` with two decimals,
    rounded half away from zero; zero deliveries render as "0.00%".
    """
    if deliveries < 0:
        raise ValueError("deliveries must be >= 0")
    if deliveries == 0:
        return CtrValue(0.0, "0.00%")
    percent = (Decimal(clicks) * 100 / Decimal(deliveries)).quantize(
        Decimal("0.01"), rounding=ROUND_HALF_UP
    )
    return CtrValue(clicks / deliveries, f"{percent}%")


@dataclass(frozen=True)
class CtrReportRow:
    period: str  # "YYYY-MM" or "overall"
    variant: str  # "raw" | "bot_filtered"
    algorithm: str  # arm label or "all"
    deliveries: int
    clicks: int
    ctr_percent: str


class LogIssues(NamedTuple):
    delivery_rejects: tuple[tuple[int, str], ...]
    click_rejects: tuple[tuple[int, str], ...]
    orphan_click_ids: tuple[str, ...]


def collect_log_issues(delivery_log: str | Path, click_log: str | Path) -> LogIssues:
    """Malformed lines plus clicks whose recommendation was never delivered."""
    deliveries, delivery_rejects = read_delivery_log(delivery_log)
    clicks, click_rejects = read_click_log(click_log)
    known = {e.recommendation_id for e in deliveries}
    orphans = tuple(
        sorted({c.recommendation_id for c in clicks if c.recommendation_id not in known})
    )
    return LogIssues(tuple(delivery_rejects), tuple(click_rejects), orphans)


def _month_key(ts: datetime) -> str:
    utc = ts.astimezone(timezone.utc)
    return f"{utc.year:04d}-{utc.month:02d}"


def monthly_report(
    delivery_log: str | Path,
    click_log: str | Path,
    variant: str = "raw",
    bot_markers: Sequence[str] = DEFAULT_BOT_MARKERS,
) -> list[CtrReportRow]:
    """CTR rows per UTC calendar month plus a final "overall" row.

    A click is attributed to the month its delivery happened in, not the
    click's own month; orphan clicks (no matching delivery) are never
    counted. The ``bot_filtered`` variant drops deliveries whose user agent
    classifies as bot, drops clicks whose delivery was dropped, and counts at
    most one click per recommendation id. Aggregate rows carry algorithm
    "all"; per-algorithm sub-rows follow, label ascending.
    """
    if variant not in REPORT_VARIANTS:
        raise ValueError(f"unknown variant: {variant}")
    deliveries, _ = read_delivery_log(delivery_log)
    clicks, _ = read_click_log(click_log)

    if variant == "bot_filtered":
        deliveries = [
            e for e in deliveries if classify_requester(e.user_agent, bot_markers) == "human"
        ]
    by_rec = {e.recommendation_id: e for e in deliveries}
    if variant == "bot_filtered":
        clicked_ids = {c.recommendation_id for c in clicks if c.recommendation_id in by_rec}
        joined = [by_rec[rec_id] for rec_id in clicked_ids]
    else:
        joined = [by_rec[c.recommendation_id] for c in clicks if c.recommendation_id in by_rec]

    delivery_counts: Counter[tuple[str, str]] = Counter()
    for event in deliveries:
        month = _month_key(event.delivered_at)
        delivery_counts[(month, "all")] += 1
        delivery_counts[(month, event.algorithm.value)] += 1
    click_counts: Counter[tuple[str, str]] = Counter()
    for event in joined:
        month = _month_key(event.delivered_at)
        click_counts[(month, "all")] += 1
        click_counts[(month, event.algorithm.value)] += 1

    months = sorted({month for month, _ in delivery_counts})
    rows: list[CtrReportRow] = []
    for period in months + ["overall"]:
        if period == "overall":
            in_period = list(delivery_counts)
        else:
            in_period = [key for key in delivery_counts if key[0] == period]
        algorithms = sorted({algo for _, algo in in_period if algo != "all"})
        for algorithm in ["all"] + algorithms:
            if period == "overall":
                delivered = sum(n for (_, a), n in delivery_counts.items() if a == algorithm)
                clicked = sum(n for (_, a), n in click_counts.items() if a == algorithm)
            else:
                delivered = delivery_counts.get((period, algorithm), 0)
                clicked = click_counts.get((period, algorithm), 0)
            rows.append(
                CtrReportRow(
                    period=period,
                    variant=variant,
                    algorithm=algorithm,
                    deliveries=delivered,
                    clicks=clicked,
                    ctr_percent=compute_ctr(delivered, clicked).rendered,
                )
            )
    return rows


def write_report_csv(rows: Sequence[CtrReportRow], path: str | Path) -> None:
    """UTF-8 CSV with the pinned header."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [row.period, row.variant, row.algorithm, row.deliveries, row.clicks, row.ctr_percent]
            )


def popularity_table(
    delivery_log: str | Path, click_log: str | Path, store: CorpusStore
) -> PopularityTable:
    """Clicks (deduplicated), deliveries, and readership per stored document."""
    deliveries, _ = read_delivery_log(delivery_log)
    clicks, _ = read_click_log(click_log)
    doc_by_rec = {e.recommendation_id: e.document_id for e in deliveries}
    delivery_counts = Counter(e.document_id for e in deliveries)
    clicked_recs = {c.recommendation_id for c in clicks if c.recommendation_id in doc_by_rec}
    click_counts = Counter(doc_by_rec[rec_id] for rec_id in clicked_recs)

    entries = {}
    collections = {}
    for record in store.documents():
        entries[record.id] = PopularityEntry(
            clicks=click_counts.get(record.id, 0),
            deliveries=delivery_counts.get(record.id, 0),
            readership=record.readership,
        )
        collections[record.id] = record.collection_id
    return PopularityTable(entries, collections)
