"""The selectable recommendation algorithms."""

from __future__ import annotations

from enum import Enum


class AlgorithmArm(str, Enum):
    """One selectable recommendation algorithm in per-request rotation.

    The string values are the wire labels used in partner configuration,
    response bodies, and analytics logs.
    """

    CONTENT_BASED = "content_based"
    CONTENT_BASED_READERSHIP_RERANK = "content_based_readership_rerank"
    STEREOTYPE = "stereotype"
    MOST_POPULAR = "most_popular"

    def __str__(self) -> str:
        return self.value
