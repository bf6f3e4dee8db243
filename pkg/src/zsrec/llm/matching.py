"""Parsing free-text LLM replies into titles and matching titles to catalog items."""
from __future__ import annotations

import re
from typing import Optional

from rapidfuzz.distance import DamerauLevenshtein

from ..dataset import ItemCatalog, id_sort_key

_NUMBERED = re.compile(r"^\s*\d+[.)]\s*(.+)$")
_BULLET = re.compile(r"^\s*[-*]\s*(.+)$")
_TRAILING_SCORE = re.compile(r"\s+-\s+\d+(?:\.\d+)?\s*/\s*\d+(?:\.\d+)?\s*$")
_TRAILING_PAREN = re.compile(r"\s*\((?:score|rating|relevance)\s*[:=][^)]*\)\s*$", re.IGNORECASE)
_WS = re.compile(r"\s+")


def _clean_entry(text: str) -> str:
    text = _TRAILING_PAREN.sub("", text)
    text = _TRAILING_SCORE.sub("", text)
    text = text.strip()
    if text.startswith("**") and text.endswith("**") and len(text) > 4:
        text = text[2:-2].strip()
    if len(text) > 1 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text


def parse_recommendations(raw: str) -> list[str]:
    """Extract list entries: numbered lines if any exist, otherwise ``-``/``*`` bullets."""
    lines = raw.splitlines()
    for pattern in (_NUMBERED, _BULLET):
        found = [m.group(1) for m in map(pattern.match, lines) if m]
        if found:
            return [t for t in map(_clean_entry, found) if t]
    return []


def normalize_title(title: str) -> str:
    return _WS.sub(" ", title.casefold()).strip()


def damerau_levenshtein(a: str, b: str) -> int:
    """Unrestricted Damerau-Levenshtein distance, unit costs.

    Unlike the optimal-string-alignment variant, a substring may be edited
    after being transposed, so ``("ca", "abc")`` is 2, not 3.
    """
    return DamerauLevenshtein.distance(a, b)


def title_similarity(a: str, b: str) -> float:
    """``1 - DL(a, b) / max(|a|, |b|)`` over casefolded, whitespace-collapsed titles."""
    a, b = normalize_title(a), normalize_title(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - damerau_levenshtein(a, b) / longest


class TitleMatcher:
    """Catalog lookup: exact normalized hits first, bounded edit-distance scan otherwise."""

    def __init__(self, catalog: ItemCatalog, threshold: float = 0.8):
        if not len(catalog):
            raise ValueError("cannot match against an empty catalog")
        if not 0 < threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {threshold}")
        self.threshold = threshold
        self._entries = sorted(
            ((normalize_title(t), item) for item, t in catalog.titles.items()),
            key=lambda e: id_sort_key(e[1]))
        self._exact: dict[str, str] = {}
        for norm, item in self._entries:
            self._exact.setdefault(norm, item)

    def best(self, title: str) -> tuple[Optional[str], float]:
        """Best catalog item and its similarity, ignoring the threshold."""
        q = normalize_title(title)
        if q in self._exact:
            return self._exact[q], 1.0
        best_item, best_sim = None, -1.0
        lq = len(q)
        for norm, item in self._entries:
            longest = max(lq, len(norm))
            if longest == 0:
                continue
            # the length gap alone bounds the similarity from above
            if 1.0 - abs(lq - len(norm)) / longest <= best_sim:
                continue
            sim = 1.0 - damerau_levenshtein(q, norm) / longest
            if sim > best_sim:
                best_item, best_sim = item, sim
        return best_item, best_sim

    def match(self, title: str) -> Optional[str]:
        item, sim = self.best(title)
        return item if sim >= self.threshold else None


def match_title(title: str, catalog: ItemCatalog, threshold: float = 0.8) -> Optional[str]:
    return TitleMatcher(catalog, threshold).match(title)
