"""Keyword search over caption corpora, with subcaption splitting.

A record matches a query when, for every "with" synonym group, at least one
term occurs in the case-folded caption, and for every "without" group no
term occurs. Terms match at word-start boundaries: "mitotic" hits
"mitotic figures" but "arrow" does not hit "narrow".
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

from slideselect.container import CaptionRecord
from slideselect.errors import ValidationError


@dataclass
class KeywordQuery:
    with_groups: list = field(default_factory=list)
    without_groups: list = field(default_factory=list)

    def __post_init__(self):
        self.with_groups = [self._clean(g, "with") for g in self.with_groups]
        self.without_groups = [self._clean(g, "without") for g in self.without_groups]

    @staticmethod
    def _clean(group, kind):
        terms = [str(t).casefold().strip() for t in group]
        if not terms or any(not t for t in terms):
            raise ValidationError(f"{kind} group must be a non-empty list of non-empty terms")
        return terms


@dataclass
class SubCaption:
    parent_id: str
    subfigure_id: str  # "A".."Z", lowercase letters, or "full"
    text: str


# ---------------------------------------------------------------------------
# Subcaption splitting

_PAREN = re.compile(r"\(([A-Za-z])\)")
_LETTER_COMMA = re.compile(r"([A-Za-z]),\s+")
_WS = re.compile(r"\s+")


def _normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _find_markers(text: str):
    """Markers as (start, end, id, kind) with kind 'leading' or 'trailing'."""
    markers = []
    for m in _PAREN.finditer(text):
        after = text[m.end():].lstrip()
        kind = "trailing" if (not after or after[0] == ".") else "leading"
        markers.append((m.start(), m.end(), m.group(1), kind))
    for m in _LETTER_COMMA.finditer(text):
        # only at string start or sentence start; "acid, basic" is not a marker
        if m.start() > 0:
            before = text[: m.start()].rstrip()
            if not before.endswith((".", ";", ":")):
                continue
        markers.append((m.start(), m.end(), m.group(1), "leading"))
    markers.sort()
    # drop overlapping duplicates, keeping the earliest
    pruned = []
    last_end = -1
    for mk in markers:
        if mk[0] >= last_end:
            pruned.append(mk)
            last_end = mk[1]
    return pruned


def split_subcaptions(record: CaptionRecord) -> list[SubCaption]:
    """Split a figure caption into per-subfigure captions.

    Recognizes "A, xxx.", "(A) xxx." and "xxx (A)." marker styles. Text
    before the first leading marker is the shared supcaption and is
    prefixed to every subcaption. Without markers the full caption is
    returned under subfigure id "full".
    """
    text = record.caption
    markers = _find_markers(text)
    if not markers:
        return [SubCaption(record.id, "full", _normalize_ws(text))]

    sup = ""
    if markers[0][3] == "leading":
        sup = _normalize_ws(text[: markers[0][0]])

    out: list[SubCaption] = []
    cursor = 0
    for i, (start, end, sid, kind) in enumerate(markers):
        if kind == "leading":
            nxt = markers[i + 1][0] if i + 1 < len(markers) else len(text)
            body = text[end:nxt]
            cursor = nxt
        else:
            body = text[cursor:start]
            cursor = end
            # a trailing marker owns its sentence's closing period
            rest = text[cursor:]
            stripped = rest.lstrip()
            if stripped.startswith("."):
                body += "."
                cursor += len(rest) - len(stripped) + 1
        body = _normalize_ws(body)
        if not body and not sup:
            continue
        full = f"{sup} {body}".strip() if sup else body
        out.append(SubCaption(record.id, sid, full))
    if not out:
        return [SubCaption(record.id, "full", _normalize_ws(text))]
    return out


# ---------------------------------------------------------------------------
# Keyword search


def _term_pattern(term: str) -> re.Pattern:
    return re.compile(r"(?<![a-zA-Z])" + re.escape(term))


def _matches(caption: str, query: KeywordQuery) -> bool:
    folded = caption.casefold()
    for group in query.with_groups:
        if not any(_term_pattern(t).search(folded) for t in group):
            return False
    for group in query.without_groups:
        if any(_term_pattern(t).search(folded) for t in group):
            return False
    return True


def keyword_search(corpus, query: KeywordQuery) -> list[CaptionRecord]:
    """Records whose captions satisfy the query, in corpus order."""
    if not query.with_groups:
        raise ValidationError("query needs at least one with group")
    return [rec for rec in corpus if _matches(rec.caption, query)]


# ---------------------------------------------------------------------------
# Review / manual cleaning


def review_report(matches) -> str:
    """Plain-text id + caption table for manual screening of false hits."""
    if not matches:
        return "(no matches)\n"
    width = max(len(rec.id) for rec in matches)
    lines = [f"{rec.id:<{width}}  {rec.caption}" for rec in matches]
    return "\n".join(lines) + "\n"


def apply_exclusions(matches, exclude_ids) -> list[CaptionRecord]:
    """Drop records listed in exclude_ids; unknown ids only warn."""
    matched_ids = {rec.id for rec in matches}
    for eid in exclude_ids:
        if eid not in matched_ids:
            warnings.warn(f"exclusion id {eid!r} is not among the matches", stacklevel=2)
    excluded = set(exclude_ids)
    return [rec for rec in matches if rec.id not in excluded]
