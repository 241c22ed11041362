"""IOB tag codec, slot-span extraction and fixed-size slot masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError

logger = logging.getLogger(__name__)

MAX_SLOTS = 6


@dataclass(frozen=True)
class SlotSpan:
    """Tokens ``[start, end)`` forming one slot of type ``slot_type``."""

    start: int
    end: int
    slot_type: str
    intent: str | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ContractError(f"invalid span bounds [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass
class SlotMaskSet:
    masks: np.ndarray  # (max_slots, n), 0/1
    count: int
    overflow: int = 0
    spans: list[SlotSpan] = field(default_factory=list)


def _parse_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BI":
        return tag[0], tag[2:]
    raise FormatError(f"not an IOB tag: {tag!r}")


def tags_to_spans(tags) -> list[SlotSpan]:
    """Extract maximal slot spans from an IOB sequence.

    An ``I-x`` that does not continue a span of type ``x`` opens a new span.
    """
    spans = []
    start = kind = None
    for i, tag in enumerate(tags):
        prefix, slot = _parse_tag(tag)
        continues = prefix == "I" and kind == slot
        if kind is not None and not continues:
            spans.append(SlotSpan(start, i, kind))
            kind = None
        if prefix != "O" and not continues:
            start, kind = i, slot
    if kind is not None:
        spans.append(SlotSpan(start, len(tags), kind))
    return spans


def spans_to_tags(spans, n: int) -> list[str]:
    tags = ["O"] * n
    last_end = 0
    for span in sorted(spans, key=lambda s: s.start):
        if span.start < last_end:
            raise ContractError(f"overlapping spans at token {span.start}")
        if span.end > n:
            raise ContractError(f"span [{span.start}, {span.end}) exceeds length {n}")
        tags[span.start] = f"B-{span.slot_type}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.slot_type}"
        last_end = span.end
    return tags


def build_slot_masks(spans, n: int, max_slots: int = MAX_SLOTS) -> SlotMaskSet:
    """One 0/1 row per span (first ``max_slots`` in order), zero rows as padding."""
    masks = np.zeros((max_slots, n), dtype=np.float32)
    kept = list(spans)[:max_slots]
    for row, span in enumerate(kept):
        masks[row, span.start:span.end] = 1.0
    overflow = max(len(spans) - max_slots, 0)
    if overflow:
        logger.debug("utterance has %d slots; %d beyond max_slots=%d dropped", len(spans), overflow, max_slots)
    return SlotMaskSet(masks=masks, count=len(kept), overflow=overflow, spans=kept)
