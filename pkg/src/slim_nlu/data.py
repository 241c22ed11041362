"""Dataset records, JSON Lines I/O, validation and batching."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import Vocabulary, numericalize
from .errors import FormatError, MappingError, ValidationError
from .spans import MAX_SLOTS, SlotSpan, build_slot_masks, spans_to_tags, tags_to_spans

logger = logging.getLogger(__name__)


@dataclass
class UtteranceRecord:
    tokens: list[str]
    tags: list[str]
    intents: list[str]
    slot_intents: list[str] = field(default_factory=list)

    def spans(self) -> list[SlotSpan]:
        return [SlotSpan(s.start, s.end, s.slot_type, intent)
                for s, intent in zip(tags_to_spans(self.tags), self.slot_intents)]

    def validate(self, line: int | None = None) -> None:
        if not self.tokens:
            raise ValidationError("utterance has no tokens", line, "tokens")
        if len(self.tags) != len(self.tokens):
            raise ValidationError(f"{len(self.tags)} tags for {len(self.tokens)} tokens", line, "tags")
        if not self.intents:
            raise ValidationError("utterance needs at least one intent", line, "intents")
        if len(set(self.intents)) != len(self.intents):
            raise ValidationError("duplicate intent labels", line, "intents")
        try:
            spans = tags_to_spans(self.tags)
        except FormatError as exc:
            raise ValidationError(str(exc), line, "tags") from None
        if len(self.slot_intents) != len(spans):
            raise ValidationError(f"{len(self.slot_intents)} slot intents for {len(spans)} slots",
                                  line, "slot_intents")
        for intent in self.slot_intents:
            if intent not in self.intents:
                raise ValidationError(f"slot intent {intent!r} is not an utterance intent", line, "slot_intents")

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "tags": self.tags, "intents": self.intents,
                "slot_intents": self.slot_intents}


_KEYS = ("tokens", "tags", "intents", "slot_intents")


def parse_record(obj, line: int | None = None) -> UtteranceRecord:
    if not isinstance(obj, dict):
        raise ValidationError("expected a JSON object", line)
    for key in _KEYS:
        if key not in obj:
            raise ValidationError("missing key", line, key)
        value = obj[key]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ValidationError("expected an array of strings", line, key)
    rec = UtteranceRecord(*(list(obj[k]) for k in _KEYS))
    rec.validate(line)
    return rec


def load(path) -> list[UtteranceRecord]:
    """Read and validate a JSON Lines dataset.  Blank lines are skipped."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"malformed JSON ({exc.msg})", lineno) from None
            records.append(parse_record(obj, lineno))
    return records


def save(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def truncate(record: UtteranceRecord, max_tokens: int) -> tuple[UtteranceRecord, bool]:
    """Keep the first ``max_tokens`` tokens; tags follow, spans fully cut off are dropped."""
    if len(record.tokens) <= max_tokens:
        return record, False
    spans = record.spans()
    kept = [s for s in spans if s.start < max_tokens]
    tags = spans_to_tags([SlotSpan(s.start, min(s.end, max_tokens), s.slot_type) for s in kept], max_tokens)
    return UtteranceRecord(record.tokens[:max_tokens], tags, list(record.intents),
                           [s.intent for s in kept]), True


class LabelMap:
    """Ordered label inventory; line number in the saved file is the id."""

    def __init__(self, labels):
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise FormatError("duplicate labels in inventory")

    @classmethod
    def from_records(cls, records, kind: str) -> LabelMap:
        seen = set()
        for rec in records:
            seen.update(rec.intents if kind == "intents" else rec.tags)
        labels = sorted(seen)
        if kind == "tags":
            labels = ["O"] + [lab for lab in labels if lab != "O"]
        return cls(labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise MappingError(f"label {label!r} is not in the inventory") from None

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelMap) and self.labels == other.labels

    def save(self, path) -> None:
        Path(path).write_text("".join(lab + "\n" for lab in self.labels), encoding="utf-8")

    @classmethod
    def load(cls, path) -> LabelMap:
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


@dataclass
class Batch:
    ids: np.ndarray  # (B, L) with L = n + 2
    attention_mask: np.ndarray  # (B, L)
    tags: np.ndarray  # (B, n)
    tag_mask: np.ndarray  # (B, n)
    intents: np.ndarray  # (B, I) multi-hot
    slot_masks: np.ndarray  # (B, S, n)
    slot_intents: np.ndarray  # (B, S)
    slot_mask: np.ndarray  # (B, S)
    records: list[UtteranceRecord]
    overflow: int = 0  # slots dropped beyond max_slots

    def __len__(self) -> int:
        return len(self.records)

    @property
    def lengths(self) -> np.ndarray:
        return self.tag_mask.sum(axis=1).astype(int)


def make_batch(records, vocab: Vocabulary, intent_map: LabelMap, tag_map: LabelMap,
               max_slots: int = MAX_SLOTS, max_seq_len: int = 50, with_labels: bool = True) -> Batch:
    """Pad ``records`` into arrays; ``with_labels=False`` fills only ids and masks."""
    records = [truncate(r, max_seq_len - 2)[0] for r in records]
    n = max(len(r.tokens) for r in records)
    length = n + 2
    b = len(records)
    ids = np.zeros((b, length), dtype=np.int64)
    att = np.zeros((b, length), dtype=np.float32)
    tags = np.zeros((b, n), dtype=np.int64)
    tag_mask = np.zeros((b, n), dtype=np.float32)
    intents = np.zeros((b, len(intent_map)), dtype=np.float32)
    slot_masks = np.zeros((b, max_slots, n), dtype=np.float32)
    slot_intents = np.zeros((b, max_slots), dtype=np.int64)
    slot_mask = np.zeros((b, max_slots), dtype=np.float32)
    overflow = 0
    for row, rec in enumerate(records):
        num = numericalize(rec.tokens, vocab, max_seq_len, pad_to=length)
        ids[row] = num.ids
        att[row] = num.mask
        k = len(rec.tokens)
        tag_mask[row, :k] = 1.0
        if not with_labels:
            continue
        tags[row, :k] = [tag_map[t] for t in rec.tags]
        for intent in rec.intents:
            intents[row, intent_map[intent]] = 1.0
        spans = rec.spans()
        masks = build_slot_masks(spans, n, max_slots)
        overflow += masks.overflow
        slot_masks[row] = masks.masks
        for m, span in enumerate(masks.spans):
            slot_intents[row, m] = intent_map[span.intent]
            slot_mask[row, m] = 1.0
    if overflow:
        logger.debug("%d slot(s) beyond max_slots=%d dropped from the slot-intent loss", overflow, max_slots)
    return Batch(ids, att, tags, tag_mask, intents, slot_masks, slot_intents, slot_mask, records, overflow)


def batches(records, batch_size: int, vocab: Vocabulary, intent_map: LabelMap, tag_map: LabelMap,
            max_slots: int = MAX_SLOTS, max_seq_len: int = 50, rng: np.random.Generator | None = None,
            with_labels: bool = True):
    """Yield batches in order, or shuffled with ``rng``."""
    order = np.arange(len(records))
    if rng is not None:
        order = rng.permutation(len(records))
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start:start + batch_size]]
        yield make_batch(chunk, vocab, intent_map, tag_map, max_slots, max_seq_len, with_labels)


def unbatch(batch: Batch, vocab: Vocabulary, intent_map: LabelMap, tag_map: LabelMap) -> list[UtteranceRecord]:
    """Rebuild records from the array fields of ``batch``."""
    out = []
    for row in range(len(batch)):
        k = int(batch.tag_mask[row].sum())
        tokens = [vocab.token(int(i)) for i in batch.ids[row, 1:k + 1]]
        tags = [tag_map.labels[int(t)] for t in batch.tags[row, :k]]
        intents = [intent_map.labels[i] for i in np.flatnonzero(batch.intents[row])]
        slots = int(batch.slot_mask[row].sum())
        slot_intents = [intent_map.labels[int(i)] for i in batch.slot_intents[row, :slots]]
        out.append(UtteranceRecord(tokens, tags, intents, slot_intents))
    return out
