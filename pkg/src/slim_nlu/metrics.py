"""Slot F1, intent accuracy and semantic frame accuracy."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

from .errors import ContractError
from .spans import tags_to_spans

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    slot_f1: float
    slot_precision: float
    slot_recall: float
    intent_acc: float
    sefr_acc: float
    true_positives: int
    predicted_spans: int
    gold_spans: int
    utterances: int

    def to_dict(self) -> dict:
        return asdict(self)


def _span_keys(tags):
    return {(s.start, s.end, s.slot_type) for s in tags_to_spans(tags)}


def slot_counts(pred_tags, gold_tags) -> tuple[int, int, int]:
    """(true positives, predicted spans, gold spans), micro-summed."""
    if len(pred_tags) != len(gold_tags):
        raise ContractError(f"{len(pred_tags)} predicted vs {len(gold_tags)} gold sequences")
    tp = n_pred = n_gold = 0
    for pred, gold in zip(pred_tags, gold_tags):
        if len(pred) != len(gold):
            raise ContractError(f"tag sequence lengths differ: {len(pred)} vs {len(gold)}")
        p, g = _span_keys(pred), _span_keys(gold)
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    return tp, n_pred, n_gold


def slot_f1(pred_tags, gold_tags) -> tuple[float, float, float]:
    """Micro precision, recall and F1 over exactly matching (start, end, type) spans."""
    tp, n_pred, n_gold = slot_counts(pred_tags, gold_tags)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def intent_accuracy(pred_intents, gold_intents, mode: str = "exact", labels=None) -> float:
    """Fraction of utterances whose predicted intent set equals the gold set.

    ``mode="per_label"`` instead scores every (utterance, label) decision
    over the inventory ``labels``.
    """
    if len(pred_intents) != len(gold_intents):
        raise ContractError("prediction and gold counts differ")
    if not gold_intents:
        return 0.0
    if mode == "per_label":
        if not labels:
            raise ContractError("per_label intent accuracy needs the label inventory")
        hits = sum((lab in set(p)) == (lab in set(g)) for p, g in zip(pred_intents, gold_intents) for lab in labels)
        return hits / (len(gold_intents) * len(labels))
    if mode != "exact":
        raise ContractError(f"unknown intent accuracy mode {mode!r}")
    hits = sum(set(p) == set(g) for p, g in zip(pred_intents, gold_intents))
    return hits / len(gold_intents)


def semantic_frame_accuracy(pred_intents, pred_tags, gold_intents, gold_tags) -> float:
    """Fraction of utterances with the exact intent set and the exact tag sequence."""
    if not (len(pred_intents) == len(pred_tags) == len(gold_intents) == len(gold_tags)):
        raise ContractError("prediction and gold counts differ")
    if not gold_intents:
        return 0.0
    hits = sum(set(pi) == set(gi) and list(pt) == list(gt)
               for pi, pt, gi, gt in zip(pred_intents, pred_tags, gold_intents, gold_tags))
    return hits / len(gold_intents)


def evaluate(pred_intents, pred_tags, gold_intents, gold_tags) -> EvalReport:
    if not gold_intents:
        logger.warning("evaluating an empty dataset; all metrics are 0")
    tp, n_pred, n_gold = slot_counts(pred_tags, gold_tags)
    precision, recall, f1 = slot_f1(pred_tags, gold_tags)
    return EvalReport(
        slot_f1=f1,
        slot_precision=precision,
        slot_recall=recall,
        intent_acc=intent_accuracy(pred_intents, gold_intents),
        sefr_acc=semantic_frame_accuracy(pred_intents, pred_tags, gold_intents, gold_tags),
        true_positives=tp,
        predicted_spans=n_pred,
        gold_spans=n_gold,
        utterances=len(gold_intents),
    )
