"""SLIM: shared encoder, three heads, training loss and full inference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .data import Batch, LabelMap, UtteranceRecord, batches
from .encoder import Encoder, EncoderConfig, Vocabulary
from .errors import ConfigError, InputError
from .heads import (HeadParams, SlotIntentPrediction, decode_intents, decode_slot_intents, predict_intents,
                    predict_slot_intent, predict_slots, slot_representation)
from .objective import VARIANTS, GoldTargets, LossBreakdown, LossWeights, ablation_loss
from .spans import MAX_SLOTS, build_slot_masks, tags_to_spans
from .tensor import Tensor


class ForwardOutput(NamedTuple):
    hidden: Tensor
    y_i: Tensor  # (B, I)
    y_s: Tensor  # (B, n, T)
    slot_intent: SlotIntentPrediction | None  # (B, S, I) each


@dataclass
class Prediction:
    intents: list[str]
    tags: list[str]
    slots: list[dict]

    def to_dict(self) -> dict:
        return {"intents": self.intents, "tags": self.tags, "slots": self.slots}


def _pad_positions(masks: np.ndarray) -> np.ndarray:
    """Token-indexed masks (..., n) to hidden-row masks (..., n + 2)."""
    pad = [(0, 0)] * (masks.ndim - 1) + [(1, 1)]
    return np.pad(masks, pad)


class SlimModel:
    def __init__(self, encoder_config: EncoderConfig, vocab: Vocabulary, intent_map: LabelMap, tag_map: LabelMap,
                 variant: str = "full", head_dropout: float = 0.2, max_slots: int = MAX_SLOTS,
                 threshold: float = 0.5, si_mode: str = "direct", seed: int = 0, dtype=np.float32):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if encoder_config.vocab_size != len(vocab):
            raise ConfigError(f"encoder vocab_size {encoder_config.vocab_size} != vocabulary size {len(vocab)}")
        self.config = encoder_config
        self.vocab = vocab
        self.intent_map = intent_map
        self.tag_map = tag_map
        self.variant = variant
        self.head_dropout = head_dropout
        self.max_slots = max_slots
        self.threshold = threshold
        self.si_mode = si_mode
        self.dtype = np.dtype(dtype).type
        init_rng = np.random.default_rng(seed)
        self.encoder = Encoder(encoder_config, init_rng, dtype=self.dtype)
        self.heads = HeadParams(encoder_config.hidden_dim, len(intent_map), len(tag_map), init_rng,
                                dtype=self.dtype, slot_intent=variant != "no_slot_intent")

    def named_parameters(self) -> dict[str, Tensor]:
        named = {f"encoder.{k}": v for k, v in self.encoder.params.items()}
        named.update({f"heads.{k}": v for k, v in self.heads.named_parameters().items()})
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    # -- forward ---------------------------------------------------------------
    def forward(self, batch: Batch, slot_masks=None, training: bool = False, rng=None) -> ForwardOutput:
        """Run encoder and heads.  ``slot_masks`` (B, S, n) default to the batch's gold masks."""
        enc = self.encoder.encode(batch.ids, batch.attention_mask, training=training, rng=rng)
        h = enc.hidden
        h_cls = h[:, 0, :]
        rate = self.head_dropout
        y_i = predict_intents(h_cls, self.heads, rate, rng, training)
        y_s = predict_slots(h, self.heads, rate, rng, training)
        si = None
        if self.heads.has_slot_intent:
            masks = batch.slot_masks if slot_masks is None else slot_masks
            r = slot_representation(h, _pad_positions(masks), batch.attention_mask)
            si = predict_slot_intent(h_cls, r, y_i, self.heads, rate, rng, training)
        return ForwardOutput(h, y_i, y_s, si)

    def loss(self, batch: Batch, weights: LossWeights = LossWeights(), training: bool = False,
             rng=None) -> LossBreakdown:
        """Joint loss with the slot-intent head fed gold spans."""
        out = self.forward(batch, training=training, rng=rng)
        gold = self.gold_targets(batch)
        y_l = out.slot_intent.unconstrained if out.slot_intent else None
        y_p = out.slot_intent.constrained if out.slot_intent else None
        return ablation_loss(self.variant, out.y_i, out.y_s, y_l, y_p, gold, weights, self.si_mode)

    def gold_targets(self, batch: Batch) -> GoldTargets:
        return GoldTargets(batch.intents.astype(self.dtype), batch.tags, batch.tag_mask.astype(self.dtype),
                           batch.slot_intents, batch.slot_mask.astype(self.dtype))

    # -- inference ---------------------------------------------------------------
    def predict_batch(self, batch: Batch) -> list[Prediction]:
        """Full inference: decoded intents, argmax tags, predicted spans and their intents."""
        with T.no_tape():
            enc = self.encoder.encode(batch.ids, batch.attention_mask)
            h = enc.hidden
            h_cls = h[:, 0, :]
            y_i = predict_intents(h_cls, self.heads).data
            tag_ids = predict_slots(h, self.heads).data.argmax(axis=-1)
            lengths = batch.lengths
            n = tag_ids.shape[1]
            decoded, tag_seqs, spans_all = [], [], []
            pred_masks = np.zeros((len(batch), self.max_slots, n), dtype=self.dtype)
            for row in range(len(batch)):
                intents = decode_intents(y_i[row], self.threshold)
                tags = [self.tag_map.labels[t] for t in tag_ids[row, :lengths[row]]]
                spans = tags_to_spans(tags)
                pred_masks[row] = build_slot_masks(spans, n, self.max_slots).masks
                decoded.append(intents)
                tag_seqs.append(tags)
                spans_all.append(spans)
            slot_scores = None
            if self.heads.has_slot_intent and any(spans_all):
                r = slot_representation(h, _pad_positions(pred_masks), batch.attention_mask)
                si = predict_slot_intent(h_cls, r, Tensor(y_i), self.heads)
                slot_scores = (si.unconstrained if self.variant == "no_constraint" else si.constrained).data

        preds = []
        labels = self.intent_map.labels
        for row in range(len(batch)):
            intents = decoded[row]
            fallback = int(np.argmax(y_i[row]))
            spans = spans_all[row]
            kept = min(len(spans), self.max_slots)
            slot_ids = [fallback] * len(spans)
            if slot_scores is not None and kept:
                slot_ids[:kept] = decode_slot_intents(slot_scores[row, :kept], intents)
            slots = [{"start": s.start, "end": s.end, "type": s.slot_type, "intent": labels[i]}
                     for s, i in zip(spans, slot_ids)]
            preds.append(Prediction([labels[i] for i in intents], tag_seqs[row], slots))
        return preds

    def predict(self, records, batch_size: int = 64) -> list[Prediction]:
        preds = []
        for batch in batches(records, batch_size, self.vocab, self.intent_map, self.tag_map,
                             self.max_slots, self.config.max_seq_len, with_labels=False):
            preds.extend(self.predict_batch(batch))
        return preds

    def predict_tokens(self, tokens) -> Prediction:
        """Predict for raw tokens; tokens past ``max_seq_len - 2`` are tagged O."""
        tokens = list(tokens)
        if not tokens:
            raise InputError("cannot predict for an empty utterance")
        rec = UtteranceRecord(tokens, ["O"] * len(tokens), [self.intent_map.labels[0]], [])
        pred = self.predict([rec])[0]
        pred.tags += ["O"] * (len(tokens) - len(pred.tags))
        return pred
