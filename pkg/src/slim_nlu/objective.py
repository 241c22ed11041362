"""Joint training objective: weighted ID + SF + slot-intent losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, ValidationError
from .tensor import Tensor

VARIANTS = ("full", "no_slot_intent", "no_constraint")
SI_MODES = ("direct", "renormalize")


@dataclass(frozen=True)
class LossWeights:
    w_id: float = 1.0
    w_sf: float = 2.0
    w_si: float = 1.0

    def __post_init__(self):
        values = (self.w_id, self.w_sf, self.w_si)
        if min(values) < 0 or max(values) <= 0:
            raise ConfigError(f"loss weights must be >= 0 with at least one > 0, got {values}")


class LossBreakdown(NamedTuple):
    id_loss: Tensor
    sf_loss: Tensor
    si_loss: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {name: getattr(self, name).item() for name in self._fields}


@dataclass
class GoldTargets:
    """Batched gold labels.

    intents: (B, I) multi-hot; tags/tag_mask: (B, n); slot_intents/slot_mask: (B, S).
    """

    intents: np.ndarray
    tags: np.ndarray
    tag_mask: np.ndarray
    slot_intents: np.ndarray
    slot_mask: np.ndarray

    def validate(self) -> None:
        picked = np.take_along_axis(self.intents, self.slot_intents, axis=-1)
        bad = (self.slot_mask > 0) & (picked <= 0)
        if np.any(bad):
            row = int(np.argwhere(bad)[0][0])
            raise ValidationError(f"gold slot intent not among the utterance intents (batch row {row})",
                                  field="slot_intents")


def _si_term(probs: Tensor, gold: GoldTargets, mode: str) -> Tensor:
    if mode == "renormalize":
        probs = T.div(probs, T.sum_(probs, axis=-1, keepdims=True))
    elif mode != "direct":
        raise ConfigError(f"unknown slot-intent loss mode {mode!r}")
    return T.nll_loss(probs, gold.slot_intents, gold.slot_mask)


def joint_loss(y_i: Tensor, y_s: Tensor, y_p: Tensor | None, gold: GoldTargets,
               weights: LossWeights = LossWeights(), si_mode: str = "direct") -> LossBreakdown:
    """``w_id * BCE(y_i) + w_sf * CE(y_s) + w_si * NLL(y_p)``.

    Component means are taken per utterance and then over the batch; an
    utterance without slots contributes 0 to the slot-intent term.  ``y_p``
    of ``None`` drops the slot-intent term.
    """
    gold.validate()
    id_loss = T.bce_loss(y_i, gold.intents)
    sf_loss = T.ce_loss(y_s, gold.tags, gold.tag_mask)
    if y_p is None:
        si_loss = Tensor(np.zeros((), dtype=y_i.dtype))
    else:
        si_loss = _si_term(y_p, gold, si_mode)
    total = id_loss * weights.w_id + sf_loss * weights.w_sf
    if y_p is not None:
        total = total + si_loss * weights.w_si
    return LossBreakdown(id_loss, sf_loss, si_loss, total)


def ablation_loss(variant: str, y_i: Tensor, y_s: Tensor, y_l: Tensor | None, y_p: Tensor | None,
                  gold: GoldTargets, weights: LossWeights = LossWeights(), si_mode: str = "direct") -> LossBreakdown:
    """Loss for one of the ablation variants (see ``VARIANTS``)."""
    if variant == "full":
        return joint_loss(y_i, y_s, y_p, gold, weights, si_mode)
    if variant == "no_constraint":
        return joint_loss(y_i, y_s, y_l, gold, weights, si_mode)
    if variant == "no_slot_intent":
        return joint_loss(y_i, y_s, None, gold, weights, si_mode)
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
