"""Intent, slot and slot-intent classifiers with intent-constrained attention."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor


class HeadParams:
    """Output-layer weights.  Matrices are stored (out, in) and applied as ``x @ W.T + b``.

    ``w_l``/``b_l`` are absent when the slot-intent classifier is disabled.
    """

    def __init__(self, hidden_dim, num_intents, num_tags, rng=None, dtype=np.float32, slot_intent=True):
        rng = np.random.default_rng(0) if rng is None else rng
        self.hidden_dim = hidden_dim
        self.num_intents = num_intents
        self.num_tags = num_tags

        def weight(name, rows, cols):
            bound = math.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype), requires_grad=True, name=name)

        def bias(name, n):
            return Tensor(np.zeros(n, dtype=dtype), requires_grad=True, name=name)

        self.w_i = weight("heads.w_i", num_intents, hidden_dim)
        self.b_i = bias("heads.b_i", num_intents)
        self.w_s = weight("heads.w_s", num_tags, hidden_dim)
        self.b_s = bias("heads.b_s", num_tags)
        self.w_l = weight("heads.w_l", num_intents, 2 * hidden_dim) if slot_intent else None
        self.b_l = bias("heads.b_l", num_intents) if slot_intent else None

    @property
    def has_slot_intent(self) -> bool:
        return self.w_l is not None

    def named_parameters(self) -> dict[str, Tensor]:
        named = {"w_i": self.w_i, "b_i": self.b_i, "w_s": self.w_s, "b_s": self.b_s}
        if self.has_slot_intent:
            named.update(w_l=self.w_l, b_l=self.b_l)
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


class SlotIntentPrediction(NamedTuple):
    unconstrained: Tensor  # y^l, softmax over intents
    constrained: Tensor  # y^p = y^i * y^l


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.shape[-1] != w.shape[1]:
        raise DimensionError(f"input width {x.shape[-1]} does not match weight {w.shape}")
    return T.add(T.matmul(x, T.swap_last(w)), b)


def predict_intents(h_cls: Tensor, params: HeadParams, dropout_rate=0.0, rng=None, training=False) -> Tensor:
    """Independent per-intent probabilities ``sigmoid(W_i h_cls + b_i)``."""
    x = T.dropout(h_cls, dropout_rate, rng, training)
    return T.sigmoid(_affine(x, params.w_i, params.b_i))


def predict_slots(h: Tensor, params: HeadParams, dropout_rate=0.0, rng=None, training=False) -> Tensor:
    """Tag distributions for token rows of ``h`` ((n+2) x d or batched).

    Row 0 ([CLS]) and the last row are dropped; for padded batches the last
    row is the [SEP] of the longest utterance and shorter rows are masked by
    the caller.
    """
    tokens = h[..., 1:h.shape[-2] - 1, :]
    x = T.dropout(tokens, dropout_rate, rng, training)
    return T.softmax(_affine(x, params.w_s, params.b_s), axis=-1)


def slot_representation(h: Tensor, slot_mask, attention_mask=None) -> Tensor:
    """Mean of the hidden rows covered by ``slot_mask`` (zero for padding slots).

    ``slot_mask`` is indexed like the rows of ``h`` (including [CLS]/[SEP]);
    it may hold several masks, (..., S, L).
    """
    m = np.asarray(slot_mask)
    length = h.shape[-2]
    if m.shape[-1] != length:
        raise DimensionError(f"slot mask length {m.shape[-1]} does not match {length} hidden rows")
    if attention_mask is None:
        attention_mask = np.ones(h.shape[:-1])
    att = np.asarray(attention_mask)
    allowed = att.astype(bool).copy()
    allowed[..., 0] = False
    last = att.sum(axis=-1).astype(int) - 1
    np.put_along_axis(allowed, np.asarray(last)[..., None], False, axis=-1)
    allowed_b = allowed[..., None, :] if m.ndim == att.ndim + 1 else allowed
    if np.any((m != 0) & ~allowed_b):
        raise ContractError("slot mask covers [CLS], [SEP] or padding positions")
    return T.masked_mean(h, m)


def predict_slot_intent(h_cls: Tensor, r: Tensor, y_i: Tensor, params: HeadParams,
                        dropout_rate=0.0, rng=None, training=False) -> SlotIntentPrediction:
    """Unconstrained ``softmax(W_l [h_cls | r] + b_l)`` and its product with ``y_i``.

    ``r`` may carry a slot axis ((..., S, d)); ``h_cls`` and ``y_i`` are
    broadcast along it.
    """
    if not params.has_slot_intent:
        raise ContractError("slot-intent classifier is disabled for these parameters")
    if r.ndim == h_cls.ndim + 1:
        h_cls = T.expand(T.reshape(h_cls, h_cls.shape[:-1] + (1, h_cls.shape[-1])), r.shape)
        y_i = T.expand(T.reshape(y_i, y_i.shape[:-1] + (1, y_i.shape[-1])), r.shape[:-1] + (y_i.shape[-1],))
    x = T.dropout(T.concat(h_cls, r, axis=-1), dropout_rate, rng, training)
    y_l = T.softmax(_affine(x, params.w_l, params.b_l), axis=-1)
    return SlotIntentPrediction(y_l, T.hadamard(y_i, y_l))


def decode_intents(y_i, threshold: float = 0.5) -> list[int]:
    """Intent ids with probability above ``threshold``; argmax if none is."""
    probs = np.asarray(y_i.data if isinstance(y_i, Tensor) else y_i, dtype=np.float64).reshape(-1)
    if not 0.0 < threshold < 1.0:
        raise ContractError(f"threshold must lie in (0, 1), got {threshold}")
    chosen = np.flatnonzero(probs > threshold).tolist()
    return chosen if chosen else [int(np.argmax(probs))]


def decode_slot_intents(y_p, intents) -> list[int]:
    """Per slot, the highest-scoring intent among the decoded utterance intents."""
    allowed = sorted(set(int(i) for i in intents))
    if not allowed:
        raise ContractError("decode_slot_intents needs a non-empty intent set")
    out = []
    for row in y_p:
        row = np.asarray(row.data if isinstance(row, Tensor) else row).reshape(-1)
        out.append(allowed[int(np.argmax(row[allowed]))])
    return out
