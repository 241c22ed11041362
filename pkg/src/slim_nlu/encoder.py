"""Word-level vocabulary and a small post-LN transformer encoder."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, InputError, OutOfRangeError
from .tensor import Tensor

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, CLS, SEP)
_MASK_NEG = -1e9


class Vocabulary:
    """Token to id map; ids 0-3 are [PAD], [UNK], [CLS], [SEP]."""

    pad_id, unk_id, cls_id, sep_id = 0, 1, 2, 3

    def __init__(self, tokens=()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {tok: i for i, tok in enumerate(self.itos)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def build(cls, records) -> Vocabulary:
        vocab = cls()
        for rec in records:
            for tok in rec.tokens:
                vocab.add(tok)
        return vocab

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token) -> bool:
        return token in self.stoi

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def save(self, path) -> None:
        Path(path).write_text("".join(tok + "\n" for tok in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> Vocabulary:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.from_list(lines)

    @classmethod
    def from_list(cls, itos) -> Vocabulary:
        if tuple(itos[:4]) != RESERVED:
            raise ConfigError(f"vocabulary must start with {RESERVED}, got {tuple(itos[:4])}")
        vocab = cls()
        for tok in itos[4:]:
            vocab.add(tok)
        return vocab


@dataclass
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    max_seq_len: int = 50
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.hidden_dim % self.num_heads:
            raise ConfigError(f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if self.max_seq_len < 3:
            raise ConfigError("max_seq_len must be at least 3")
        if self.vocab_size < len(RESERVED):
            raise ConfigError("vocab_size must cover the reserved tokens")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class Numericalized(NamedTuple):
    ids: list[int]
    mask: list[int]
    truncated: bool


def numericalize(tokens, vocab: Vocabulary, max_seq_len: int = 50, pad_to: int | None = None) -> Numericalized:
    """``[CLS] tokens [SEP]`` as ids, truncated to fit and optionally padded."""
    if not tokens:
        raise InputError("cannot numericalize an empty token list")
    keep = max_seq_len - 2
    truncated = len(tokens) > keep
    ids = [vocab.cls_id] + [vocab.lookup(t) for t in tokens[:keep]] + [vocab.sep_id]
    mask = [1] * len(ids)
    if pad_to is not None and pad_to > len(ids):
        extra = pad_to - len(ids)
        ids += [vocab.pad_id] * extra
        mask += [0] * extra
    return Numericalized(ids, mask, truncated)


class EncodedUtterance(NamedTuple):
    hidden: Tensor  # (..., L, d); row 0 is [CLS]
    attention_mask: np.ndarray
    ids: np.ndarray


def _glorot(rng, fan_in, fan_out, dtype):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


class Encoder:
    """Token + learned position embeddings followed by post-LN transformer layers."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        d, f = config.hidden_dim, config.ffn_dim
        self.params: dict[str, Tensor] = {}

        def param(name, value):
            t = Tensor(np.asarray(value, dtype=dtype), requires_grad=True, name=f"encoder.{name}")
            self.params[name] = t
            return t

        self.tok_emb = param("tok_emb", rng.normal(0.0, 0.1, size=(config.vocab_size, d)))
        self.pos_emb = param("pos_emb", rng.normal(0.0, 0.1, size=(config.max_seq_len, d)))
        self.layers = []
        for i in range(config.num_layers):
            p = f"layer{i}."
            layer = {
                "wq": param(p + "wq", _glorot(rng, d, d, dtype)),
                "bq": param(p + "bq", np.zeros(d)),
                "wk": param(p + "wk", _glorot(rng, d, d, dtype)),
                "bk": param(p + "bk", np.zeros(d)),
                "wv": param(p + "wv", _glorot(rng, d, d, dtype)),
                "bv": param(p + "bv", np.zeros(d)),
                "wo": param(p + "wo", _glorot(rng, d, d, dtype)),
                "bo": param(p + "bo", np.zeros(d)),
                "ln1_g": param(p + "ln1_g", np.ones(d)),
                "ln1_b": param(p + "ln1_b", np.zeros(d)),
                "w1": param(p + "w1", _glorot(rng, d, f, dtype)),
                "b1": param(p + "b1", np.zeros(f)),
                "w2": param(p + "w2", _glorot(rng, f, d, dtype)),
                "b2": param(p + "b2", np.zeros(d)),
                "ln2_g": param(p + "ln2_g", np.ones(d)),
                "ln2_b": param(p + "ln2_b", np.zeros(d)),
            }
            self.layers.append(layer)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def _attention(self, x, layer, key_bias, training, rng):
        cfg = self.config
        b, length, d = x.shape
        h = cfg.num_heads
        dk = d // h

        def heads(t):
            return T.transpose(T.reshape(t, (b, length, h, dk)), (0, 2, 1, 3))

        q = heads(T.linear(x, layer["wq"], layer["bq"]))
        k = heads(T.linear(x, layer["wk"], layer["bk"]))
        v = heads(T.linear(x, layer["wv"], layer["bv"]))
        scores = T.matmul(q, T.swap_last(k)) * (1.0 / math.sqrt(dk))
        scores = T.add(scores, key_bias)
        attn = T.dropout(T.softmax(scores, axis=-1), cfg.dropout_rate, rng, training)
        ctx = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (b, length, d))
        return T.linear(ctx, layer["wo"], layer["bo"])

    def encode(self, ids, attention_mask=None, training: bool = False, rng=None) -> EncodedUtterance:
        """Hidden states for ``ids`` of shape (L,) or (B, L)."""
        ids = np.asarray(ids, dtype=np.int64)
        single = ids.ndim == 1
        if single:
            ids = ids[None, :]
        mask = np.ones_like(ids) if attention_mask is None else np.asarray(attention_mask).reshape(ids.shape)
        cfg = self.config
        b, length = ids.shape
        if length > cfg.max_seq_len:
            raise OutOfRangeError(f"sequence length {length} exceeds max_seq_len {cfg.max_seq_len}")
        dtype = self.tok_emb.dtype
        key_bias = Tensor(((1.0 - mask.astype(dtype)) * _MASK_NEG)[:, None, None, :].astype(dtype))

        x = T.add(T.embedding(self.tok_emb, ids), self.pos_emb[:length])
        x = T.dropout(x, cfg.dropout_rate, rng, training)
        for layer in self.layers:
            a = T.dropout(self._attention(x, layer, key_bias, training, rng), cfg.dropout_rate, rng, training)
            x = T.layer_norm(T.add(x, a), layer["ln1_g"], layer["ln1_b"])
            f = T.linear(T.gelu(T.linear(x, layer["w1"], layer["b1"])), layer["w2"], layer["b2"])
            f = T.dropout(f, cfg.dropout_rate, rng, training)
            x = T.layer_norm(T.add(x, f), layer["ln2_g"], layer["ln2_b"])
        if single:
            x = x[0]
            mask = mask[0]
            ids = ids[0]
        return EncodedUtterance(hidden=x, attention_mask=mask, ids=ids)
