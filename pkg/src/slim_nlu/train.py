"""Training with early stopping, evaluation and learning-curve output."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import data as D
from .checkpoint import save_checkpoint
from .encoder import EncoderConfig, Vocabulary
from .errors import ConfigError, DivergenceError, MappingError
from .metrics import EvalReport, evaluate
from .model import SlimModel
from .objective import SI_MODES, VARIANTS, LossWeights
from .tensor import Adam, Tape

logger = logging.getLogger(__name__)

CURVE_FIELDS = ("epoch", "split", "slot_f1", "intent_acc", "sefr_acc", "id_loss", "sf_loss", "si_loss")
EVAL_BATCH_SIZE = 64


@dataclass
class RunConfig:
    train_path: str | None = None
    valid_path: str | None = None
    test_path: str | None = None
    out_dir: str | None = None
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    max_seq_len: int = 50
    encoder_dropout: float = 0.1
    w_id: float = 1.0
    w_sf: float = 2.0
    w_si: float = 1.0
    lr: float = 2e-3
    dropout: float = 0.2
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 3
    threshold: float = 0.5
    max_slots: int = 6
    variant: str = "full"
    si_mode: str = "direct"
    seed: int = 0

    def __post_init__(self):
        self.variant = self.variant.replace("-", "_")
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.si_mode not in SI_MODES:
            raise ConfigError(f"si_mode must be one of {SI_MODES}, got {self.si_mode!r}")
        if self.max_epochs < 1 or self.patience < 1 or self.patience > self.max_epochs:
            raise ConfigError("need 1 <= patience <= max_epochs")
        if self.lr <= 0 or self.batch_size < 1 or self.max_slots < 1:
            raise ConfigError("lr, batch_size and max_slots must be positive")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.encoder_dropout < 1.0:
            raise ConfigError("dropout rates must lie in [0, 1)")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        LossWeights(self.w_id, self.w_sf, self.w_si)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.w_id, self.w_sf, self.w_si)

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(vocab_size=vocab_size, num_layers=self.num_layers, hidden_dim=self.hidden_dim,
                             num_heads=self.num_heads, ffn_dim=self.ffn_dim, max_seq_len=self.max_seq_len,
                             dropout_rate=self.encoder_dropout)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> RunConfig:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read run config {path}: {exc}") from None
        return cls.from_dict(obj)


@dataclass
class CurveRow:
    epoch: int
    split: str
    slot_f1: float
    intent_acc: float
    sefr_acc: float
    id_loss: float
    sf_loss: float
    si_loss: float


@dataclass
class TrainResult:
    model: SlimModel
    curves: list[CurveRow]
    best_epoch: int
    best_report: EvalReport
    epochs_run: int
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def evaluate_model(model: SlimModel, records) -> EvalReport:
    """Full-inference metrics: predicted intents, tags, spans and slot intents."""
    preds = model.predict(records, batch_size=EVAL_BATCH_SIZE) if records else []
    gold = [D.truncate(r, model.config.max_seq_len - 2)[0] for r in records]
    return evaluate([p.intents for p in preds], [p.tags for p in preds],
                    [r.intents for r in gold], [r.tags for r in gold])


def build_model(config: RunConfig, train_records, dtype=np.float32, seed: int | None = None) -> SlimModel:
    vocab = Vocabulary.build(train_records)
    intent_map = D.LabelMap.from_records(train_records, "intents")
    tag_map = D.LabelMap.from_records(train_records, "tags")
    return SlimModel(config.encoder_config(len(vocab)), vocab, intent_map, tag_map, variant=config.variant,
                     head_dropout=config.dropout, max_slots=config.max_slots, threshold=config.threshold,
                     si_mode=config.si_mode, seed=config.seed if seed is None else seed, dtype=dtype)


def check_known_labels(model: SlimModel, records, split: str) -> None:
    """Raise ``MappingError`` if ``records`` use an intent or tag the model does not know."""
    for i, rec in enumerate(records, start=1):
        for lab in rec.intents:
            if lab not in model.intent_map.index:
                raise MappingError(f"{split} record {i}: intent {lab!r} is not in the model's inventory")
        for lab in rec.tags:
            if lab not in model.tag_map.index:
                raise MappingError(f"{split} record {i}: tag {lab!r} is not in the model's inventory")


def fit(config: RunConfig, train_records, valid_records, on_epoch=None) -> TrainResult:
    """Train with gold-span slot-intent supervision, keeping the best validation-SeFr weights.

    ``on_epoch`` receives each curve row; returning True ends training.
    """
    if not train_records:
        raise ConfigError("training set is empty")
    init_seq, order_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(3)
    model = build_model(config, train_records, seed=int(init_seq.generate_state(1)[0]))
    check_known_labels(model, valid_records, "valid")
    order_rng = np.random.default_rng(order_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    params = model.parameters()
    optimizer = Adam(params, lr=config.lr)
    weights = config.weights

    curves: list[CurveRow] = []
    best_sefr = -math.inf
    best_epoch = 0
    best_state = None
    best_report = None
    stale = 0
    start = time.perf_counter()
    dropped = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        sums = np.zeros(3)
        count = 0
        for step, batch in enumerate(D.batches(train_records, config.batch_size, model.vocab, model.intent_map,
                                               model.tag_map, config.max_slots, config.max_seq_len,
                                               rng=order_rng)):
            dropped += batch.overflow if epoch == 1 else 0
            with Tape() as tape:
                losses = model.loss(batch, weights, training=True, rng=dropout_rng)
                total = losses.total.item()
                if not math.isfinite(total):
                    raise DivergenceError(f"non-finite loss {total} at epoch {epoch}, batch {step}")
                tape.backward(losses.total)
            optimizer.step()
            sums += [losses.id_loss.item(), losses.sf_loss.item(), losses.si_loss.item()]
            count += 1
        if epoch == 1 and dropped:
            logger.warning("%d training slot(s) exceed max_slots=%d and are left out of the slot-intent loss",
                           dropped, config.max_slots)
        report = evaluate_model(model, valid_records)
        means = sums / max(count, 1)
        row = CurveRow(epoch, "valid", report.slot_f1, report.intent_acc, report.sefr_acc, *map(float, means))
        curves.append(row)
        logger.info("epoch %d  loss id=%.4f sf=%.4f si=%.4f  valid slot_f1=%.4f intent=%.4f sefr=%.4f",
                    epoch, *means, report.slot_f1, report.intent_acc, report.sefr_acc)
        if report.sefr_acc > best_sefr:
            best_sefr, best_epoch, best_report = report.sefr_acc, epoch, report
            best_state = [p.data.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop after epoch %d (best epoch %d)", epoch, best_epoch)
                break
        if on_epoch is not None and on_epoch(row):
            break
    for p, saved in zip(params, best_state):
        p.data = saved
    return TrainResult(model, curves, best_epoch, best_report, epoch, time.perf_counter() - start)


def write_curves(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_FIELDS)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(row).values()])


def read_curves(path) -> list[CurveRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [CurveRow(int(r["epoch"]), r["split"], *(float(r[k]) for k in CURVE_FIELDS[2:])) for r in reader]


def run_training(config: RunConfig) -> dict:
    """Load data, train, and write model.bin, curves.csv, report.json and inventories to ``out_dir``."""
    if not (config.train_path and config.valid_path and config.out_dir):
        raise ConfigError("train_path, valid_path and out_dir are required")
    train_records = D.load(config.train_path)
    valid_records = D.load(config.valid_path)
    test_records = D.load(config.test_path) if config.test_path else None
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    result = fit(config, train_records, valid_records)
    model = result.model
    model.vocab.save(out / "vocab.txt")
    model.intent_map.save(out / "intents.txt")
    model.tag_map.save(out / "tags.txt")
    write_curves(result.curves, out / "curves.csv")
    meta = {"best_epoch": result.best_epoch, "best_valid_sefr": result.best_report.sefr_acc,
            "epochs_run": result.epochs_run, "seed": config.seed}
    save_checkpoint(model, out / "model.bin", meta)
    report = {"best_epoch": result.best_epoch, "epochs_run": result.epochs_run,
              "valid": result.best_report.to_dict()}
    if test_records is not None:
        report["test"] = evaluate_model(model, test_records).to_dict()
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return report
