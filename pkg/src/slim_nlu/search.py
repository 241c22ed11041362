"""Randomized hyperparameter search over dropout, learning rate and loss weights."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, SearchError
from .train import RunConfig, run_training

logger = logging.getLogger(__name__)

TRIAL_FIELDS = ("rank", "trial", "seed", "dropout", "lr", "w_id", "w_sf", "w_si", "valid_sefr",
                "valid_intent_acc", "valid_slot_f1", "best_epoch", "status", "error")


@dataclass
class SearchSpace:
    dropout: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    lr: tuple[float, float] = (1e-4, 5e-3)
    weight: tuple[float, float] = (0.5, 2.0)
    trials: int = 30

    def __post_init__(self):
        self.dropout = tuple(float(d) for d in self.dropout)
        self.lr = tuple(float(v) for v in self.lr)
        self.weight = tuple(float(v) for v in self.weight)
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"trial count must be >= 1, got {self.trials}")
        if not self.dropout or any(not 0.0 <= d < 1.0 for d in self.dropout):
            raise ConfigError("dropout choices must be a non-empty set within [0, 1)")
        if len(self.dropout) < 2:
            raise ConfigError("dropout needs at least two choices")
        lo, hi = self.lr
        if not 0.0 < lo < hi:
            raise ConfigError(f"learning-rate range must satisfy 0 < low < high, got {self.lr}")
        lo, hi = self.weight
        if not 0.0 <= lo < hi:
            raise ConfigError(f"loss-weight range must satisfy 0 <= low < high, got {self.weight}")

    def sample(self, rng: np.random.Generator) -> dict:
        """One trial: dropout uniform over choices, lr log-uniform, weights uniform."""
        lo, hi = self.lr
        return {
            "dropout": self.dropout[int(rng.integers(len(self.dropout)))],
            "lr": float(math.exp(rng.uniform(math.log(lo), math.log(hi)))),
            "w_id": float(rng.uniform(*self.weight)),
            "w_sf": float(rng.uniform(*self.weight)),
            "w_si": float(rng.uniform(*self.weight)),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> SearchSpace:
        unknown = set(obj) - {"dropout", "lr", "weight", "trials"}
        if unknown:
            raise ConfigError(f"unknown search space keys: {sorted(unknown)}")
        return cls(**obj)


def sample_trials(space: SearchSpace, master_seed: int) -> list[dict]:
    """Trial settings plus a per-trial training seed, all derived from ``master_seed``."""
    rng = np.random.default_rng(master_seed)
    out = []
    for idx in range(space.trials):
        params = space.sample(rng)
        params["seed"] = int(rng.integers(2**31 - 1))
        params["trial"] = idx
        out.append(params)
    return out


def rank_trials(rows: list[dict]) -> list[dict]:
    """Successful trials by validation SeFr (ties by trial index), failures last."""
    ok = sorted((r for r in rows if r["status"] == "ok"), key=lambda r: (-r["valid_sefr"], r["trial"]))
    failed = sorted((r for r in rows if r["status"] != "ok"), key=lambda r: r["trial"])
    ranked = ok + failed
    for i, row in enumerate(ranked, start=1):
        row["rank"] = i
    return ranked


def write_trials(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRIAL_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def run_search(space: SearchSpace, base: RunConfig, out_dir, master_seed: int = 0) -> list[dict]:
    """Train one run per sampled trial, then write trials.csv and best_config.json.

    A crashing trial is recorded with its error and the search moves on;
    if every trial fails a ``SearchError`` is raised after the table is written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    configs = {}
    for trial in sample_trials(space, master_seed):
        idx = trial["trial"]
        overrides = {k: trial[k] for k in ("dropout", "lr", "w_id", "w_sf", "w_si", "seed")}
        row = dict(trial, rank=0, valid_sefr=float("nan"), valid_intent_acc=float("nan"),
                   valid_slot_f1=float("nan"), best_epoch=0, status="ok", error="")
        try:
            config = replace(base, out_dir=str(out / f"trial_{idx:03d}"), **overrides)
            configs[idx] = config
            report = run_training(config)
            valid = report["valid"]
            row.update(valid_sefr=valid["sefr_acc"], valid_intent_acc=valid["intent_acc"],
                       valid_slot_f1=valid["slot_f1"], best_epoch=report["best_epoch"])
            logger.info("trial %d: valid sefr %.4f", idx, valid["sefr_acc"])
        except Exception as exc:  # a crashing trial must not stop the search
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            logger.warning("trial %d failed: %s", idx, row["error"])
        rows.append(row)
    ranked = rank_trials(rows)
    write_trials(ranked, out / "trials.csv")
    if ranked[0]["status"] != "ok":
        raise SearchError(f"all {len(rows)} trials failed; see {out / 'trials.csv'}")
    best = configs[ranked[0]["trial"]].to_dict()
    (out / "best_config.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ranked
