import json
import math

import numpy as np
import pytest

from slim_nlu import data as D
from slim_nlu import train as train_mod
from slim_nlu.errors import ConfigError, DivergenceError, MappingError
from slim_nlu.generate import GeneratorConfig, generate
from slim_nlu.metrics import EvalReport
from slim_nlu.model import SlimModel
from slim_nlu.train import CurveRow, RunConfig, fit, read_curves, run_training, write_curves

TINY = dict(num_layers=1, hidden_dim=16, num_heads=2, ffn_dim=32, batch_size=16, max_epochs=3, patience=3)


@pytest.fixture(scope="module")
def splits():
    recs = generate(GeneratorConfig(), 100, seed=21)
    return recs[:60], recs[60:80], recs[80:]


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.batch_size, cfg.max_epochs, cfg.patience, cfg.threshold, cfg.max_slots) == (32, 20, 3, 0.5, 6)
        assert (cfg.w_id, cfg.w_sf, cfg.w_si) == (1.0, 2.0, 1.0)

    def test_variant_spelling(self):
        assert RunConfig(variant="no-slot-intent").variant == "no_slot_intent"

    @pytest.mark.parametrize("kw", [dict(patience=30), dict(lr=0.0), dict(variant="x"), dict(dropout=1.0),
                                    dict(threshold=1.0), dict(w_id=0, w_sf=0, w_si=0), dict(batch_size=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"learning_rate": 0.1})


def scripted_fit(monkeypatch, splits, sefr_sequence, **kw):
    seq = iter(sefr_sequence)

    def fake_eval(model, records):
        s = next(seq)
        return EvalReport(s, s, s, s, s, 0, 0, 0, len(records))

    monkeypatch.setattr(train_mod, "evaluate_model", fake_eval)
    cfg = RunConfig(**dict(TINY, **kw))
    return fit(cfg, splits[0][:16], splits[1])


class TestEarlyStopping:
    def test_plateau_from_epoch_two(self, monkeypatch, splits):
        res = scripted_fit(monkeypatch, splits, [0.5, 0.8, 0.8, 0.8, 0.8, 0.9], max_epochs=10, patience=3)
        assert res.epochs_run == 5 and res.best_epoch == 2
        assert [r.epoch for r in res.curves] == [1, 2, 3, 4, 5]

    def test_runs_to_max_epochs(self, monkeypatch, splits):
        res = scripted_fit(monkeypatch, splits, [0.1, 0.2, 0.3, 0.4], max_epochs=4, patience=2)
        assert res.epochs_run == 4 and res.best_epoch == 4

    def test_best_weights_restored(self, monkeypatch, splits):
        snapshots = []
        real_eval = train_mod.evaluate_model
        scores = iter([0.9, 0.1, 0.1])

        def fake_eval(model, records):
            snapshots.append(model.heads.w_i.data.copy())
            real_eval(model, records[:1])
            s = next(scores)
            return EvalReport(s, s, s, s, s, 0, 0, 0, 1)

        monkeypatch.setattr(train_mod, "evaluate_model", fake_eval)
        res = fit(RunConfig(**dict(TINY, patience=2)), splits[0][:16], splits[1])
        assert np.array_equal(res.model.heads.w_i.data, snapshots[0])


class TestFit:
    def test_curves_and_losses(self, splits):
        res = fit(RunConfig(**TINY), splits[0], splits[1])
        assert len(res.curves) == res.epochs_run
        for row in res.curves:
            assert row.split == "valid" and 0 <= row.sefr_acc <= row.intent_acc <= 1
            assert row.id_loss > 0 and row.sf_loss > 0 and row.si_loss > 0
        assert res.curves[-1].sf_loss < res.curves[0].sf_loss

    def test_no_slot_intent_logs_zero_si(self, splits):
        res = fit(RunConfig(**dict(TINY, max_epochs=1, patience=1, variant="no_slot_intent")), splits[0], splits[1])
        assert res.curves[0].si_loss == 0.0

    def test_divergence(self, splits, monkeypatch):
        original = SlimModel.loss

        def poisoned(self, *args, **kw):
            out = original(self, *args, **kw)
            out.total.data = np.array(math.nan, dtype=out.total.data.dtype)
            return out

        monkeypatch.setattr(SlimModel, "loss", poisoned)
        with pytest.raises(DivergenceError, match="epoch 1, batch 0"):
            fit(RunConfig(**TINY), splits[0], splits[1])

    def test_unknown_valid_label(self, splits):
        bad = D.UtteranceRecord(["x"], ["O"], ["NeverSeen"], [])
        with pytest.raises(MappingError):
            fit(RunConfig(**TINY), splits[0], [bad])

    def test_empty_train(self, splits):
        with pytest.raises(ConfigError):
            fit(RunConfig(**TINY), [], splits[1])


class TestCurvesFile:
    def test_round_trip(self, tmp_path):
        rows = [CurveRow(1, "valid", 0.1, 0.2, 1 / 3, 1.5, 2.5, 0.0), CurveRow(2, "valid", 0.4, 0.5, 0.6, 1, 2, 3)]
        write_curves(rows, tmp_path / "c.csv")
        assert read_curves(tmp_path / "c.csv") == rows
        assert (tmp_path / "c.csv").read_text().splitlines()[0] == \
            "epoch,split,slot_f1,intent_acc,sefr_acc,id_loss,sf_loss,si_loss"


class TestRunTraining:
    def test_outputs(self, splits, tmp_path):
        for name, recs in zip(("train", "valid", "test"), splits):
            D.save(recs, tmp_path / f"{name}.jsonl")
        cfg = RunConfig(train_path=str(tmp_path / "train.jsonl"), valid_path=str(tmp_path / "valid.jsonl"),
                        test_path=str(tmp_path / "test.jsonl"), out_dir=str(tmp_path / "run"), **TINY)
        report = run_training(cfg)
        out = tmp_path / "run"
        for name in ("model.bin", "curves.csv", "report.json", "config.json", "vocab.txt", "intents.txt", "tags.txt"):
            assert (out / name).exists(), name
        assert json.loads((out / "report.json").read_text()) == report
        assert set(report) == {"best_epoch", "epochs_run", "valid", "test"}

    def test_missing_paths(self):
        with pytest.raises(ConfigError):
            run_training(RunConfig())
