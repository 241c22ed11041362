import csv
import json

import pytest

from slim_nlu import data as D
from slim_nlu.checkpoint import read_header
from slim_nlu.cli import main
from slim_nlu.errors import ConfigError
from slim_nlu.search import SearchSpace, rank_trials, sample_trials
from slim_nlu.train import RunConfig

TINY = dict(num_layers=1, hidden_dim=16, num_heads=2, ffn_dim=32, batch_size=16, max_epochs=2, patience=1)


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["generate", "--out", str(root), "--counts", "60", "20", "20", "--seed", "4"]) == 0
    return root


@pytest.fixture
def run_config(tmp_path, dataset):
    path = tmp_path / "run.json"
    cfg = dict(TINY, train_path=str(dataset / "train.jsonl"), valid_path=str(dataset / "valid.jsonl"),
               test_path=str(dataset / "test.jsonl"))
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, dataset):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "run.json"
    cfg.write_text(json.dumps(dict(TINY, train_path=str(dataset / "train.jsonl"),
                                   valid_path=str(dataset / "valid.jsonl"))))
    assert main(["train", "--config", str(cfg), "--out", str(out / "model")]) == 0
    return out / "model"


class TestGenerate:
    def test_counts_and_summary(self, tmp_path, capsys):
        code, out, _ = run(["generate", "--out", tmp_path, "--counts", 30, 5, 7, "--seed", 1], capsys)
        assert code == 0
        summary = json.loads(out)
        for split, n in (("train", 30), ("valid", 5), ("test", 7)):
            assert len((tmp_path / f"{split}.jsonl").read_text().splitlines()) == n
            assert summary[split]["records"] == n
            assert sum(summary[split]["intent_count_histogram"].values()) == n
        assert len(D.load(tmp_path / "train.jsonl")) == 30

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        for sub in ("a", "b"):
            run(["generate", "--out", tmp_path / sub, "--counts", 20, 5, 5, "--seed", 9], capsys)
        for split in ("train", "valid", "test"):
            assert (tmp_path / "a" / f"{split}.jsonl").read_bytes() == (tmp_path / "b" / f"{split}.jsonl").read_bytes()

    def test_zero_count(self, tmp_path, capsys):
        code, _, err = run(["generate", "--out", tmp_path, "--counts", 5, 0, 2], capsys)
        assert code == 0 and (tmp_path / "valid.jsonl").read_text() == ""
        assert "empty" in err

    def test_invalid_config(self, tmp_path, capsys):
        (tmp_path / "g.json").write_text(json.dumps({"mix": {"1": 0.2}}))
        code, _, err = run(["generate", "--config", tmp_path / "g.json", "--out", tmp_path], capsys)
        assert code == 2 and "mix" in err

    def test_custom_config(self, tmp_path, capsys):
        cfg = {"templates": {"A": ["do {x}"], "B": ["go {x}"]}, "lexicons": {"x": ["it"]}, "mix": {"2": 1.0}}
        (tmp_path / "g.json").write_text(json.dumps(cfg))
        code, out, _ = run(["generate", "--config", tmp_path / "g.json", "--out", tmp_path, "--counts", 4, 1, 1],
                           capsys)
        assert code == 0 and json.loads(out)["train"]["intent_count_histogram"] == {"2": 4}


class TestTrain:
    def test_outputs(self, trained):
        rows = list(csv.DictReader(open(trained / "curves.csv")))
        assert [int(r["epoch"]) for r in rows] == list(range(1, len(rows) + 1))
        report = json.loads((trained / "report.json").read_text())
        assert report["epochs_run"] == len(rows)

    def test_flags_override_config(self, run_config, tmp_path, capsys):
        code, out, _ = run(["train", "--config", run_config, "--out", tmp_path / "m", "--variant", "no-slot-intent",
                            "--max-epochs", 1, "--threshold", 0.4, "--max-slots", 4, "--seed", 3], capsys)
        assert code == 0
        header = read_header(tmp_path / "m" / "model.bin")
        assert header["variant"] == "no_slot_intent" and header["threshold"] == 0.4 and header["max_slots"] == 4
        assert json.loads((tmp_path / "m" / "config.json").read_text())["seed"] == 3

    def test_bad_dataset(self, run_config, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps({"tokens": ["a"], "tags": ["O"], "intents": [], "slot_intents": []}) + "\n")
        code, _, err = run(["train", "--config", run_config, "--train", bad, "--out", tmp_path / "m"], capsys)
        assert code == 2 and "line 1" in err

    def test_bad_config(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text(json.dumps({"patience": 50}))
        code, _, _ = run(["train", "--config", tmp_path / "c.json"], capsys)
        assert code == 2

    def test_missing_file(self, run_config, tmp_path, capsys):
        code, _, _ = run(["train", "--config", run_config, "--train", tmp_path / "nope.jsonl",
                          "--out", tmp_path / "m"], capsys)
        assert code == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_code(self, run_config, tmp_path, capsys):
        cfg = json.loads(run_config.read_text())
        cfg["lr"] = 1e30
        run_config.write_text(json.dumps(cfg))
        code, _, err = run(["train", "--config", run_config, "--out", tmp_path / "m"], capsys)
        assert code == 3 and "epoch" in err


class TestEval:
    def test_reproduces_best_sefr(self, trained, dataset, capsys):
        code, out, _ = run(["eval", trained / "model.bin", dataset / "valid.jsonl"], capsys)
        assert code == 0
        stored = read_header(trained / "model.bin")["meta"]["best_valid_sefr"]
        assert abs(json.loads(out)["sefr_acc"] - stored) <= 1e-9

    def test_twice_identical(self, trained, dataset, tmp_path, capsys):
        a = run(["eval", trained / "model.bin", dataset / "test.jsonl", "--out", tmp_path / "a"], capsys)[1]
        b = run(["eval", trained / "model.bin", dataset / "test.jsonl", "--out", tmp_path / "b"], capsys)[1]
        assert a == b
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    def test_empty_dataset(self, trained, tmp_path, capsys):
        (tmp_path / "e.jsonl").write_text("")
        code, out, err = run(["eval", trained / "model.bin", tmp_path / "e.jsonl"], capsys)
        assert code == 0 and json.loads(out)["sefr_acc"] == 0.0 and "empty" in err

    def test_inventory_mismatch(self, trained, tmp_path, capsys):
        rec = {"tokens": ["a"], "tags": ["B-zzz"], "intents": ["Unknown"], "slot_intents": ["Unknown"]}
        (tmp_path / "x.jsonl").write_text(json.dumps(rec) + "\n")
        code, _, err = run(["eval", trained / "model.bin", tmp_path / "x.jsonl"], capsys)
        assert code == 2 and "Unknown" in err

    def test_bad_checkpoint(self, tmp_path, dataset, capsys):
        (tmp_path / "m.bin").write_bytes(b"junk")
        code, _, _ = run(["eval", tmp_path / "m.bin", dataset / "valid.jsonl"], capsys)
        assert code == 2


class TestPredict:
    def test_contract(self, trained, capsys):
        code, out, _ = run(["predict", trained / "model.bin", "play", "thriller", "by", "adele"], capsys)
        pred = json.loads(out)
        assert code == 0 and len(pred["tags"]) == 4 and pred["intents"]
        assert all(s["intent"] in pred["intents"] for s in pred["slots"])

    def test_text_flag(self, trained, capsys):
        code, out, _ = run(["predict", trained / "model.bin", "--text", "weather in paris tomorrow"], capsys)
        assert code == 0 and len(json.loads(out)["tags"]) == 4

    def test_empty(self, trained, capsys):
        code, _, err = run(["predict", trained / "model.bin"], capsys)
        assert code == 2 and "empty" in err


class TestSearchSpace:
    def test_defaults(self):
        space = SearchSpace()
        assert space.trials == 30 and space.dropout == (0.0, 0.1, 0.2, 0.3)
        assert space.lr == (1e-4, 5e-3) and space.weight == (0.5, 2.0)

    @pytest.mark.parametrize("kw", [dict(trials=0), dict(lr=(1e-3, 1e-3)), dict(weight=(2.0, 1.0)),
                                    dict(dropout=(0.1,)), dict(dropout=(0.1, 1.5))])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SearchSpace(**kw)

    def test_sampling_ranges_and_determinism(self):
        space = SearchSpace(trials=200)
        a, b = sample_trials(space, 7), sample_trials(space, 7)
        assert a == b and a != sample_trials(space, 8)
        for t in a:
            assert t["dropout"] in space.dropout and 1e-4 <= t["lr"] <= 5e-3
            assert all(0.5 <= t[k] <= 2.0 for k in ("w_id", "w_sf", "w_si"))
        assert len({t["seed"] for t in a}) == 200
        lrs = sorted(t["lr"] for t in a)
        assert lrs[100] < 1e-3  # log-uniform median is about 7e-4

    def test_ranking(self):
        rows = [dict(trial=0, valid_sefr=0.5, status="ok"), dict(trial=1, valid_sefr=float("nan"), status="failed"),
                dict(trial=2, valid_sefr=0.9, status="ok"), dict(trial=3, valid_sefr=0.5, status="ok")]
        ranked = rank_trials(rows)
        assert [r["trial"] for r in ranked] == [2, 0, 3, 1] and [r["rank"] for r in ranked] == [1, 2, 3, 4]


class TestSearchCommand:
    def test_single_trial(self, run_config, tmp_path, capsys):
        code, out, _ = run(["search", "--config", run_config, "--out", tmp_path / "s", "--trials", 1,
                            "--max-epochs", 1], capsys)
        assert code == 0
        rows = list(csv.DictReader(open(tmp_path / "s" / "trials.csv")))
        assert len(rows) == 1 and rows[0]["rank"] == "1" and rows[0]["status"] == "ok"
        best = json.loads((tmp_path / "s" / "best_config.json").read_text())
        assert RunConfig.from_dict(best).seed == int(rows[0]["seed"])
        assert (tmp_path / "s" / "trial_000" / "model.bin").exists()

    def test_sorted_and_deterministic(self, run_config, tmp_path, capsys):
        space = tmp_path / "space.json"
        space.write_text(json.dumps({"trials": 3, "lr": [1e-3, 5e-3]}))
        tables = []
        for sub in ("a", "b"):
            code, _, _ = run(["search", "--config", run_config, "--space", space, "--out", tmp_path / sub,
                              "--max-epochs", 1, "--seed", 5], capsys)
            assert code == 0
            tables.append((tmp_path / sub / "trials.csv").read_text())
        assert tables[0] == tables[1]
        sefr = [float(r["valid_sefr"]) for r in csv.DictReader(open(tmp_path / "a" / "trials.csv"))]
        assert sefr == sorted(sefr, reverse=True)

    def test_all_trials_fail(self, run_config, tmp_path, capsys):
        cfg = json.loads(run_config.read_text())
        cfg["train_path"] = str(tmp_path / "missing.jsonl")
        run_config.write_text(json.dumps(cfg))
        code, _, err = run(["search", "--config", run_config, "--out", tmp_path / "s", "--trials", 2], capsys)
        assert code == 3 and "all 2 trials failed" in err
        rows = list(csv.DictReader(open(tmp_path / "s" / "trials.csv")))
        assert [r["status"] for r in rows] == ["failed", "failed"] and "FileNotFoundError" in rows[0]["error"]
