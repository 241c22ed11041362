import struct

import numpy as np
import pytest

from conftest import make_tiny_model
from slim_nlu.checkpoint import MAGIC, load_checkpoint, read_header, save_checkpoint
from slim_nlu.data import UtteranceRecord
from slim_nlu.errors import FormatError, InputError
from slim_nlu.generate import GeneratorConfig, generate
from slim_nlu.spans import tags_to_spans


@pytest.fixture(scope="module")
def model(small_records):
    return make_tiny_model(small_records, dtype=np.float32, seed=5)


class TestPredict:
    def test_contract(self, model, small_records):
        for rec, pred in zip(small_records, model.predict(small_records)):
            assert len(pred.tags) == len(rec.tokens)
            assert pred.intents
            assert len(pred.slots) == len(tags_to_spans(pred.tags))
            for slot in pred.slots:
                assert slot["intent"] in pred.intents

    def test_slot_intents_restricted_at_low_threshold(self, small_records):
        m = make_tiny_model(small_records, dtype=np.float32, seed=2, threshold=0.3)
        for pred in m.predict(small_records):
            assert {s["intent"] for s in pred.slots} <= set(pred.intents)

    def test_all_outside_has_no_slots(self, model):
        model.heads.b_s.data[:] = -50.0
        model.heads.b_s.data[model.tag_map["O"]] = 50.0
        try:
            pred = model.predict_tokens(["play", "thriller"])
        finally:
            model.heads.b_s.data[:] = 0.0
        assert pred.tags == ["O", "O"] and pred.slots == []

    def test_single_intent_output(self, model):
        model.heads.b_i.data[:] = -50.0
        model.heads.b_i.data[1] = 50.0
        model.heads.b_s.data[model.tag_map["B-city"]] = 50.0
        try:
            pred = model.predict_tokens("weather in paris".split())
        finally:
            model.heads.b_i.data[:] = 0.0
            model.heads.b_s.data[:] = 0.0
        assert pred.intents == [model.intent_map.labels[1]]
        assert pred.slots and all(s["intent"] == pred.intents[0] for s in pred.slots)

    def test_unseen_tokens_and_labels(self, model):
        rec = UtteranceRecord(["zzz", "qqq"], ["B-new", "O"], ["NewIntent"], ["NewIntent"])
        (pred,) = model.predict([rec])
        assert len(pred.tags) == 2

    def test_empty_input(self, model):
        with pytest.raises(InputError):
            model.predict_tokens([])

    def test_long_input_padded_with_outside(self, model):
        pred = model.predict_tokens(["play"] * 60)
        assert len(pred.tags) == 60 and pred.tags[48:] == ["O"] * 12

    def test_more_than_max_slots(self, small_records):
        m = make_tiny_model(small_records, dtype=np.float32)
        m.heads.b_s.data[m.tag_map["B-city"]] = 50.0  # every token opens a span
        pred = m.predict_tokens(["a"] * 9)
        assert len(pred.slots) == 9
        assert all(s["intent"] in pred.intents for s in pred.slots)

    @pytest.mark.parametrize("variant", ["no_slot_intent", "no_constraint"])
    def test_variants_predict(self, small_records, variant):
        m = make_tiny_model(small_records, variant, dtype=np.float32)
        for pred in m.predict(small_records[:10]):
            assert all(s["intent"] in pred.intents for s in pred.slots)


class TestCheckpoint:
    def test_round_trip(self, model, small_records, tmp_path):
        save_checkpoint(model, tmp_path / "model.bin", {"best_epoch": 3})
        loaded, meta = load_checkpoint(tmp_path / "model.bin")
        assert meta == {"best_epoch": 3}
        for name, tensor in model.named_parameters().items():
            assert loaded.named_parameters()[name].data.tobytes() == tensor.data.tobytes()
        a = [p.to_dict() for p in model.predict(small_records)]
        b = [p.to_dict() for p in loaded.predict(small_records)]
        assert a == b

    def test_layout(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "model.bin")
        raw = (tmp_path / "model.bin").read_bytes()
        assert raw[:4] == MAGIC
        version, size = struct.unpack("<II", raw[4:12])
        assert version == 1
        header = read_header(tmp_path / "model.bin")
        assert header["intents"] == model.intent_map.labels and header["vocab"][:4][2] == "[CLS]"
        payload = sum(4 + 4 * t.ndim + 4 * t.size for t in model.parameters())
        assert len(raw) == 12 + size + payload

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "x.bin")

    def test_truncated(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "model.bin")
        raw = (tmp_path / "model.bin").read_bytes()
        (tmp_path / "cut.bin").write_bytes(raw[:-10])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "cut.bin")

    def test_trailing_bytes(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "model.bin")
        (tmp_path / "long.bin").write_bytes((tmp_path / "model.bin").read_bytes() + b"\0")
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "long.bin")

    @pytest.mark.parametrize("variant", ["no_slot_intent", "no_constraint"])
    def test_variants(self, variant, tmp_path):
        records = generate(GeneratorConfig(), 10, seed=0)
        m = make_tiny_model(records, variant, dtype=np.float32)
        save_checkpoint(m, tmp_path / "m.bin")
        loaded, _ = load_checkpoint(tmp_path / "m.bin")
        assert loaded.variant == variant and len(loaded.parameters()) == len(m.parameters())
