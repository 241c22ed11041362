import numpy as np
import pytest

from slim_nlu.data import LabelMap
from slim_nlu.encoder import EncoderConfig, Vocabulary
from slim_nlu.generate import GeneratorConfig, generate
from slim_nlu.model import SlimModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_records():
    return generate(GeneratorConfig(), 40, seed=7)


def make_tiny_model(records, variant="full", dtype=np.float64, seed=0, **kw):
    vocab = Vocabulary.build(records)
    cfg = EncoderConfig(vocab_size=len(vocab), num_layers=1, hidden_dim=8, num_heads=2, ffn_dim=12,
                        max_seq_len=50, dropout_rate=0.0)
    return SlimModel(cfg, vocab, LabelMap.from_records(records, "intents"), LabelMap.from_records(records, "tags"),
                     variant=variant, head_dropout=0.0, seed=seed, dtype=dtype, **kw)


# -- acceptance summary: one PASS/FAIL line per criterion ---------------------
_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "detail": []})
    if not report.passed:
        entry["passed"] = False
        entry["detail"].append(item.name)
    detail = getattr(item, "criterion_detail", None)
    if detail and report.when == "call":
        entry["detail"].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["passed"] else "FAIL"
        extra = f"  ({'; '.join(entry['detail'])})" if entry["detail"] else ""
        terminalreporter.write_line(f"criterion {number} [{status}] {entry['title']}{extra}")


@pytest.fixture
def record_detail(request):
    """Attach a short measurement string to the criterion summary line."""
    def record(text):
        request.node.criterion_detail = text
    return record
