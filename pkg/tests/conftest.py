import hashlib
from pathlib import Path

import pytest

import flowcodec
from flowcodec.codec import TrainSchedule, init_codec_params, train_end_to_end
from flowcodec.evaluation import synthetic_pairs
from flowcodec.fileio import read_checkpoint, write_checkpoint
from flowcodec.motion import init_flow_params

TOY_LAMBDA = 2048.0
TOY_SCHEDULE = TrainSchedule(iterations=600, lr=1e-3, milestones={450: 0.3}, seed=0)


def _source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(flowcodec.__file__).parent.rglob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def train_toy_checkpoint():
    data = synthetic_pairs(24, seed=7)
    return train_end_to_end(init_codec_params(seed=0), init_flow_params(seed=0), data, TOY_LAMBDA, TOY_SCHEDULE)


@pytest.fixture(scope="session")
def toy_checkpoint(request):
    """Codec + flow network trained for a few hundred steps on synthetic pairs.

    Training is deterministic, so the result is cached across sessions keyed by
    the package source.
    """
    cache = request.config.cache.mkdir("flowcodec") / f"toy-{_source_digest()}.fckp"
    if cache.exists():
        return read_checkpoint(cache)
    params = train_toy_checkpoint()
    write_checkpoint(cache, params)
    return read_checkpoint(cache)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record an acceptance criterion outcome and fail the test when it does not hold."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, ok: bool, detail: str) -> None:
        results[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
