import contextlib
import time
from dataclasses import dataclass

import pytest

_RESULTS: dict = {}


@dataclass
class _Entry:
    title: str
    status: str = "FAIL"
    detail: str = ""


class CriterionRecorder:
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    @contextlib.contextmanager
    def __call__(self, number: int, title: str):
        entry = _Entry(title)
        _RESULTS[number] = entry
        start = time.perf_counter()
        try:
            yield entry
        except BaseException as exc:
            entry.status = "FAIL"
            entry.detail = (entry.detail + "; " if entry.detail else "") + (
                str(exc).splitlines()[0][:160] if str(exc) else type(exc).__name__)
            raise
        else:
            entry.status = "PASS"
        finally:
            entry.detail = (entry.detail + "; " if entry.detail else "") + (
                f"{time.perf_counter() - start:.1f} s")


@pytest.fixture(scope="session")
def criterion():
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        e = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {e.status}: {e.title} ({e.detail})")


@pytest.fixture(scope="session")
def reproduction_run(tmp_path_factory):
    """The default configuration end to end: 1,000 training and 200 test patients,
    three heads trained from scratch at 64 x 64, then evaluated."""
    from deepseenet import pipeline
    from deepseenet.config import load_config

    out = tmp_path_factory.mktemp("reproduction") / "run"
    cfg = load_config(flags={"out": str(out)})
    start = time.perf_counter()
    synth = pipeline.run_synth(cfg)
    train = pipeline.run_train(cfg)
    metrics = pipeline.run_eval(cfg)
    elapsed = time.perf_counter() - start
    return {"cfg": cfg, "out": out, "synth": synth, "train": train, "metrics": metrics,
            "seconds": elapsed}
