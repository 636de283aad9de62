import numpy as np
import pytest

from lfpseg.signal_io import SynthSpec, synth_record


@pytest.fixture(scope="session")
def record20():
    return synth_record(SynthSpec(target_snr_db=20.0, rng_seed=42))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line per acceptance criterion."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        print(line)
        VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
