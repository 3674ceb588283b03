import wave

import numpy as np
import pytest


def write_pcm_wav(path, samples_i16, rate=16000, channels=1, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(samples_i16).astype(f"<i{width}").tobytes())
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
