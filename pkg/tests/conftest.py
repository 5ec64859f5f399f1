from pathlib import Path

import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")

GOLDEN = Path(__file__).parent / "golden"

_ACCEPTANCE = []
_SETUP_TIME = {}


@pytest.fixture
def golden_dir():
    return GOLDEN


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "setup":
        _SETUP_TIME[item.nodeid] = rep.duration  # module fixtures do the heavy runs
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        total = rep.duration + (_SETUP_TIME.get(item.nodeid, 0.0) if rep.when == "call" else 0.0)
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.outcome, total))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, outcome, dur in sorted(_ACCEPTANCE):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {num:>2}: {title} ({dur:.1f}s)")
