import numpy as np
import pytest

from poseforge.model import build_template_humanoid
from poseforge.sampler import SamplerConfig


@pytest.fixture(scope="session")
def template():
    return build_template_humanoid()


@pytest.fixture(scope="session")
def default_sampler():
    return SamplerConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        num, title = mark.args
        notes = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _ACCEPTANCE[num] = (title, rep.outcome, rep.duration, notes)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, outcome, dur, notes = _ACCEPTANCE[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {num}: {status}  {title} ({dur:.1f} s)"
        if notes:
            line += f"  [{notes}]"
        terminalreporter.write_line(line)
