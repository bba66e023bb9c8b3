import pytest

from radshock import build_profile, preset
from radshock.evans import make_context


@pytest.fixture(scope="session")
def spec02():
    return preset("burgers-linear", 0.2)


@pytest.fixture(scope="session")
def prof02(spec02):
    return build_profile(spec02)


@pytest.fixture(scope="session")
def ctx02(spec02, prof02):
    return make_context(spec02, prof02)


@pytest.fixture(scope="session")
def cubic005():
    spec = preset("burgers-cubic", 0.05)
    return spec, build_profile(spec)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
