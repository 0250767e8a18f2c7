import pytest

from paneitz_lab import make_model


@pytest.fixture(scope="session")
def sphere16():
    return make_model("sphere", l_max=16)


@pytest.fixture(scope="session")
def sphere32():
    return make_model("sphere", l_max=32)


@pytest.fixture(scope="session")
def torus8():
    return make_model("torus", n=8)


@pytest.fixture(scope="session")
def torus16():
    return make_model("torus", n=16)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one summary line per acceptance criterion."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
