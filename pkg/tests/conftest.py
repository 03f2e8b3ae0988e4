import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rigmixer import synthetic  # noqa: E402


@pytest.fixture(scope="session")
def biped():
    return synthetic.biped()


@pytest.fixture(scope="session")
def quadruped():
    return synthetic.quadruped()


@pytest.fixture(scope="session")
def tailed():
    return synthetic.tailed()


@pytest.fixture(scope="session")
def tube():
    return synthetic.tube_arm()


@pytest.fixture(scope="session")
def head_pair():
    return synthetic.head_chain_pair()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
