import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tomokit.counts import CountRecord  # noqa: E402
from tomokit.linear import build_tomography_set  # noqa: E402
from tomokit.projection import default_states  # noqa: E402

from reference_data import COUNTS  # noqa: E402

DATA_DIR = Path(__file__).parent.parent / "data"


@pytest.fixture(scope="session")
def tset():
    return build_tomography_set(default_states())


@pytest.fixture(scope="session")
def reference_record():
    return CountRecord(COUNTS)


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


def pytest_terminal_summary(terminalreporter):
    import helpers

    if helpers.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in helpers.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
