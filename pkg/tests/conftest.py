import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

TESTDATA = Path(__file__).parent / "testdata"


@pytest.fixture
def testdata() -> Path:
    return TESTDATA


@pytest.fixture
def announce(capsys):
    """Print a line straight to the terminal, bypassing capture."""
    def _announce(line: str) -> None:
        with capsys.disabled():
            print(line)
    return _announce
