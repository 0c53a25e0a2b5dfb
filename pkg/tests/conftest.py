import shutil
import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
FIXTURES = TESTS_DIR / "fixtures"

sys.path.insert(0, str(TESTS_DIR))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def replay5(tmp_path) -> Path:
    """Copy of the 5-image SGDet fixture with its warmed backend cache."""
    dst = tmp_path / "replay5"
    shutil.copytree(FIXTURES / "replay5", dst)
    return dst


@pytest.fixture
def predcls3(tmp_path) -> Path:
    """Copy of the 3-image PredCls fixture with its warmed backend cache."""
    dst = tmp_path / "predcls3"
    shutil.copytree(FIXTURES / "predcls3", dst)
    return dst
