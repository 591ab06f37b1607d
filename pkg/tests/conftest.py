from pathlib import Path

import pytest

from genextrap.problems import KeplerProblem, LotkaVolterraProblem

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def kepler():
    return KeplerProblem(0.25)


@pytest.fixture
def lv():
    return LotkaVolterraProblem()
