import pytest

from soslab.sos import Sos

FIG1_LEFT = "{{1},{3},{1,2},{1,3},{2,3}}"
FIG1_RIGHT = "{{1},{1,2},{1,3},{2,3}}"


@pytest.fixture
def left():
    return Sos.parse(FIG1_LEFT)


@pytest.fixture
def right():
    return Sos.parse(FIG1_RIGHT)
