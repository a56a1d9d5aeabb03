import pytest

from rezone.fixtures import tiny1, two_level


@pytest.fixture
def tiny():
    return tiny1()


@pytest.fixture
def feeder_district():
    return two_level()
