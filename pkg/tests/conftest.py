import sys
from pathlib import Path

import pytest

from nudge_iv import load_fixture

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def s1():
    return load_fixture("s1_monotone")


@pytest.fixture(scope="session")
def s2():
    return load_fixture("s2_logistic")


@pytest.fixture(scope="session")
def s3():
    return load_fixture("s3_additive")


@pytest.fixture(scope="session")
def s3_hetero():
    return load_fixture("s3_additive_hetero")


@pytest.fixture(scope="session")
def s4():
    return load_fixture("s4_multiplicative")


@pytest.fixture(scope="session")
def s1_noise_free():
    return load_fixture("s1_noise_free")


@pytest.fixture(scope="session")
def s2_shift():
    return load_fixture("s2_location_shift")


@pytest.fixture(scope="session")
def s2_binary():
    return load_fixture("s2_binary")


@pytest.fixture(scope="session")
def s5():
    return load_fixture("s5_two_strata")
