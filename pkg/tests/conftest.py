import pytest

from rangerevoke.crypto import det_keygen, seed_from_parts
from rangerevoke.slot_tree import EpochConfig


@pytest.fixture(scope="session")
def pm_key():
    return det_keygen(seed_from_parts(b"test-pm", 0))


@pytest.fixture(scope="session")
def admin_key():
    return det_keygen(seed_from_parts(b"test-admin", 0))


@pytest.fixture(scope="session")
def cid():
    return seed_from_parts(b"test-client", 0)


@pytest.fixture
def fig_cfg():
    """The four-slot worked example: epoch [0, 60), delta 15, binary tree."""
    return EpochConfig(0, 60, 15, 2)
