import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pseudo(n: int) -> str:
    """Deterministic 36-character pseudo-id for tests."""
    return f"{n:08x}-0000-4000-8000-000000000000"
