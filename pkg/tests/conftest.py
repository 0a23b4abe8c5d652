import numpy as np
import pytest

from harqeh.policies import Policy
from harqeh.types import LinkConfig


@pytest.fixture
def kconfig() -> LinkConfig:
    """Hand-solvable link: k(0,0) = 5."""
    return LinkConfig(lambda_=0.5, r1=1, r2=1, e=1, e_d=1)


@pytest.fixture
def fig1() -> LinkConfig:
    """Link whose decision grid has a tie region."""
    return LinkConfig(lambda_=0.5, r1=5, r2=2, e=2, e_d=5)


def table1_config(r2: float) -> LinkConfig:
    return LinkConfig(lambda_=0.5, r1=10, r2=r2, e=1, e_d=5)


def table2_config(lam: float) -> LinkConfig:
    return LinkConfig(lambda_=lam, r1=10, r2=5, e=2, e_d=5)


class AlwaysHarvest(Policy):
    """Never decodes, so no episode ends."""

    name = "always_eh"

    def _choose(self, b, m, slot, rng):
        return np.ones_like(b)


TABLE1_VIA = {1: 15.9910, 2: 15.8103, 3: 15.6235, 4: 15.2490, 5: 14.4992}
TABLE2_VIA = {0.1: 40.8904, 0.2: 20.7979, 0.3: 14.0320, 0.4: 10.5985, 0.5: 8.4989}
