import numpy as np
import pytest

from lpclt.processes import FiniteStateMarkov


def chain_suite():
    """Five stationary finite-state chains with different shapes."""
    birth_death = np.zeros((4, 4))
    for i in range(4):
        birth_death[i, max(i - 1, 0)] += 0.3
        birth_death[i, min(i + 1, 3)] += 0.3
        birth_death[i, i] += 0.4
    rng = np.random.default_rng(2024)
    dense = rng.random((5, 5)) ** 3
    dense /= dense.sum(axis=1, keepdims=True)
    return {
        "two_state": FiniteStateMarkov((0.0, 1.0), ((0.9, 0.1), (0.2, 0.8))),
        "three_state": FiniteStateMarkov((0.0, 0.5, 1.0),
                                         ((0.5, 0.3, 0.2), (0.1, 0.8, 0.1), (0.3, 0.3, 0.4))),
        "birth_death": FiniteStateMarkov((0.1, 0.3, 0.6, 0.9), tuple(map(tuple, birth_death))),
        "iid_rows": FiniteStateMarkov((0.2, 0.4, 0.8),
                                      ((0.2, 0.5, 0.3), (0.2, 0.5, 0.3), (0.2, 0.5, 0.3))),
        "dense5": FiniteStateMarkov((-0.5, 0.1, 0.35, 0.7, 1.4), tuple(map(tuple, dense))),
    }


@pytest.fixture(scope="session")
def chains():
    return chain_suite()


@pytest.fixture(scope="session")
def two_state():
    return chain_suite()["two_state"]
