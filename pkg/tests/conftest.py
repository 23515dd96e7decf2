import numpy as np
import pytest

from rgw.model import ModelParams, new_law


@pytest.fixture
def mixed_params():
    """Law {1: 1/2, 2: 1/2} with q = 1/2; the standard non-binary test case."""
    return ModelParams(new_law({1: 0.5, 2: 0.5}), 0.5)


@pytest.fixture
def binary_params():
    """Law {0: 1/2, 2: 1/2} with q = 1/2; reduces to an ordinary branching
    process with success probability q + (1-q)p."""
    return ModelParams(new_law({0: 0.5, 2: 0.5}), 0.5)


def random_law(rng: np.random.Generator, kstar_max: int = 6):
    while True:
        ks = int(rng.integers(2, kstar_max + 1))
        extra = set(int(v) for v in rng.integers(1, ks, size=int(rng.integers(1, 4))))
        pts = sorted({ks} | extra | ({0} if rng.random() < 0.5 else set()))
        pr = rng.dirichlet(np.ones(len(pts)))
        if pr.min() >= 1e-3:
            return new_law(dict(zip(pts, pr)))
