import numpy as np
import pytest

from harness import Box, HeightField, ModelParams, validate_kernel


@pytest.fixture(scope="session")
def nn1d():
    return validate_kernel({(1,): 0.5, (-1,): 0.5}, 2)


@pytest.fixture(scope="session")
def nn2d():
    return validate_kernel({(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25}, 2)


@pytest.fixture(scope="session")
def params_half():
    return ModelParams(0.5, 0.5)


def box1d(lo, hi, shell=2):
    return Box((lo,), (hi,), shell)


def random_field(sites, rng, low=-1.0, high=1.0):
    return HeightField({s: rng.uniform(low, high) for s in sites})


def random_instance(seed, alphas=(0.2, 0.5, 0.8)):
    """A random box/kernel/params/fields bundle for cross-module identities."""
    rng = np.random.default_rng(seed)
    if seed % 2 == 0:
        n = int(rng.integers(6, 21))
        box = Box((-(n // 2),), (n - 1 - n // 2,), 2)
        kernel = validate_kernel({(1,): 0.5, (-1,): 0.5}, 2)
    else:
        nx, ny = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        box = Box((0, 0), (nx - 1, ny - 1), 2)
        kernel = validate_kernel(
            {(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25}, 2)
    params = ModelParams(alphas[seed % len(alphas)], 0.5)
    d = random_field(box.sites(), rng)
    y = random_field(box.shell(kernel.range), rng)
    z = random_field(box.sites(), rng)
    return box, kernel, params, d, y, z
