import os

import numpy as np
import pytest
import torch

SAMPLES_DIR = os.path.join(os.path.dirname(__file__), "..", "samples")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def samples_dir():
    return os.path.abspath(SAMPLES_DIR)


@pytest.fixture
def underwater_dir(samples_dir):
    return os.path.join(samples_dir, "underwater")


@pytest.fixture
def terrestrial_dir(samples_dir):
    return os.path.join(samples_dir, "terrestrial")


def random_image(rng, size=32, lo=0.0, hi=1.0):
    return rng.uniform(lo, hi, size=(3, size, size))


def random_image_t(rng, size=32, lo=0.05, hi=0.95, dtype=torch.float64):
    return torch.from_numpy(random_image(rng, size, lo, hi)).to(dtype)


def random_depth_t(rng, size=32, lo=0.0, hi=6.0, dtype=torch.float64):
    return torch.from_numpy(rng.uniform(lo, hi, size=(1, size, size))).to(dtype)


def random_params(rng, t_lo=0.2, t_hi=0.99):
    from uwrestore.physics import DegradationParams

    return DegradationParams(
        t_d=tuple(rng.uniform(t_lo, t_hi, 3)),
        t_b=tuple(rng.uniform(t_lo, t_hi, 3)),
        b_inf=tuple(rng.uniform(0.6, 1.0, 3)),
    )
