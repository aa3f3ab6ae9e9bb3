import numpy as np
import pytest

from rspo_lab.denoiser import DenoiserParams, init_params
from rspo_lab.sequences import Sequence


def tiny_params(seed: int = 0, vocab_size: int = 4, scale: float = 0.5) -> DenoiserParams:
    """Small model for enumeration and finite-difference tests."""
    return init_params(
        vocab_size,
        window=2,
        hidden=8,
        embed_dim=4,
        n_positions=6,
        seed=seed,
        scale=scale,
    )


def tiny_sequence(rng: np.random.Generator, vocab_size: int = 4,
                  prompt_len: int = 2, completion_len: int = 3) -> Sequence:
    return Sequence(
        prompt=rng.integers(0, vocab_size, size=prompt_len),
        completion=rng.integers(0, vocab_size, size=completion_len),
    )


def central_diff(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Dense central finite differences of a scalar function of theta."""
    grad = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        grad[i] = (f(tp) - f(tm)) / (2.0 * h)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
