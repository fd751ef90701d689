import numpy as np
import pytest


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def lognormal_softmax_rows(n_rows: int, n: int, sigma: float = 4.0, seed: int = 0) -> np.ndarray:
    """Rows that spread over many decades, like real attention: softmax of
    wide normal scores, so each row is (truncated) lognormal and sums to 1."""
    rng = np.random.default_rng(seed)
    return softmax_rows(rng.normal(0.0, sigma, (n_rows, n)))


def lognormal_softmax_tensor(L: int, H: int, n: int, sigma: float = 4.0, seed: int = 0):
    rows = lognormal_softmax_rows(L * H * n, n, sigma=sigma, seed=seed)
    return rows.reshape(L, H, n, n).astype(np.float32)


@pytest.fixture
def small_tensor():
    from attnsqueeze import AttentionTensor

    return AttentionTensor(lognormal_softmax_tensor(2, 3, 16, seed=7))
