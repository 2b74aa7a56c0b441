import numpy as np
import pytest

from kdbalance import validate_dataset


@pytest.fixture
def toy_data():
    """Six units, one covariate, deterministic: 3 treated, 3 control."""
    X = np.array([[0.0], [1.0], [2.0], [0.5], [1.5], [2.5]])
    T = np.array([1, 1, 1, 0, 0, 0])
    Y = np.array([3.0, 4.0, 5.0, 2.0, 3.0, 4.0])
    return validate_dataset(X, T, Y)


def random_dataset(rng, n=40, d=3, shift=0.3):
    """Gaussian covariates with a mean shift on the treated half."""
    while True:
        T = (rng.random(n) < 0.5).astype(int)
        if 0 < T.sum() < n:
            break
    X = rng.standard_normal((n, d)) + shift * T[:, None]
    Y = X @ rng.standard_normal(d) + T + rng.standard_normal(n)
    return validate_dataset(X, T, Y)
