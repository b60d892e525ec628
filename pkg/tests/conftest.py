import numpy as np
import pytest

from annulus_turing.linstab import ModelParams

# (delta, a, d, R, (n_c, j_c), tabulated q(lambda_c)(u_c - v_c))
REFERENCE_ROWS = [
    (1.05, 0.2, 13, 4, (2, 1), 73.5557),
    (1.05, 0.2, 15, 4, (2, 1), 147.17),
    (1.05, 0.2, 20, 4, (2, 1), 240.462),
    (1.05, 0.2, 80, 4, (1, 1), 82.1464),
    (1.05, 0.4, 65, 4, (2, 1), 79.4266),
    (1.05, 0.2, 13, 10, (5, 1), 459.715),
    (1.05, 0.4, 80, 10, (4, 1), 527.142),
    (1.2, 0.2, 15, 4, (2, 1), 31.0966),
    (1.2, 0.2, 15, 20, (9, 1), 523.768),
    (1.2, 0.4, 175, 4, (1, 1), -1.97781),
    (2, 0.2, 30, 4, (2, 1), 5.66053),
    (2, 0.4, 60, 4, (3, 1), 2.0822),
    (2, 0.4, 100, 4, (2, 1), 2.479171),
    (8, 0.4, 80, 10, (10, 5), 6.07011),
]


def row_params(i):
    delta, a, d, R, _, _ = REFERENCE_ROWS[i]
    return ModelParams(a=a, d=d, R=R, delta=delta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def row1():
    return row_params(0)


@pytest.fixture(scope="session")
def row10():
    return row_params(9)
