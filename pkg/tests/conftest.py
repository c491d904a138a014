import numpy as np
import pytest

from fedline import dataio


def make_dataset(x, y, ids=None, ts=None, names=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y)
    n, p = x.shape
    if ids is None:
        ids = np.arange(n)
    if ts is None:
        ts = np.arange(n, dtype=float)
    if names is None:
        names = tuple(f"F{j + 1}" for j in range(p))
    return dataio.Dataset(ids, ts, x, y, names)


@pytest.fixture
def small_separable():
    # one informative feature, one noise feature
    rng = np.random.default_rng(42)
    n = 200
    y = (np.arange(n) % 2).astype(int)
    x = np.column_stack([y * 4.0 - 2.0 + 0.3 * rng.standard_normal(n),
                         rng.standard_normal(n)])
    return make_dataset(x, y)
