import numpy as np
import pytest

from ntdkit.cones import check_ssc
from ntdkit.evaluate import align_columns


def stochastic(n, r, rng):
    u = rng.random((n, r)) + 0.05
    return u / u.sum(axis=0)


def two_nonzero(n, r, rng):
    """Rows with exactly two uniform nonzeros, every column touched."""
    while True:
        h = np.zeros((n, r))
        for i in range(n):
            cols = rng.choice(r, size=2, replace=False)
            h[i, cols] = rng.random(2)
        if (h.sum(axis=0) > 0).all():
            return h / h.sum(axis=0)


def two_nonzero_ssc(n, r, rng):
    while True:
        h = two_nonzero(n, r, rng)
        if check_ssc(h).ssc:
            return h


def align_error(u_est, u_ref):
    """Worst relative column error after Hungarian matching."""
    _, err = align_columns(u_est, u_ref)
    return err


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
