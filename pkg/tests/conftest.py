import numpy as np
import pytest

from frechet_risk.models import (GridDensityModel, LocationScatterModel, PriorSet, QuantileModel,
                                 student_t_law)


def random_spd(rng, d, lo=0.5, hi=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q @ np.diag(rng.uniform(lo, hi, d)) @ Q.T


def random_sym(rng, d):
    A = rng.standard_normal((d, d))
    return (A + A.T) / 2


def random_quantile_set(rng, n=None, M=2001):
    """2-10 Gaussian / Student-t quantile priors with random weights."""
    n = n or int(rng.integers(2, 11))
    models = []
    for _ in range(n):
        loc, scale = rng.normal(0, 1), rng.uniform(0.5, 2.0)
        if rng.random() < 0.5:
            models.append(QuantileModel.normal(loc, scale, M))
        else:
            models.append(QuantileModel.student_t(float(rng.integers(3, 11)), loc, scale, M))
    return PriorSet.of(models, rng.dirichlet(np.ones(n)))


def random_ls_set(rng, d, n, central=None):
    kw = {} if central is None else {"central": central}
    models = [LocationScatterModel(rng.standard_normal(d), random_spd(rng, d), **kw)
              for _ in range(n)]
    return PriorSet.of(models, rng.dirichlet(np.ones(n)))


def gaussian_grid_set(means, variances, weights=None, size=4001, pad=8.0):
    from frechet_risk.models import common_axes
    sds = np.sqrt(variances)
    axes = common_axes([[m] for m in means], [[s] for s in sds], size=size, pad=pad)
    models = [GridDensityModel.normal(axes, m, v) for m, v in zip(means, variances)]
    return PriorSet.of(models, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def t5():
    return student_t_law(5)
