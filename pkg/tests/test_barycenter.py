import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frechet_risk import spd
from frechet_risk.barycenter import (barycenter, frechet_function, kl_barycenter,
                                     kl_divergence, ls_wasserstein_barycenter,
                                     quantile_barycenter)
from frechet_risk.errors import NumericalError
from frechet_risk.models import (GridDensityModel, LocationScatterModel, PriorSet,
                                 student_t_law)

from conftest import gaussian_grid_set, random_ls_set, random_quantile_set, random_spd


def bar_residual(ps, S):
    R = spd.sqrt_spd(S)
    T = sum(w * spd.sqrt_spd(R @ m.S @ R) for w, m in zip(ps.weights, ps.models))
    return np.linalg.norm(S - T)


def test_quantile_barycenter_is_weighted_average(rng):
    ps = random_quantile_set(rng, n=4)
    bar = quantile_barycenter(ps)
    expect = ps.weights @ np.array([q.values for q in ps.models])
    assert np.allclose(bar.model.values, expect, atol=1e-14)
    # Frechet variance equals the weighted squared L2 distances
    ws = ps.models[0].weights
    V = sum(w * ws @ (q.values - expect) ** 2 for w, q in zip(ps.weights, ps.models))
    assert bar.frechet_variance == pytest.approx(V, rel=1e-12)


def test_ls_barycenter_one_dimensional_closed_form(rng):
    sig = rng.uniform(0.5, 3, 5)
    w = rng.dirichlet(np.ones(5))
    ps = PriorSet.of([LocationScatterModel([k], [[s]]) for k, s in enumerate(sig)], w)
    bar = ls_wasserstein_barycenter(ps)
    assert bar.model.S[0, 0] == pytest.approx((w @ np.sqrt(sig)) ** 2, rel=1e-12)
    assert bar.model.m[0] == pytest.approx(w @ np.arange(5))


def test_ls_barycenter_commuting_scatters():
    S1, S2 = np.diag([1.0, 4.0]), np.diag([9.0, 16.0])
    ps = PriorSet.of([LocationScatterModel([0, 0], S1), LocationScatterModel([1, 1], S2)])
    bar = ls_wasserstein_barycenter(ps)
    assert np.allclose(bar.model.S, np.diag([4.0, 9.0]), atol=1e-12)
    # W2^2 between commuting Gaussians: |dm|^2 + |sqrt S1 - sqrt S2|_F^2
    # each prior: |m - m_B|^2 = 0.5 and |diag(2, 3) - sqrt S_i|_F^2 = 2
    V = 0.5 + 2.0
    assert bar.frechet_variance == pytest.approx(V)


@pytest.mark.parametrize("d,n", [(2, 2), (3, 4), (5, 5)])
def test_ls_barycenter_equation_residual(rng, d, n):
    ps = random_ls_set(rng, d, n)
    bar = ls_wasserstein_barycenter(ps)
    assert bar_residual(ps, bar.model.S) <= 1e-10 * np.linalg.norm(bar.model.S)
    assert bar.residual <= 1e-10


def test_ls_barycenter_keeps_central_law(rng):
    ps = random_ls_set(rng, 2, 3, central=student_t_law(6))
    assert barycenter(ps).model.central == student_t_law(6)


def test_ls_and_quantile_barycenters_agree_in_one_dimension(rng):
    ls = PriorSet.of([LocationScatterModel([m], [[s]]) for m, s in [(0, 1), (2, 4), (-1, 0.25)]],
                     [0.2, 0.5, 0.3])
    q = PriorSet.of([m.to_quantile() for m in ls.models], ls.weights)
    b_ls, b_q = barycenter(ls), barycenter(q)
    induced = b_ls.model.to_quantile()
    assert np.allclose(b_q.model.values, induced.values, atol=1e-12)
    assert b_q.model.mean() == pytest.approx(b_ls.model.m[0], abs=1e-12)


def test_ls_barycenter_minimizes_frechet_function(rng):
    ps = random_ls_set(rng, 2, 3)
    bar = ls_wasserstein_barycenter(ps)
    assert frechet_function(ps, bar.model, bar) == pytest.approx(0.0, abs=1e-10)
    for _ in range(5):
        E = 0.05 * rng.standard_normal((2, 2))
        cand = LocationScatterModel(bar.model.m + 0.05 * rng.standard_normal(2),
                                    bar.model.S + E @ E.T)
        assert frechet_function(ps, cand, bar) > 0


def test_kl_barycenter_of_gaussians():
    means, var = np.array([0.0, 2.0, -1.0]), np.array([1.0, 2.0, 0.5])
    w = np.array([0.3, 0.3, 0.4])
    ps = gaussian_grid_set(means, var, w)
    bar = kl_barycenter(ps)
    prec = w @ (1 / var)
    v0 = 1 / prec
    m0 = v0 * (w @ (means / var))
    assert bar.model.mean()[0] == pytest.approx(m0, abs=1e-8)
    assert bar.model.covariance()[0, 0] == pytest.approx(v0, abs=1e-7)
    # the Frechet variance is the log of the normalizing constant
    assert bar.frechet_variance == pytest.approx(bar.diagnostics["log_C0"], abs=1e-10)
    log_int = (-0.5 * (w @ (means ** 2 / var) - m0 ** 2 / v0) + 0.5 * np.log(v0)
               - w @ (0.5 * np.log(var)))
    assert bar.diagnostics["log_C0"] == pytest.approx(-log_int, abs=1e-8)


def test_kl_divergence_gaussians():
    ps = gaussian_grid_set([0.0, 1.0], [1.0, 2.0])
    f, g = ps.models
    expect = 0.5 * (np.log(2.0) + (1 + 1) / 2 - 1)
    assert kl_divergence(f, g) == pytest.approx(expect, abs=1e-9)


def test_kl_barycenter_disjoint_support():
    axis = np.linspace(-10, 10, 201)
    a = np.where(axis < 0, 1.0, 0.0)
    b = 1.0 - a
    fa = GridDensityModel((axis,), a / GridDensityModel((axis,), a).integrate(a))
    fb = GridDensityModel((axis,), b / GridDensityModel((axis,), b).integrate(b))
    with pytest.raises(NumericalError, match="disjoint support"):
        kl_barycenter(PriorSet.of([fa, fb]))


def test_kl_barycenter_warns_on_tiny_overlap():
    ps = gaussian_grid_set([-6.0, 6.0], [0.5, 0.5], pad=10)
    with pytest.warns(RuntimeWarning, match="barely overlap"):
        kl_barycenter(ps)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 10_000))
def test_property_barycenter_equation(d, n, seed):
    rng = np.random.default_rng(seed)
    ps = random_ls_set(rng, d, n)
    bar = ls_wasserstein_barycenter(ps)
    S = bar.model.S
    assert spd.spd_violation(S) is None
    assert bar_residual(ps, S) <= 1e-10 * np.linalg.norm(S)
    assert bar.frechet_variance >= 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_property_barycenter_of_identical_priors(seed):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, 3)
    m = rng.standard_normal(3)
    ps = PriorSet.of([LocationScatterModel(m, S)] * 3, rng.dirichlet(np.ones(3)))
    bar = ls_wasserstein_barycenter(ps)
    assert np.allclose(bar.model.S, S, atol=1e-10)
    assert bar.frechet_variance == pytest.approx(0.0, abs=1e-9)
