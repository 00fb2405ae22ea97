"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Oracles are computed here, independently of the solvers under test:
weighted means of quantile arrays, pointwise maximization of quadratic
objectives, Kronecker-product linear solves, Newton iteration on the
Riccati equation, Gaussian moment-generating functions.
"""

import os
import time

import numpy as np
import pytest

from frechet_risk import spd
from frechet_risk.allocation import allocate_numeric, allocate_perturbative
from frechet_risk.barycenter import kl_barycenter, ls_wasserstein_barycenter
from frechet_risk.entropic import entropic_risk, entropic_risk_direct
from frechet_risk.errors import IllPosedError
from frechet_risk.models import affine, custom, linear, quadratic, quadratic_multi
from frechet_risk.premia import SimulationConfig, run_robustness_study, study_cell
from frechet_risk.risk1d import (risk_1d_affine, risk_1d_direct, risk_1d_foc,
                                 risk_1d_perturbative, risk_1d_quadratic)
from frechet_risk.riskls import risk_ls_fixed_point, risk_ls_perturbative

from conftest import gaussian_grid_set, random_ls_set, random_quantile_set, random_spd, random_sym


@pytest.fixture
def verdict(capsys):
    def report(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"
    return report


def barycenter_quantiles(ps):
    G = np.array([q.values for q in ps.models])
    return ps.weights @ G, ps.models[0].weights


def kron_sylvester(G, C):
    d = len(G)
    I = np.eye(d)
    K = np.kron(G.T, I) + np.kron(I, G)
    return np.linalg.solve(K, C.reshape(-1, order="F")).reshape(d, d, order="F")


def newton_riccati(A, B, iters=60):
    """Solve X A^{-1} X = B by Newton's method with Kronecker-linearized steps."""
    d = len(A)
    Ai = np.linalg.inv(A)
    I = np.eye(d)
    X = np.eye(d) * np.sqrt(np.trace(B) / np.trace(Ai))
    for _ in range(iters):
        F = X @ Ai @ X - B
        if np.linalg.norm(F) < 1e-15 * np.linalg.norm(B):
            break
        # dF[H] = H (A^{-1} X) + (X A^{-1}) H
        K = np.kron((Ai @ X).T, I) + np.kron(I, X @ Ai)
        H = np.linalg.solve(K, -F.reshape(-1, order="F")).reshape(d, d, order="F")
        X = X + 0.5 * (H + H.T)
    return X


# ------------------------------------------------------------------ 1

def test_criterion_01_affine_closed_form(verdict):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        ps = random_quantile_set(rng)
        alpha, b, gamma = rng.normal(), rng.normal(0, 2), rng.uniform(1e-3, 0.5)
        gB, ws = barycenter_quantiles(ps)
        oracle = alpha + b * (ws @ gB) + gamma * b * b / 2
        val = risk_1d_direct(ps, affine(alpha, b), gamma).value
        worst = max(worst, abs(val - oracle) / max(abs(oracle), 1e-12))
    dt = time.perf_counter() - t0
    verdict("criterion 1 (affine 1-D, direct vs closed form)", worst <= 1e-5 and dt < 10,
            f"max rel err {worst:.2e} (tol 1e-5), {dt:.2f}s (limit 10s)")


# ------------------------------------------------------------------ 2

def test_criterion_02_quadratic_closed_form(verdict):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst, checked, raised, cases = 0.0, 0, 0, 0
    while checked < 20:
        ps = random_quantile_set(rng)
        alpha, b, c = rng.normal(), rng.normal(), rng.uniform(-3, 3)
        gamma = rng.uniform(1e-3, 0.5)
        lam = 1 - c * gamma
        if lam < 0.1:
            continue
        gB, ws = barycenter_quantiles(ps)
        dphi = b + c * gB
        # pointwise maximizer of Phi(g) - (g - gB)^2 / (2 gamma) is gB + gamma Phi'(gB) / lam
        oracle = ws @ (alpha + b * gB + 0.5 * c * gB ** 2) + gamma / (2 * lam) * ws @ dphi ** 2
        phi = quadratic(alpha, b, c)
        for val in (risk_1d_foc(ps, phi, gamma).value,
                    risk_1d_quadratic(ps, alpha, b, c, gamma).value):
            worst = max(worst, abs(val - oracle) / max(1.0, abs(oracle)))
        checked += 1
    ps = random_quantile_set(rng, n=3)
    for c, gamma in [(1.0, 1.0), (2.0, 0.5), (4.0, 0.3), (10.0, 0.2)]:
        cases += 2
        for solver in (lambda: risk_1d_quadratic(ps, 0.0, 1.0, c, gamma),
                       lambda: risk_1d_foc(ps, quadratic(0.0, 1.0, c), gamma)):
            try:
                solver()
            except IllPosedError:
                raised += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and raised == cases and dt < 10
    verdict("criterion 2 (quadratic 1-D, FOC vs closed form)", ok,
            f"max err {worst:.2e} (tol 1e-8) over {checked} cases with lambda >= 0.1; "
            f"{raised}/{cases} lambda <= 0 cases raised; {dt:.2f}s")


# ------------------------------------------------------------------ 3

def test_criterion_03_barycenter_fixed_point(verdict):
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst_res, worst_1d = 0.0, 0.0
    for d in (1, 2, 5):
        for n in (2, 5):
            ps = random_ls_set(rng, d, n)
            S = ls_wasserstein_barycenter(ps).model.S
            R = spd.sqrt_spd(S)
            T = sum(w * spd.sqrt_spd(spd.sym(R @ m.S @ R)) for w, m in zip(ps.weights, ps.models))
            worst_res = max(worst_res, np.linalg.norm(S - T) / np.linalg.norm(S))
            if d == 1:
                sig = np.array([m.S[0, 0] for m in ps.models])
                exact = (ps.weights @ np.sqrt(sig)) ** 2
                worst_1d = max(worst_1d, abs(S[0, 0] - exact) / exact)
    dt = time.perf_counter() - t0
    verdict("criterion 3 (barycenter fixed point)",
            worst_res <= 1e-10 and worst_1d <= 1e-12 and dt < 5,
            f"residual/|S_B| {worst_res:.2e} (tol 1e-10), 1-D rel err {worst_1d:.2e} "
            f"(tol 1e-12), {dt:.2f}s")


# ------------------------------------------------------------------ 4

def test_criterion_04_sylvester_geometric_mean(verdict):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    worst_syl, worst_gm = 0.0, 0.0
    for k in range(100):
        d = 1 + k % 5
        G = random_spd(rng, d, 0.1, 10.0)
        C = rng.standard_normal((d, d))
        Y = spd.solve_sylvester_spd(G, C)
        worst_syl = max(worst_syl, np.linalg.norm(Y - kron_sylvester(G, C)) / np.linalg.norm(Y))
        A, B = random_spd(rng, d, 0.1, 10.0), random_spd(rng, d, 0.1, 10.0)
        X = spd.geometric_mean(A, B)
        worst_gm = max(worst_gm, np.linalg.norm(X - newton_riccati(A, B)) / np.linalg.norm(X))
    dt = time.perf_counter() - t0
    verdict("criterion 4 (Sylvester / geometric-mean kernels)",
            worst_syl <= 1e-10 and worst_gm <= 1e-10 and dt < 5,
            f"Sylvester vs Kronecker {worst_syl:.2e}, geometric mean vs Newton-Kronecker "
            f"{worst_gm:.2e} (tol 1e-10), {dt:.2f}s")


# ------------------------------------------------------------------ 5

def test_criterion_05_linear_exactness(verdict):
    rng = np.random.default_rng(505)
    worst = 0.0
    for k in range(20):
        d = 1 + k % 5
        ps = random_ls_set(rng, d, int(rng.integers(2, 6)))
        a = rng.standard_normal(d)
        gamma = rng.uniform(0.01, 0.5)
        mB = ps.weights @ np.array([m.m for m in ps.models])
        oracle = a @ mB + gamma * a @ a / 2
        for rep in (risk_ls_fixed_point(ps, linear(a), gamma),
                    risk_ls_perturbative(ps, linear(a), gamma)):
            worst = max(worst, abs(rep.value - oracle))
    verdict("criterion 5 (multivariate linear exactness)", worst <= 1e-9,
            f"max abs err {worst:.2e} over 20 instances x 2 solvers (tol 1e-9)")


# ------------------------------------------------------------------ 6

def test_criterion_06_perturbative_order(verdict):
    # instances: d in 1..5, n in 2..5, curvature A scaled to spectral norm 0.5
    rng = np.random.default_rng(606)
    ratios = []
    for _ in range(10):
        d, n = int(rng.integers(1, 6)), int(rng.integers(2, 6))
        ps = random_ls_set(rng, d, n)
        A = random_sym(rng, d)
        phi = quadratic_multi(rng.standard_normal(d), 0.5 * A / np.linalg.norm(A, 2))
        err = [abs(risk_ls_perturbative(ps, phi, g).value
                   - risk_ls_fixed_point(ps, phi, g, tol=1e-13).value) for g in (0.02, 0.01)]
        ratios.append(err[0] / err[1])
    ratios = np.array(ratios)
    ok = bool(np.all((ratios >= 3.0) & (ratios <= 5.0)))
    verdict("criterion 6 (perturbative error is second order)", ok,
            f"error ratios gamma=0.02 vs 0.01 in [{ratios.min():.3f}, {ratios.max():.3f}] "
            "(required [3, 5], 10 instances)")


# ------------------------------------------------------------------ 7

def _solver_suite(rng):
    """(name, risk(phi, gamma), base mapping, barycenter expectation) for every solver."""
    q = random_quantile_set(rng, n=4)
    gB, ws = barycenter_quantiles(q)
    soft = custom(lambda z: np.logaddexp(0, z), lambda z: 0.5 * (1 + np.tanh(z / 2)))
    quad = quadratic(0.2, 0.5, 0.8)
    ls = random_ls_set(rng, 2, 3)
    bar = ls_wasserstein_barycenter(ls).model
    qm = quadratic_multi(rng.standard_normal(2), 0.3 * random_sym(rng, 2), alpha=0.1)
    e_qm = qm.params["alpha"] + qm.params["a"] @ bar.m + bar.m @ qm.params["A"] @ bar.m \
        + np.trace(qm.params["A"] @ bar.S)
    g = gaussian_grid_set([0.0, 1.0], [1.0, 0.6], [0.5, 0.5], size=1201)
    f0 = kl_barycenter(g).model
    e_soft_grid = f0.integrate(f0.density * soft(f0.axes[0]))

    def via_affine(phi, gamma):
        p = phi.params
        return risk_1d_affine(q, p["alpha"], p["b"], gamma).value

    def via_quadratic(phi, gamma):
        p = phi.params
        return risk_1d_quadratic(q, p["alpha"], p["b"], p["c"], gamma).value

    return [
        ("risk1d closed affine", via_affine, affine(0.3, -1.2), ws @ (0.3 - 1.2 * gB)),
        ("risk1d closed quadratic", via_quadratic, quad, ws @ quad(gB)),
        ("risk1d foc", lambda p, y: risk_1d_foc(q, p, y).value, soft, ws @ soft(gB)),
        ("risk1d direct", lambda p, y: risk_1d_direct(q, p, y).value, soft, ws @ soft(gB)),
        ("risk1d perturbative", lambda p, y: risk_1d_perturbative(q, p, y).value, soft,
         ws @ soft(gB)),
        ("riskls fixed-point", lambda p, y: risk_ls_fixed_point(ls, p, y, tol=1e-13).value, qm,
         e_qm),
        ("riskls perturbative", lambda p, y: risk_ls_perturbative(ls, p, y).value, qm, e_qm),
        ("entropic closed", lambda p, y: entropic_risk(g, p, y).value, soft, e_soft_grid),
        ("entropic direct", lambda p, y: entropic_risk_direct(g, p, y).value, soft, e_soft_grid),
    ]


def test_criterion_07_risk_measure_properties(verdict):
    rng = np.random.default_rng(707)
    gammas = [0.01, 0.05, 0.1, 0.2, 0.3]
    kappa = 0.75
    failures, worst_cash, worst_low = [], 0.0, np.inf
    for name, risk, phi, e0 in _solver_suite(rng):
        vals = np.array([risk(phi, y) for y in gammas])
        if np.any(np.diff(vals) < -1e-12):
            failures.append(f"{name}: not monotone in gamma")
        low = vals.min() - e0
        worst_low = min(worst_low, low)
        if low < -1e-9:
            failures.append(f"{name}: below barycenter expectation by {-low:.2e}")
        shifted = phi.shifted(kappa)
        cash = max(abs(risk(shifted, y) - (v - kappa)) for y, v in zip(gammas[::2], vals[::2]))
        worst_cash = max(worst_cash, cash)
        if cash > 1e-9:
            failures.append(f"{name}: cash invariance off by {cash:.2e}")
    verdict("criterion 7 (monotone in gamma, barycenter bound, cash invariance)", not failures,
            "; ".join(failures) or f"9 solvers; min(rho - E_B) {worst_low:.2e}, "
            f"max cash error {worst_cash:.2e} (tol 1e-9)")


# ------------------------------------------------------------------ 8

def test_criterion_08_entropic(verdict):
    means, var = np.array([0.0, 1.0, 2.5]), np.array([1.0, 0.5, 2.0])
    w = np.array([0.5, 0.3, 0.2])
    ps = gaussian_grid_set(means, var, w)
    v0 = 1 / (w @ (1 / var))
    m0 = v0 * (w @ (means / var))
    err_mgf = 0.0
    for gamma in (0.05, 0.2, 0.5, 1.0):
        err_mgf = max(err_mgf, abs(entropic_risk(ps, affine(0, 1), gamma).value
                                   - (m0 + gamma * v0 / 2)))
    small = gaussian_grid_set(means, var, w, size=1201)
    soft = custom(lambda z: np.logaddexp(0, z))
    err_direct = max(abs(entropic_risk(small, phi, 0.4).value
                         - entropic_risk_direct(small, phi, 0.4).value)
                     for phi in (affine(0, 1), soft))
    bar = kl_barycenter(ps)
    err_vm = abs(bar.frechet_variance - bar.diagnostics["log_C0"])
    ok = err_mgf <= 1e-4 and err_direct <= 1e-5 and err_vm <= 1e-8
    verdict("criterion 8 (entropic closed form)", ok,
            f"vs Gaussian MGF {err_mgf:.2e} (tol 1e-4), vs direct {err_direct:.2e} (tol 1e-5), "
            f"V_M - log C0 {err_vm:.2e} (tol 1e-8)")


# ------------------------------------------------------------------ 9

def test_criterion_09_allocation(verdict):
    # portfolios: d in 1..3, n in 2..4, K in 2..4 sectors; each sector's linear part
    # has norm 1/K and its curvature spectral norm 0.5/K (unit total exposure)
    rng = np.random.default_rng(909)
    worst_ratio, worst_lin = 0.0, 0.0
    for _ in range(20):
        d, n, K = int(rng.integers(1, 4)), int(rng.integers(2, 5)), int(rng.integers(2, 5))
        ps = random_ls_set(rng, d, n)
        maps = []
        for _ in range(K):
            A = random_sym(rng, d)
            a = rng.standard_normal(d)
            maps.append(quadratic_multi(a / np.linalg.norm(a) / K,
                                        0.5 * A / np.linalg.norm(A, 2) / K))
        for gamma in (0.01, 0.02):
            p = allocate_perturbative(ps, maps, gamma).contributions
            q = allocate_numeric(ps, maps, gamma).contributions
            worst_ratio = max(worst_ratio, np.abs(p - q).max() / max(1e-5, 10 * gamma ** 2))
        sectors = [rng.standard_normal(d) for _ in range(K)]
        mB = ps.weights @ np.array([m.m for m in ps.models])
        a = sum(sectors)
        expect = np.array([s @ mB + 0.1 * a @ s for s in sectors])
        for rep in (allocate_perturbative(ps, [linear(s) for s in sectors], 0.1),
                    allocate_numeric(ps, [linear(s) for s in sectors], 0.1)):
            worst_lin = max(worst_lin, np.abs(rep.contributions - expect).max())
    ok = worst_ratio <= 1.0 and worst_lin <= 1e-6
    verdict("criterion 9 (allocation consistency)", ok,
            f"max |pert - numeric| / max(1e-5, 10 gamma^2) = {worst_ratio:.3f} (must be <= 1), "
            f"linear closed form err {worst_lin:.2e} (tol 1e-6)")


# ----------------------------------------------------------------- 10

@pytest.fixture(scope="module")
def study():
    os.environ.pop("FRECHET_RISK_THREADS", None)
    cfg = SimulationConfig(replications=100, seed=0)
    t0 = time.perf_counter()
    rows = run_robustness_study(cfg)
    return cfg, rows, time.perf_counter() - t0


def test_criterion_10a_wasserstein_beats_average(verdict, study):
    cfg, rows, dt = study
    losses = []
    for h in cfg.homogeneity:
        for n in cfg.n_experts:
            for g in cfg.gamma_grid:
                if g > 0.01:
                    continue
                w = study_cell(rows, h, n, g, "wasserstein")["mean_rel_err"]
                a = study_cell(rows, h, n, g, "average")["mean_rel_err"]
                if not w < a:
                    losses.append(f"{h}/n={n}/gamma={g}: {w:.4f} vs {a:.4f}")
    verdict("criterion 10a (wasserstein error < average error at gamma <= 0.01)",
            not losses and dt < 300,
            f"{len(losses)} of 36 cells violate ({'; '.join(losses[:4])}"
            f"{' ...' if len(losses) > 4 else ''}); study {dt:.1f}s")


def test_criterion_10b_error_monotone_in_gamma(verdict, study):
    cfg, rows, dt = study
    grid = sorted(cfg.gamma_grid, reverse=True)
    bad = []
    for h in cfg.homogeneity:
        for n in cfg.n_experts:
            errs = [study_cell(rows, h, n, g, "wasserstein")["mean_rel_err"] for g in grid]
            inversions = int(np.sum(np.diff(errs) > 0))
            if inversions > 1:
                bad.append(f"{h}/n={n}: {inversions} inversions")
    verdict("criterion 10b (wasserstein error falls as gamma falls, <= 1 inversion per column)",
            not bad and dt < 300, "; ".join(bad) or f"all 9 columns ok; study {dt:.1f}s")


def test_criterion_10c_sd_falls_with_n(verdict, study):
    cfg, rows, dt = study
    bad, detail = [], []
    for h in cfg.homogeneity:
        sd5 = study_cell(rows, h, 5, 0.0, "wasserstein")["sd_rel_err"]
        sd30 = study_cell(rows, h, 30, 0.0, "wasserstein")["sd_rel_err"]
        detail.append(f"{h} {sd5:.4f}->{sd30:.4f}")
        if not sd30 < sd5:
            bad.append(h)
    verdict("criterion 10c (sd of wasserstein error falls from n=5 to n=30 at gamma=0)",
            not bad and dt < 300, ", ".join(detail) + f"; study {dt:.1f}s")
