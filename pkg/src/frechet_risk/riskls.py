"""Wasserstein barycentric risk for d risk factors with location-scatter priors.

For priors N_i = law(m_i + S_i^{1/2} Z0) the risk measure is

    sup_{m,S}  Phi(m, S) - (1/(2 gamma)) (|m - m_B|^2 + F0(S))

with Phi(m, S) = E[Phi0(m + S^{1/2} Z0)] and F0 the normalized scatter part
of the Frechet function. Two solvers are provided: a fixed point on the
first-order conditions, and the first-order expansion in gamma, which needs
a coupled linear system over symmetric matrices followed by two Sylvester
solves per prior.

Gradient convention: grad_S is the symmetric matrix D with
dPhi = Tr(D dS) for symmetric dS. With R = S^{1/2} and
Psi_lk = E[d_l Phi0(m + R Z0) Z0_k], it solves R D + D R = sym(Psi).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import spd
from .barycenter import LSPriors, ls_wasserstein_barycenter
from .errors import ConvergenceError, NumericalError, ValidationError
from .models import (DEFAULT_SAMPLES, LocationScatterModel, RiskReport,
                     apply_gradient, apply_mapping, exact_ls_expectation)

PERTURBATIVE_HINT = "use the perturbative method (--method perturbative) or a smaller gamma"


@dataclass(frozen=True, eq=False)
class GradientPair:
    """Derivatives of Phi(m, S): grad_m (vector) and grad_S (symmetric)."""

    grad_m: np.ndarray
    grad_S: np.ndarray
    stderr_m: np.ndarray = None
    stderr_value: float = 0.0


@dataclass(frozen=True, eq=False)
class PerturbationSolution:
    """First-order corrections around the barycenter.

    Attributes
    ----------
    m_tilde : mean correction (the gradient in m at the barycenter)
    S_tilde : scatter correction
    J : derivative of the scatter square root
    H : derivatives of (B S_i B)^{1/2}, one per prior
    Y, Z : first and second order Sylvester solutions, one per prior
    residuals : dict of absolute residual norms
    """

    m_tilde: np.ndarray
    S_tilde: np.ndarray
    J: np.ndarray
    H: list
    Y: list
    Z: list
    residuals: dict = field(default_factory=dict)


# ------------------------------------------------------------ gradients

def _exact_gradients(m, S, phi):
    p = phi.params
    d = len(m)
    if phi.tag == "affine" and d == 1:
        return np.array([p["b"]]), np.zeros((1, 1))
    if phi.tag == "quadratic" and d == 1:
        return np.array([p["b"] + p["c"] * m[0]]), np.array([[0.5 * p["c"]]])
    if phi.tag == "linear-multi":
        return np.array(p["a"]), np.zeros((d, d))
    if phi.tag == "quadratic-multi":
        return p["a"] + 2 * p["A"] @ m, np.array(p["A"])
    return None


class PhiEvaluator:
    """Phi and its gradients with common random numbers.

    The draws of Z0 are made once, so every evaluation (at any m, S) uses
    the same sample and the estimator is a smooth function of (m, S).
    """

    def __init__(self, phi, central, d, n_samples=DEFAULT_SAMPLES, seed=0, exact="auto"):
        if phi.dim is None and d != 1:
            raise ValidationError("scalar risk mapping used with multivariate factors")
        if phi.dim is not None and phi.dim != d:
            raise ValidationError(f"risk mapping dimension {phi.dim} does not match factors ({d})")
        self.phi = phi
        self.d = d
        self.use_exact = exact != "mc" and _exact_gradients(np.zeros(d), np.eye(d), phi) is not None
        self.z = None
        if not self.use_exact:
            if n_samples < 2:
                raise ValidationError("n_samples must be at least 2")
            self.z = central.sample(int(n_samples), d, seed)

    def __call__(self, m, S):
        m = np.asarray(m, dtype=float)
        if self.use_exact:
            gm, gS = _exact_gradients(m, S, self.phi)
            return exact_ls_expectation(m, S, self.phi), GradientPair(gm, spd.sym(gS))
        R = spd.sqrt_spd(S)
        x = m + self.z @ R
        vals = apply_mapping(self.phi, x)
        grads = apply_gradient(self.phi, x)
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
            raise NumericalError("risk mapping or its gradient is not finite on the sample")
        n = len(vals)
        gm = grads.mean(axis=0)
        psi = grads.T @ self.z / n
        gS = spd.solve_sylvester_spd(R, spd.sym(psi))
        se_m = grads.std(axis=0, ddof=1) / np.sqrt(n)
        se_v = float(vals.std(ddof=1) / np.sqrt(n))
        return float(vals.mean()), GradientPair(gm, spd.sym(gS), se_m, se_v)


def eval_phi_gradients(model, phi, n_samples=DEFAULT_SAMPLES, seed=0, method="auto"):
    """Phi(m, S) and its gradients for a location-scatter model.

    Parameters
    ----------
    model : LocationScatterModel
    phi : RiskMapping
    n_samples : int
    seed : int
    method : {"auto", "mc"}
        ``auto`` uses exact formulas for affine, quadratic, linear-multi and
        quadratic-multi mappings.

    Returns
    -------
    value : float
    GradientPair
    """
    msgs = model.violations()
    if msgs:
        raise ValidationError("invalid location-scatter model: " + "; ".join(msgs), msgs)
    ev = PhiEvaluator(phi, model.central, model.dim, n_samples, seed, method)
    return ev(model.m, model.S)


# ---------------------------------------------------------- fixed point

def _check_gamma(gamma, allow_zero=False):
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma < 0 or (gamma == 0 and not allow_zero):
        raise ValidationError(f"gamma must be positive, got {gamma}")
    return gamma


def _penalized_value(pri, V0, mB, gamma, phi_val, m, S):
    pen = float(np.sum((m - mB) ** 2)) + (pri.scatter_cost(S) - V0)
    return phi_val - pen / (2 * gamma), pen


def scatter_update(pri, S, grad_S, gamma):
    """One covariance step S^{-1/2} X^2 S^{-1/2} with
    X = sum_i w_i (S^{1/2} S_i S^{1/2})^{1/2} + 2 gamma S^{1/2} grad_S S^{1/2}."""
    R, Ri = spd.sqrt_and_inv_sqrt(S)
    X = spd.sym(pri.root_sum(R) + 2 * gamma * R @ grad_S @ R)
    if spd.spd_violation(X) is not None:
        raise ConvergenceError("scatter update left the positive definite cone; "
                               + PERTURBATIVE_HINT)
    S_new = spd.sym(Ri @ X @ X @ Ri)
    msg = spd.spd_violation(S_new, "scatter iterate")
    if msg is not None:
        raise NumericalError(msg)
    return S_new


def _joint_change(m, S, m_new, S_new):
    num = np.sqrt(np.sum((m_new - m) ** 2) + np.sum((S_new - S) ** 2))
    return float(num / (1.0 + np.sqrt(np.sum(m ** 2) + np.sum(S ** 2))))


def risk_ls_fixed_point(ps, phi, gamma, tol=1e-10, max_iter=500,
                        n_samples=DEFAULT_SAMPLES, seed=0):
    """Solve the first-order conditions by a fixed point.

    Iterates m <- m_B + gamma grad_m and the symmetric scatter update of
    :func:`scatter_update` until the joint relative change is below `tol`.

    Parameters
    ----------
    ps : PriorSet of location-scatter models
    phi : RiskMapping
    gamma : float
    tol : float
    max_iter : int
    n_samples : int
        Monte Carlo size for mappings without closed-form moments.
    seed : int

    Returns
    -------
    RiskReport

    Raises
    ------
    ConvergenceError
        When the iterate distance grows for 3 consecutive iterations or
        `max_iter` is reached. The perturbative method is the usual fallback.
    """
    gamma = _check_gamma(gamma)
    pri = LSPriors(ps)
    bar = ls_wasserstein_barycenter(pri)
    mB, SB = bar.model.m, bar.model.S
    V0 = pri.scatter_cost(SB)
    ev = PhiEvaluator(phi, pri.central, pri.d, n_samples, seed)
    m, S = mB.copy(), SB.copy()
    prev, rising = np.inf, 0
    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        _, g = ev(m, S)
        m_new = mB + gamma * g.grad_m
        S_new = scatter_update(pri, S, g.grad_S, gamma)
        change = _joint_change(m, S, m_new, S_new)
        m, S = m_new, S_new
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(S))):
            raise ConvergenceError("fixed point produced non-finite iterates; " + PERTURBATIVE_HINT, it)
        if change <= tol:
            break
        rising = rising + 1 if change > prev else 0
        prev = change
        if rising >= 3:
            raise ConvergenceError("fixed point is diverging or oscillating; " + PERTURBATIVE_HINT,
                                   it, change)
    else:
        raise ConvergenceError(f"fixed point did not converge in {max_iter} iterations "
                               f"(last change {change:.3g}); " + PERTURBATIVE_HINT, max_iter, change)
    phi_val, g = ev(m, S)
    value, pen = _penalized_value(pri, V0, mB, gamma, phi_val, m, S)
    foc_m = float(np.linalg.norm(m - mB - gamma * g.grad_m))
    diag = {"iterations": it, "change": change, "foc_residual_m": foc_m,
            "barycenter_expectation": ev(mB, SB)[0], "phi": phi_val, "penalty": pen,
            "n_samples": None if ev.use_exact else int(n_samples), "seed": seed}
    return RiskReport(float(value), LocationScatterModel(m, S, pri.central), gamma,
                      "fixed-point", diag)


# ----------------------------------------------------- perturbation system

def _sym_basis(d):
    iu = np.triu_indices(d)
    return iu


def _svec(M, iu):
    return M[iu]


def _smat(v, iu, d):
    M = np.zeros((d, d))
    M[iu] = v
    return M + np.triu(M, 1).T


class PerturbationSystem:
    """Linearization of the scatter first-order condition at the barycenter.

    Unknowns (S~, J, H_1..H_n), all symmetric, satisfy

        S~ - sum_i w_i H_i          = 2 B W B
        S~ - J B - B J              = 0
        J S_i B + B S_i J - H_i E_i - E_i H_i = 0,   i = 1..n

    with B = S_B^{1/2} and E_i = (B S_i B)^{1/2}. The third line is the
    derivative of E_i^2 = B S_i B along the square-root perturbation J.
    The system is assembled once in a basis of symmetric matrices and
    LU-factorized, so several right-hand sides W can be solved cheaply.
    """

    def __init__(self, pri, SB):
        self.pri = pri
        self.SB = SB
        d = pri.d
        self.d = d
        self.B = spd.sqrt_spd(SB)
        w = pri.w
        self.active = [i for i in range(len(w)) if w[i] > 0]
        self.E = [spd.sqrt_sandwich(self.B, pri.S[i]) for i in self.active]
        self.G = [spd.sqrt_sandwich(pri.sqrtS[i], SB) for i in self.active]
        self.iu = _sym_basis(d)
        p = len(self.iu[0])
        self.p = p
        nb = len(self.active) + 2
        self.size = nb * p
        A = np.empty((self.size, self.size))
        for blk in range(nb):
            for k in range(p):
                e = np.zeros(p)
                e[k] = 1.0
                X = [np.zeros((d, d))] * nb
                X = list(X)
                X[blk] = _smat(e, self.iu, d)
                A[:, blk * p + k] = np.concatenate(
                    [_svec(R, self.iu) for R in self._apply(X[0], X[1], X[2:])])
        self.matrix = A
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e13:
            raise NumericalError(f"perturbation system is singular (condition number {cond:.3g}); "
                                 "priors may be degenerate")
        self.cond = float(cond)
        self.lu = sla.lu_factor(A)

    def _apply(self, St, J, H):
        w = self.pri.w[self.active]
        B = self.B
        out = [St - sum(wi * Hi for wi, Hi in zip(w, H)), St - J @ B - B @ J]
        for i, Hi, Ei in zip(self.active, H, self.E):
            Si = self.pri.S[i]
            out.append(J @ Si @ B + B @ Si @ J - Hi @ Ei - Ei @ Hi)
        return out

    def solve(self, W):
        """Solve for (S~, J, [H_i]) with right-hand side 2 B W B."""
        d, p = self.d, self.p
        rhs = np.zeros(self.size)
        top = 2 * self.B @ spd.sym(W) @ self.B
        rhs[:p] = _svec(spd.sym(top), self.iu)
        x = sla.lu_solve(self.lu, rhs)
        blocks = [_smat(x[k * p:(k + 1) * p], self.iu, d) for k in range(self.size // p)]
        St, J, H = blocks[0], blocks[1], blocks[2:]
        res = self._apply(St, J, H)
        res[0] = res[0] - top
        return St, J, H, [float(np.linalg.norm(r)) for r in res]

    def sylvester_cascade(self, St):
        """Y_i solving Y G_i + G_i Y = B_i S~ B_i and Z_i solving Z G_i + G_i Z = -2 Y_i^2."""
        Y, Z, res = [], [], []
        for i, Gi in zip(self.active, self.G):
            Bi = self.pri.sqrtS[i]
            rhs_y = spd.sym(Bi @ St @ Bi)
            Yi = spd.solve_sylvester_spd(Gi, rhs_y)
            rhs_z = -2 * Yi @ Yi
            Zi = spd.solve_sylvester_spd(Gi, spd.sym(rhs_z))
            res.append(max(np.linalg.norm(Yi @ Gi + Gi @ Yi - rhs_y),
                           np.linalg.norm(Zi @ Gi + Gi @ Zi - rhs_z)))
            Y.append(Yi)
            Z.append(Zi)
        return Y, Z, res

    def weighted_trace(self, mats):
        return float(sum(w * np.trace(M) for w, M in zip(self.pri.w[self.active], mats)))


def solve_perturbation(pri, SB, W, system=None):
    """Solve the perturbation system and the Sylvester cascades for gradient W.

    Returns
    -------
    PerturbationSolution (with m_tilde left empty) and the system used.
    """
    system = system or PerturbationSystem(pri, SB)
    St, J, H, lin_res = system.solve(W)
    Y, Z, syl_res = system.sylvester_cascade(St)
    res = {"linear_system": max(lin_res), "linear_system_blocks": lin_res,
           "sylvester": max(syl_res) if syl_res else 0.0}
    return PerturbationSolution(None, St, J, H, Y, Z, res), system


def risk_ls_perturbative(ps, phi, gamma, n_samples=DEFAULT_SAMPLES, seed=0):
    """First-order expansion of the risk in gamma.

    value = Phi(m_B, S_B) + gamma (|M_B|^2 / 2 + Tr(C_B S~) + Tr(sum_i w_i Z_i) / 2)

    where M_B, C_B are the gradients of Phi at the barycenter, S~ solves the
    perturbation system with W = C_B and Z_i come from the Sylvester
    cascade. At the solution Tr(sum w_i Z_i) = -Tr(C_B S~); the gap is
    reported as ``trace_identity_gap``.

    Parameters
    ----------
    ps : PriorSet of location-scatter models
    phi : RiskMapping
    gamma : float
        Non-negative.
    n_samples, seed : Monte Carlo controls for non-polynomial mappings.

    Returns
    -------
    RiskReport
        Maximizer m_B + gamma M_B, S_B + gamma S~.
    """
    gamma = _check_gamma(gamma, allow_zero=True)
    pri = LSPriors(ps)
    bar = ls_wasserstein_barycenter(pri)
    mB, SB = bar.model.m, bar.model.S
    ev = PhiEvaluator(phi, pri.central, pri.d, n_samples, seed)
    phi0, g = ev(mB, SB)
    sol, system = solve_perturbation(pri, SB, g.grad_S)
    sol = PerturbationSolution(g.grad_m, sol.S_tilde, sol.J, sol.H, sol.Y, sol.Z, sol.residuals)
    tr_cs = float(np.trace(g.grad_S @ sol.S_tilde))
    tr_z = system.weighted_trace(sol.Z)
    coef = 0.5 * float(g.grad_m @ g.grad_m) + tr_cs + 0.5 * tr_z
    value = phi0 + gamma * coef
    m = mB + gamma * g.grad_m
    S = spd.sym(SB + gamma * sol.S_tilde)
    diag = {"zeroth_order": phi0, "first_order_coefficient": coef,
            "barycenter_expectation": phi0, "trace_C_Stilde": tr_cs, "trace_Z": tr_z,
            "trace_identity_gap": tr_z + tr_cs, "residuals": sol.residuals,
            "condition_number": system.cond, "solution": sol,
            "n_samples": None if ev.use_exact else int(n_samples), "seed": seed}
    return RiskReport(float(value), LocationScatterModel(m, S, pri.central), gamma,
                      "perturbative", diag)


def risk_ls(ps, phi, gamma, method="auto", **kwargs):
    """Dispatch: ``auto`` and ``fixed-point`` use the fixed point,
    ``perturbative`` the expansion."""
    if method in ("auto", "fixed-point", "fixed_point"):
        return risk_ls_fixed_point(ps, phi, gamma, **kwargs)
    if method == "perturbative":
        kw = {k: v for k, v in kwargs.items() if k in ("n_samples", "seed")}
        return risk_ls_perturbative(ps, phi, gamma, **kw)
    raise ValidationError(f"unknown method {method!r}")
