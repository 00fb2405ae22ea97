"""Wasserstein barycentric risk for a single risk factor.

With quantile priors the risk measure is the value of

    sup_g  int_0^1 Phi0(g(s)) ds - (1/(2 gamma)) int_0^1 (g(s) - g_B(s))^2 ds

over quantile functions g, where g_B is the barycentric quantile. This module
provides closed forms for affine and quadratic mappings, a pointwise solver
for the first-order condition g - gamma Phi0'(g) = g_B, a projected ascent
solver for the discretized problem, and the first-order expansion in gamma.
"""

import numpy as np
from scipy.optimize import isotonic_regression

from .barycenter import quantile_barycenter
from .errors import ConvergenceError, IllPosedError, ValidationError
from .models import QuantileModel, RiskReport, affine, quadratic, require_valid

FOC_ERROR = "FOC solution leaves quantile space; reduce gamma or use direct solver"


def _check_gamma(gamma, allow_zero=False):
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma < 0 or (gamma == 0 and not allow_zero):
        raise ValidationError(f"gamma must be {'non-negative' if allow_zero else 'positive'}, got {gamma}")
    return gamma


def _setup(ps):
    require_valid(ps, "quantile")
    bary = quantile_barycenter(ps).model
    return bary, bary.values, bary.weights


def _objective(phi, g, gB, ws, gamma):
    return float(ws @ phi(g) - ws @ (g - gB) ** 2 / (2 * gamma))


def _report(phi, g, bary, ws, gamma, method, **diag):
    gB = bary.values
    e0 = float(ws @ phi(gB))
    value = _objective(phi, g, gB, ws, gamma)
    diag.setdefault("monotonicity_repairs", 0)
    diag["barycenter_expectation"] = e0
    diag["penalty"] = float(ws @ (g - gB) ** 2 / (2 * gamma))
    return RiskReport(value, QuantileModel(bary.grid, g), gamma, method, diag)


def risk_1d_affine(ps, alpha, b, gamma):
    """Closed form for Phi0(z) = alpha + b z.

    The maximizer is the barycenter shifted by gamma * b and the value is
    E_B[Phi0] + gamma b^2 / 2.

    Parameters
    ----------
    ps : PriorSet of quantile models
    alpha, b : float
    gamma : float
        Uncertainty aversion, positive.

    Returns
    -------
    RiskReport
    """
    gamma = _check_gamma(gamma)
    bary, gB, ws = _setup(ps)
    phi = affine(alpha, b)
    g = gB + gamma * float(b)
    e0 = float(ws @ phi(gB))
    return RiskReport(e0 + 0.5 * gamma * float(b) ** 2, QuantileModel(bary.grid, g), gamma,
                      "closed-form", {"barycenter_expectation": e0, "kappa": gamma * float(b),
                                      "monotonicity_repairs": 0})


def risk_1d_quadratic(ps, alpha, b, c, gamma):
    """Closed form for the Delta-Gamma mapping alpha + b z + (c/2) z^2.

    The maximizer is (g_B + kappa) / lam with kappa = b gamma and
    lam = 1 - c gamma, which must be positive.

    Returns
    -------
    RiskReport
    """
    gamma = _check_gamma(gamma)
    lam = 1.0 - float(c) * gamma
    if lam <= 0:
        raise IllPosedError("quadratic coefficient exceeds 1/gamma; risk measure infinite "
                            f"(lambda = 1 - c*gamma = {lam:.6g})")
    bary, gB, ws = _setup(ps)
    phi = quadratic(alpha, b, c)
    kappa = float(b) * gamma
    g = (gB + kappa) / lam
    return _report(phi, g, bary, ws, gamma, "closed-form", kappa=kappa, lam=lam)


def _foc_precheck(phi, gB, gamma, radius):
    lo = float(np.min(gB - radius))
    hi = float(np.max(gB + radius))
    z = np.linspace(lo, hi, 8001)
    h = z - gamma * phi.gradient(z)
    if not np.all(np.isfinite(h)) or np.any(np.diff(h) <= 0):
        raise IllPosedError(FOC_ERROR + " (z - gamma*Phi0'(z) is not increasing on the grid hull)")


def risk_1d_foc(ps, phi, gamma, tol=1e-10, max_iter=200):
    """Solve g - gamma Phi0'(g) = g_B pointwise on the quantile grid.

    Each grid point is solved by Newton's method safeguarded by bisection,
    starting from the bracket g_B +- 10 sqrt(gamma) (1 + |g_B|), which is
    widened geometrically until it contains a sign change.

    Parameters
    ----------
    ps : PriorSet of quantile models
    phi : RiskMapping
        Scalar mapping; finite differences are used without a gradient.
    gamma : float
    tol : float
        Residual tolerance per grid point.
    max_iter : int

    Returns
    -------
    RiskReport
        Diagnostics carry the iteration count and the largest residual.
    """
    gamma = _check_gamma(gamma)
    if phi.dim is not None:
        raise ValidationError("1-D risk needs a scalar risk mapping")
    bary, gB, ws = _setup(ps)
    radius = 10.0 * np.sqrt(gamma) * (1.0 + np.abs(gB))
    _foc_precheck(phi, gB, gamma, radius)

    def resid(z):
        return z - gamma * phi.gradient(z) - gB

    lo, hi = gB - radius, gB + radius
    for _ in range(60):
        flo, fhi = resid(lo), resid(hi)
        bad_lo, bad_hi = flo > 0, fhi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, gB - 2 * (gB - lo), lo)
        hi = np.where(bad_hi, gB + 2 * (hi - gB), hi)
    else:
        raise IllPosedError(FOC_ERROR + " (no bracket for the first-order condition)")

    z = np.clip(gB + gamma * phi.gradient(gB), lo, hi)
    eps = np.finfo(float).eps
    it = 0
    for it in range(1, max_iter + 1):
        f = resid(z)
        thresh = np.maximum(tol, 8 * eps * (np.abs(z) + np.abs(gB)))
        if np.all(np.abs(f) <= thresh):
            break
        lo = np.where(f < 0, z, lo)
        hi = np.where(f > 0, z, hi)
        slope = 1.0 - gamma * phi.curvature(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            znew = z - f / slope
        out = ~np.isfinite(znew) | (znew <= lo) | (znew >= hi) | (slope <= 0)
        znew = np.where(out, 0.5 * (lo + hi), znew)
        done = np.abs(f) <= thresh
        z = np.where(done, z, znew)
    else:
        res = float(np.max(np.abs(resid(z))))
        raise ConvergenceError(f"FOC solver did not converge (max residual {res:.3g})", max_iter, res)

    res = float(np.max(np.abs(resid(z))))
    drops = np.diff(z)
    scale = 1e-12 * (1.0 + np.max(np.abs(z)))
    if np.any(drops < -scale):
        raise IllPosedError(FOC_ERROR)
    repairs = int(np.count_nonzero(drops < 0))
    if repairs:
        z = np.maximum.accumulate(z)
    return _report(phi, z, bary, ws, gamma, "foc", iterations=it, residual=res,
                   monotonicity_repairs=repairs)


def risk_1d_direct(ps, phi, gamma, tol=1e-12, max_iter=20_000):
    """Maximize the discretized objective over monotone vectors.

    Projected gradient ascent: the step g_B + gamma Phi0'(g) maximizes the
    objective pointwise with Phi0 linearized at the current iterate, and the
    isotonic regression projects it back onto non-decreasing vectors. The
    step is halved whenever the objective would decrease.

    Parameters
    ----------
    ps : PriorSet of quantile models
    phi : RiskMapping
    gamma : float
    tol : float
        Stop when the objective changes by less than tol * max(1, |J|).
    max_iter : int

    Returns
    -------
    RiskReport
    """
    gamma = _check_gamma(gamma)
    if phi.dim is not None:
        raise ValidationError("1-D risk needs a scalar risk mapping")
    bary, gB, ws = _setup(ps)
    unif = np.allclose(ws, ws[0])
    wts = None if unif else ws
    bound = 1e12 * (1.0 + np.max(np.abs(gB)))

    def project(y):
        return isotonic_regression(y, weights=wts, increasing=True).x

    g = gB.copy()
    J = _objective(phi, g, gB, ws, gamma)
    t = gamma
    repairs = 0
    it = 0
    for it in range(1, max_iter + 1):
        grad = phi.gradient(g) - (g - gB) / gamma
        while True:
            y = g + t * grad
            g_new = project(y)
            J_new = _objective(phi, g_new, gB, ws, gamma)
            if not np.isfinite(J_new) or np.max(np.abs(g_new)) > bound:
                raise IllPosedError("objective unbounded on the grid (iterates diverge); "
                                    "reduce gamma")
            if J_new >= J - 1e-15 * max(1.0, abs(J)):
                break
            t *= 0.5
            if t < 1e-14 * gamma:
                raise ConvergenceError("direct solver line search failed", it)
        if not np.array_equal(g_new, y):
            repairs += 1
        dJ = J_new - J
        g, J = g_new, J_new
        if abs(dJ) < tol * max(1.0, abs(J)):
            break
    else:
        raise ConvergenceError(f"direct solver did not converge in {max_iter} iterations",
                               max_iter, abs(dJ))
    return _report(phi, g, bary, ws, gamma, "direct", iterations=it, objective_change=abs(dJ),
                   monotonicity_repairs=repairs, step=t)


def risk_1d_perturbative(ps, phi, gamma):
    """First-order expansion int Phi0(g_B) + (gamma/2) int Phi0'(g_B)^2.

    Parameters
    ----------
    ps : PriorSet of quantile models
    phi : RiskMapping
    gamma : float
        Non-negative; gamma = 0 gives the barycenter expectation.

    Returns
    -------
    RiskReport
        The maximizer is the first-order quantile g_B + gamma Phi0'(g_B),
        projected onto monotone vectors if needed.
    """
    gamma = _check_gamma(gamma, allow_zero=True)
    if phi.dim is not None:
        raise ValidationError("1-D risk needs a scalar risk mapping")
    bary, gB, ws = _setup(ps)
    d1 = phi.gradient(gB)
    e0 = float(ws @ phi(gB))
    first = 0.5 * float(ws @ d1 ** 2)
    g = gB + gamma * d1
    repairs = 0
    if np.any(np.diff(g) < 0):
        g = isotonic_regression(g, weights=ws, increasing=True).x
        repairs = 1
    return RiskReport(e0 + gamma * first, QuantileModel(bary.grid, g), gamma, "perturbative",
                      {"zeroth_order": e0, "first_order_coefficient": first,
                       "barycenter_expectation": e0, "monotonicity_repairs": repairs})


def risk_1d(ps, phi, gamma, method="auto"):
    """Dispatch to a 1-D solver.

    ``auto`` uses the closed form for affine and quadratic mappings, then the
    first-order condition, and falls back to the direct solver when the
    first-order condition is not usable.
    """
    p = phi.params
    if method in ("auto", "closed", "closed-form"):
        if phi.tag == "affine":
            return risk_1d_affine(ps, p["alpha"], p["b"], gamma)
        if phi.tag == "quadratic":
            return risk_1d_quadratic(ps, p["alpha"], p["b"], p["c"], gamma)
        if method != "auto":
            raise ValidationError(f"no closed form for mapping tag {phi.tag!r}")
        try:
            return risk_1d_foc(ps, phi, gamma)
        except IllPosedError:
            return risk_1d_direct(ps, phi, gamma)
    if method == "foc":
        return risk_1d_foc(ps, phi, gamma)
    if method == "direct":
        return risk_1d_direct(ps, phi, gamma)
    if method == "perturbative":
        return risk_1d_perturbative(ps, phi, gamma)
    raise ValidationError(f"unknown method {method!r}")
