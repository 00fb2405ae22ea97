"""Frechet means and variances of prior sets.

* quantile priors: the 2-Wasserstein barycenter is the weighted average of
  quantile functions.
* location-scatter priors: mean is the weighted mean, scatter solves
  S = sum_i w_i (S^{1/2} S_i S^{1/2})^{1/2}, found by a symmetric fixed point.
* grid densities: the Kullback-Leibler barycenter is the normalized weighted
  geometric mean of the densities.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import spd
from .errors import ConvergenceError, NumericalError, ValidationError
from .models import (GridDensityModel, LocationScatterModel, PriorSet,
                     QuantileModel, require_valid)


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    """Frechet mean of a prior set.

    Attributes
    ----------
    model : model of the prior-set kind
    frechet_variance : float
        Minimum of the weighted Frechet function (non-negative).
    iterations : int
    residual : float
        Relative residual of the defining equation (0 for closed forms).
    """

    model: object
    frechet_variance: float
    iterations: int = 0
    residual: float = 0.0
    diagnostics: dict = None


# ------------------------------------------------------------- quantile

def quantile_barycenter(ps):
    """Weighted average of quantile functions.

    Parameters
    ----------
    ps : PriorSet of kind ``quantile``

    Returns
    -------
    BarycenterResult
        ``frechet_variance`` is sum_i w_i * int (g_B - g_i)^2 ds.
    """
    require_valid(ps, "quantile")
    G = np.array([q.values for q in ps.models])
    gB = ps.weights @ G
    q0 = ps.models[0]
    ws = q0.weights
    var = float(ps.weights @ (((G - gB) ** 2) @ ws))
    # averaging monotone arrays keeps them monotone; enforce against roundoff
    gB = np.maximum.accumulate(gB)
    return BarycenterResult(QuantileModel(q0.grid, gB), max(var, 0.0))


# ------------------------------------------------------ location-scatter

class LSPriors:
    """Cached arrays for a location-scatter prior set."""

    def __init__(self, ps):
        require_valid(ps, "location-scatter")
        self.ps = ps
        self.w = np.asarray(ps.weights)
        self.m = np.array([p.m for p in ps.models])
        self.S = np.array([p.S for p in ps.models])
        self.sqrtS = np.array([spd.sqrt_spd(S) for S in self.S])
        self.central = ps.models[0].central
        self.d = self.m.shape[1]

    @property
    def m_bar(self):
        return self.w @ self.m

    def root_sum(self, R):
        """sum_i w_i (R S_i R)^{1/2}."""
        return sum(w * spd.sqrt_sandwich(R, S) for w, S in zip(self.w, self.S) if w > 0)

    def scatter_cost(self, S):
        """sum_i w_i Tr(S + S_i - 2 (S_i^{1/2} S S_i^{1/2})^{1/2})."""
        total = 0.0
        for w, Si, Ri in zip(self.w, self.S, self.sqrtS):
            if w > 0:
                total += w * (np.trace(S) + np.trace(Si) - 2 * np.trace(spd.sqrt_sandwich(Ri, S)))
        return float(total)

    def mean_cost(self, m):
        return float(self.w @ np.sum((self.m - m) ** 2, axis=1))

    def barycenter_step(self, S):
        R, Ri = spd.sqrt_and_inv_sqrt(S)
        T = self.root_sum(R)
        return spd.sym(Ri @ T @ T @ Ri)


def _bar_residual(pri, S):
    R = spd.sqrt_spd(S)
    return float(np.linalg.norm(S - pri.root_sum(R)) / np.linalg.norm(S))


def ls_wasserstein_barycenter(ps, tol=1e-10, max_iter=500):
    """Wasserstein barycenter of location-scatter priors.

    The scatter matrix is found from the symmetric fixed point
    S <- S^{-1/2} (sum_i w_i (S^{1/2} S_i S^{1/2})^{1/2})^2 S^{-1/2}
    started at sum_i w_i S_i.

    Parameters
    ----------
    ps : PriorSet of kind ``location-scatter``
    tol : float
        Stop once both the relative step and the relative residual of the
        barycenter equation fall below `tol`.
    max_iter : int

    Returns
    -------
    BarycenterResult
    """
    pri = ps if isinstance(ps, LSPriors) else LSPriors(ps)
    mB = pri.m_bar
    S = spd.sym(np.einsum("i,ijk->jk", pri.w, pri.S))
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        try:
            S_next = pri.barycenter_step(S)
        except (ValidationError, NumericalError) as exc:
            raise NumericalError(f"barycenter iterate lost positive definiteness: {exc}") from exc
        step = np.linalg.norm(S_next - S) / np.linalg.norm(S)
        S = S_next
        if step <= tol:
            residual = _bar_residual(pri, S)
            if residual <= tol:
                break
    else:
        residual = _bar_residual(pri, S)
        if residual > tol:
            raise ConvergenceError(
                f"barycenter fixed point did not converge in {max_iter} iterations "
                f"(relative residual {residual:.3g})", max_iter, residual)
    var = pri.mean_cost(mB) + pri.scatter_cost(S)
    model = LocationScatterModel(mB, S, pri.central)
    return BarycenterResult(model, max(var, 0.0), it, residual)


# ------------------------------------------------------------------- KL

def _log_geometric_mean(ps):
    logf = np.zeros(ps.models[0].shape)
    with np.errstate(divide="ignore"):
        for w, f in zip(ps.weights, ps.models):
            if w > 0:
                logf = logf + w * np.log(f.density)
    return logf


def _log_integral(weights, logh):
    top = np.max(logh)
    if not np.isfinite(top):
        return -np.inf
    return float(top + np.log(np.sum(weights * np.exp(logh - top))))


def kl_divergence(f, g):
    """KL(f || g) for grid densities on the same lattice."""
    wts = f.weights
    pos = f.density > 0
    if np.any(g.density[pos] <= 0):
        return np.inf
    return float(np.sum(wts[pos] * f.density[pos] * np.log(f.density[pos] / g.density[pos])))


def kl_barycenter(ps):
    """Normalized weighted geometric mean of grid densities.

    Parameters
    ----------
    ps : PriorSet of kind ``grid-density``

    Returns
    -------
    BarycenterResult
        ``frechet_variance`` is sum_i w_i KL(f0 || f_i), which equals
        log C0 with C0 = 1 / int prod_i f_i^{w_i}. The value of log C0
        computed from the normalizing constant is in ``diagnostics``.
    """
    require_valid(ps, "grid-density")
    ref = ps.models[0]
    wts = ref.weights
    logf = _log_geometric_mean(ps)
    log_mass = _log_integral(wts, logf)
    if not log_mass > np.log(1e-300):
        raise NumericalError("priors have essentially disjoint support "
                             "(geometric mean of the densities integrates to ~0)")
    if log_mass < np.log(1e-8):
        warnings.warn(f"priors barely overlap (geometric mean mass {np.exp(log_mass):.3g}); "
                      "the KL barycenter is ill-conditioned", RuntimeWarning, stacklevel=2)
    f0 = GridDensityModel(ref.axes, np.exp(logf - log_mass))
    var = sum(w * kl_divergence(f0, f) for w, f in zip(ps.weights, ps.models) if w > 0)
    return BarycenterResult(f0, max(float(var), 0.0),
                            diagnostics={"log_C0": -log_mass})


# -------------------------------------------------------------- generic

def barycenter(ps, **kwargs):
    """Dispatch on the prior-set kind."""
    if ps.kind == "quantile":
        return quantile_barycenter(ps)
    if ps.kind == "location-scatter":
        return ls_wasserstein_barycenter(ps, **kwargs)
    if ps.kind == "grid-density":
        return kl_barycenter(ps)
    raise ValidationError(f"unknown model kind {ps.kind!r}")


def frechet_function(ps, candidate, bary=None):
    """Normalized Frechet function F(candidate) = sum_i w_i d(candidate, mu_i) - V.

    The discrepancy d is the squared 2-Wasserstein distance for quantile and
    location-scatter priors and KL(candidate || mu_i) for grid densities.

    Parameters
    ----------
    ps : PriorSet
    candidate : model of the same kind
    bary : BarycenterResult, optional
        Reuse a precomputed barycenter.

    Returns
    -------
    float
        Non-negative up to roundoff.
    """
    if not isinstance(ps, PriorSet):
        raise ValidationError("expected a PriorSet")
    if getattr(candidate, "kind", None) != ps.kind:
        raise ValidationError(f"candidate kind {getattr(candidate, 'kind', None)!r} "
                              f"does not match prior set kind {ps.kind!r}")
    msgs = candidate.violations()
    if msgs:
        raise ValidationError("invalid candidate: " + "; ".join(msgs), msgs)
    bary = bary or barycenter(ps)
    if ps.kind == "quantile":
        if not np.array_equal(candidate.grid, ps.models[0].grid):
            raise ValidationError("candidate quantile grid differs from the priors")
        G = np.array([q.values for q in ps.models])
        total = ps.weights @ (((candidate.values - G) ** 2) @ candidate.weights)
        return float(total - bary.frechet_variance)
    if ps.kind == "location-scatter":
        pri = LSPriors(ps)
        if candidate.dim != pri.d:
            raise ValidationError("candidate dimension differs from the priors")
        total = pri.mean_cost(candidate.m) + pri.scatter_cost(candidate.S)
        return float(total - (pri.mean_cost(bary.model.m) + pri.scatter_cost(bary.model.S)))
    if not candidate.same_grid(ps.models[0]):
        raise ValidationError("candidate density grid differs from the priors")
    total = sum(w * kl_divergence(candidate, f) for w, f in zip(ps.weights, ps.models) if w > 0)
    return float(total - bary.frechet_variance)
