"""Weighted entropic risk on grid densities.

Penalizing a candidate density f by (1/gamma) sum_i w_i KL(f || f_i), shifted
to vanish at its minimum, gives the risk

    (1/gamma) log int exp(gamma Phi0(z)) f0(z) dz,

where f0 is the KL barycenter (normalized weighted geometric mean of the
priors). The maximizing density is the exponential tilt of f0.
"""

import numpy as np

from .barycenter import kl_barycenter, kl_divergence
from .errors import ConvergenceError, NumericalError, ValidationError
from .models import GridDensityModel, RiskReport, require_valid

# a grid band this wide (fraction of points per axis) counts as the boundary
EDGE_FRACTION = 0.02
EDGE_MASS = 1e-5


def _check_gamma(gamma):
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma < 0:
        raise ValidationError(f"gamma must be non-negative, got {gamma}")
    return gamma


def _mapping_on_grid(phi, model):
    if model.dim == 1:
        if phi.dim not in (None, 1):
            raise ValidationError(f"risk mapping of dimension {phi.dim} on a 1-D grid")
        z = model.axes[0] if phi.dim is None else model.points()
    else:
        if phi.dim != model.dim:
            raise ValidationError(f"risk mapping of dimension {phi.dim} on a {model.dim}-D grid")
        z = model.points()
    vals = np.asarray(phi(z), dtype=float).reshape(model.shape)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("risk mapping is not finite on the density grid")
    return vals


def edge_mass(model):
    """Probability mass in the outer band of the lattice."""
    mask = np.zeros(model.shape, dtype=bool)
    for k, n in enumerate(model.shape):
        b = max(1, int(np.ceil(EDGE_FRACTION * n)))
        idx = [slice(None)] * model.dim
        idx[k] = slice(0, b)
        mask[tuple(idx)] = True
        idx[k] = slice(n - b, n)
        mask[tuple(idx)] = True
    return float(np.sum((model.weights * model.density)[mask]))


def _tilt(f0, vals, gamma):
    """log of int exp(gamma Phi0) f0 and the normalized tilted density."""
    wts = f0.weights
    pos = f0.density > 0
    logh = np.full(f0.shape, -np.inf)
    logh[pos] = gamma * vals[pos] + np.log(f0.density[pos])
    top = np.max(logh)
    if not np.isfinite(top):
        raise NumericalError("tilted density vanishes on the grid")
    scaled = np.exp(logh - top)
    log_int = float(top + np.log(np.sum(wts * scaled)))
    return log_int, GridDensityModel(f0.axes, np.exp(logh - log_int))


def _truncation_check(f0, tilted):
    base, moved = edge_mass(f0), edge_mass(tilted)
    if moved > EDGE_MASS and moved > 10 * base:
        raise NumericalError(
            f"tilted density puts mass {moved:.3g} on the grid boundary: grid truncation "
            "dominates (exponentials are already computed in log space); the exponential "
            "moment may be infinite, reduce gamma or widen the grid")


def entropic_risk(ps, phi, gamma):
    """Closed-form weighted entropic risk.

    Parameters
    ----------
    ps : PriorSet of grid densities
    phi : RiskMapping
        Scalar mapping on 1-D grids, ``dim=2`` mapping on 2-D grids.
    gamma : float
        Risk aversion. gamma = 0 returns the expectation under the KL
        barycenter (the limit of the risk as gamma decreases to 0).

    Returns
    -------
    RiskReport
        The maximizer is the density proportional to exp(gamma Phi0) f0.
    """
    gamma = _check_gamma(gamma)
    bar = kl_barycenter(ps)
    return entropic_from_barycenter(bar, _mapping_on_grid(phi, bar.model), gamma)


def entropic_from_barycenter(bar, vals, gamma):
    """Entropic risk from a precomputed KL barycenter and mapping values on its grid."""
    f0 = bar.model
    e0 = f0.integrate(f0.density * vals)
    diag = {"barycenter_expectation": e0, "frechet_variance": bar.frechet_variance,
            "log_C0": bar.diagnostics["log_C0"]}
    if gamma == 0:
        return RiskReport(e0, f0, gamma, "closed-form", diag)
    log_int, tilted = _tilt(f0, vals, gamma)
    _truncation_check(f0, tilted)
    diag["edge_mass"] = edge_mass(tilted)
    return RiskReport(log_int / gamma, tilted, gamma, "closed-form", diag)


def entropic_risk_direct(ps, phi, gamma, ascent_tol=1e-13, max_iter=10_000, step=0.5):
    """Maximize E_f[Phi0] - (1/gamma) (sum_i w_i KL(f || f_i) - V) over grid densities.

    Entropic mirror ascent on the simplex of grid masses. With step size
    ``step * gamma`` the iteration contracts at rate ``1 - step`` in log space.
    The objective uses the priors directly and never forms the barycenter
    density, so it serves as an independent check of :func:`entropic_risk`.

    Parameters
    ----------
    ps : PriorSet of grid densities
    phi : RiskMapping
    gamma : float
        Positive.
    ascent_tol : float
        Stop when the objective changes by less than this and the log masses
        move by less than 1e-12.
    max_iter : int
    step : float
        Relative step size in (0, 1].

    Returns
    -------
    RiskReport
    """
    gamma = _check_gamma(gamma)
    if gamma == 0:
        raise ValidationError("the direct entropic solver needs gamma > 0")
    if not 0 < step <= 1:
        raise ValidationError("step must lie in (0, 1]")
    require_valid(ps, "grid-density")
    bar = kl_barycenter(ps)
    ref = ps.models[0]
    cw = ref.weights
    vals = _mapping_on_grid(phi, ref)
    active = [(w, f) for w, f in zip(ps.weights, ps.models) if w > 0]
    support = np.ones(ref.shape, dtype=bool)
    for _, f in active:
        support &= f.density > 0
    support &= cw > 0
    if not support.any():
        raise NumericalError("priors have essentially disjoint support")
    phi_s = vals[support]
    # prior masses on the support
    logq = [np.log(cw[support] * f.density[support]) for _, f in active]
    wq = np.array([w for w, _ in active])
    # start from the normalized mixture of the priors
    mix = sum(w * cw[support] * f.density[support] for w, f in active)
    logp = np.log(mix / mix.sum())

    def objective(logp):
        p = np.exp(logp)
        kl = sum(w * np.sum(p * (logp - lq)) for w, lq in zip(wq, logq))
        return float(p @ phi_s - (kl - bar.frechet_variance) / gamma)

    J = objective(logp)
    eta = step * gamma
    it = 0
    for it in range(1, max_iter + 1):
        grad = phi_s - (sum(w * (logp - lq) for w, lq in zip(wq, logq)) + 1.0) / gamma
        new = logp + eta * grad
        top = np.max(new)
        new = new - (top + np.log(np.sum(np.exp(new - top))))
        J_new = objective(new)
        moved = float(np.max(np.abs(new - logp)))
        dJ = abs(J_new - J)
        logp, J = new, J_new
        if dJ < ascent_tol * max(1.0, abs(J)) and moved < 1e-12:
            break
    else:
        raise ConvergenceError(f"mirror ascent did not converge in {max_iter} iterations",
                               max_iter, dJ)
    dens = np.zeros(ref.shape)
    dens[support] = np.exp(logp) / cw[support]
    fmax = GridDensityModel(ref.axes, dens)
    _truncation_check(bar.model, fmax)
    penalty = sum(w * kl_divergence(fmax, f) for w, f in active) - bar.frechet_variance
    return RiskReport(J, fmax, gamma, "direct",
                      {"iterations": it, "objective_change": dJ, "penalty": float(penalty),
                       "barycenter_expectation": bar.model.integrate(bar.model.density * vals)})
