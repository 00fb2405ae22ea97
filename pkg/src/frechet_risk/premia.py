"""Premia for a frequency-severity position under model uncertainty.

The loss is the product of a frequency factor and a severity factor,
Phi0 = Phi1(Z1) * Phi2(Z2), with independent location-scatter priors on
each factor. The premium is (1 + loading) times the barycentric risk.
Also contains the robustness study comparing the Wasserstein, entropic and
plain averaging aggregations of expert opinions.
"""

import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .barycenter import LSPriors, kl_barycenter, ls_wasserstein_barycenter
from .entropic import entropic_from_barycenter
from .errors import ConvergenceError, IllPosedError, NumericalError, ValidationError
from .models import (DEFAULT_SAMPLES, GridDensityModel, LocationScatterModel, PriorSet,
                     RiskMapping, RiskReport, common_axes, linear)
from .riskls import PERTURBATIVE_HINT, PhiEvaluator, _joint_change, scatter_update


@dataclass(frozen=True, eq=False)
class PremiumProblem:
    """Two-factor premium problem.

    Attributes
    ----------
    priors1, priors2 : PriorSet of location-scatter models
        Frequency and severity factors.
    a1, a2 : array-like or RiskMapping
        Exposures; vectors give linear mappings <a_j, z>.
    gamma : float
    loading : float
        Premium loading alpha, premium = (1 + alpha) * risk.
    """

    priors1: PriorSet
    priors2: PriorSet
    a1: object
    a2: object
    gamma: float
    loading: float = 0.0

    def mapping(self, j):
        a = self.a1 if j == 1 else self.a2
        return a if isinstance(a, RiskMapping) else linear(np.atleast_1d(a))


class LinearPremium(NamedTuple):
    m1: float
    m2: float
    sigma1: float
    sigma2: float
    risk: float
    premium: float


def _check_problem(p):
    gamma = float(p.gamma)
    if not np.isfinite(gamma) or gamma < 0:
        raise ValidationError(f"gamma must be non-negative, got {gamma}")
    if not np.isfinite(p.loading) or p.loading < 0:
        raise ValidationError(f"loading must be non-negative, got {p.loading}")
    return gamma


def premium_linear_1d(p):
    """Closed-form premium for scalar factors and linear mappings.

    Solves m1 = m1_B + gamma a1 a2 m2, m2 = m2_B + gamma a1 a2 m1; the
    scatter parts stay at their barycenters sigma_j = (sum_i w_i sqrt(s_ji))^2.

    Parameters
    ----------
    p : PremiumProblem
        Both prior sets one-dimensional, a1 and a2 scalars.

    Returns
    -------
    LinearPremium
        (m1, m2, sigma1, sigma2, risk, premium)
    """
    gamma = _check_problem(p)
    a1 = np.atleast_1d(p.a1).astype(float)
    a2 = np.atleast_1d(p.a2).astype(float)
    if a1.shape != (1,) or a2.shape != (1,):
        raise ValidationError("premium_linear_1d needs scalar exposures")
    pri1, pri2 = LSPriors(p.priors1), LSPriors(p.priors2)
    if pri1.d != 1 or pri2.d != 1:
        raise ValidationError("premium_linear_1d needs one-dimensional factors")
    a1, a2 = a1[0], a2[0]
    m1B, m2B = float(pri1.m_bar[0]), float(pri2.m_bar[0])
    sig1 = float(pri1.w @ np.sqrt(pri1.S[:, 0, 0])) ** 2
    sig2 = float(pri2.w @ np.sqrt(pri2.S[:, 0, 0])) ** 2
    k = gamma * a1 * a2
    det = 1.0 - k * k
    if det <= 1e-12:
        raise IllPosedError(f"singular premium system: 1 - (gamma a1 a2)^2 = {det:.3g}")
    m1, m2 = np.linalg.solve(np.array([[1.0, -k], [-k, 1.0]]), np.array([m1B, m2B]))
    risk = (a1 * m1) * (a2 * m2)
    if gamma > 0:
        risk -= ((m1 - m1B) ** 2 + (m2 - m2B) ** 2) / (2 * gamma)
    return LinearPremium(float(m1), float(m2), sig1, sig2, float(risk),
                         float((1 + p.loading) * risk))


def premium_general(p, tol=1e-10, max_iter=500, n_samples=DEFAULT_SAMPLES, seed=0):
    """Premium for general factor dimensions by an alternating fixed point.

    Block 1 takes one fixed-point step of the single-factor scheme with its
    gradient scaled by the current Phi2, then block 2 with its gradient
    scaled by the updated Phi1, until the joint relative change is below tol.

    Returns
    -------
    RiskReport
        ``maximizer`` is the pair of location-scatter models; the premium is
        in ``diagnostics["premium"]``.
    """
    gamma = _check_problem(p)
    pri = [LSPriors(p.priors1), LSPriors(p.priors2)]
    bars = [ls_wasserstein_barycenter(q).model for q in pri]
    V0 = [q.scatter_cost(b.S) for q, b in zip(pri, bars)]
    evs = [PhiEvaluator(p.mapping(j + 1), q.central, q.d, n_samples, seed)
           for j, q in enumerate(pri)]
    m = [b.m.copy() for b in bars]
    S = [b.S.copy() for b in bars]
    it = 0
    change = 0.0
    if gamma > 0:
        prev, rising = np.inf, 0
        for it in range(1, max_iter + 1):
            old = [(mm.copy(), SS.copy()) for mm, SS in zip(m, S)]
            for j in (0, 1):
                other = evs[1 - j](m[1 - j], S[1 - j])[0]
                _, g = evs[j](m[j], S[j])
                m[j] = bars[j].m + gamma * other * g.grad_m
                S[j] = scatter_update(pri[j], S[j], other * g.grad_S, gamma)
            change = float(np.hypot(_joint_change(*old[0], m[0], S[0]),
                                    _joint_change(*old[1], m[1], S[1])))
            if change <= tol:
                break
            rising = rising + 1 if change > prev else 0
            prev = change
            if rising >= 3 or not all(np.all(np.isfinite(x)) for x in m):
                raise ConvergenceError("premium fixed point is diverging; " + PERTURBATIVE_HINT,
                                       it, change)
        else:
            raise ConvergenceError(f"premium fixed point did not converge in {max_iter} "
                                   "iterations", max_iter, change)
    phis = [evs[j](m[j], S[j])[0] for j in (0, 1)]
    value = phis[0] * phis[1]
    pens = [0.0, 0.0]
    if gamma > 0:
        pens = [float(np.sum((m[j] - bars[j].m) ** 2)) + pri[j].scatter_cost(S[j]) - V0[j]
                for j in (0, 1)]
        value -= (pens[0] + pens[1]) / (2 * gamma)
    maxi = tuple(LocationScatterModel(m[j], S[j], pri[j].central) for j in (0, 1))
    diag = {"iterations": it, "change": change, "phi1": phis[0], "phi2": phis[1],
            "penalties": pens, "premium": float((1 + p.loading) * value), "seed": seed}
    return RiskReport(float(value), maxi, gamma, "fixed-point", diag)


# ------------------------------------------------------------- the study

HOMOGENEITY = {"hh": 0.02, "mh": 0.10, "lh": 0.25}
GAMMA_GRID = (0.1, 0.05, 0.01, 0.005, 0.001, 0.0)
METHODS = ("average", "entropic", "wasserstein")
CSV_COLUMNS = ("homogeneity", "n", "gamma", "method", "mean_risk", "mean_rel_err",
               "sd_rel_err", "failures")


@dataclass
class SimulationConfig:
    """Settings of the robustness study.

    Attributes
    ----------
    true_params : (m1, s1, m2, s2)
        Mean and variance of the frequency and severity factors.
    homogeneity : dict
        Label -> relative standard deviation of the expert perturbations.
    n_experts : tuple of int
    gamma_grid : tuple of float
    replications : int
    seed : int
        Replication b uses seed + b.
    entropic_grid_size : int
        Points per axis of the 2-D lattice for the entropic method.
    entropic_pad : float
        Lattice half-width in prior standard deviations.
    """

    true_params: tuple = (100.0, 25.0, 50.0, 100.0)
    homogeneity: dict = field(default_factory=lambda: dict(HOMOGENEITY))
    n_experts: tuple = (5, 10, 30)
    gamma_grid: tuple = GAMMA_GRID
    replications: int = 100
    seed: int = 0
    entropic_grid_size: int = 161
    entropic_pad: float = 12.0
    methods: tuple = METHODS

    def violations(self):
        out = []
        m1, s1, m2, s2 = self.true_params
        if min(s1, s2) <= 0:
            out.append("true variances must be positive")
            return out
        z = stats.norm.isf(1e-6)
        if m1 / np.sqrt(s1) < z or m2 / np.sqrt(s2) < z:
            out.append("true parameters allow negative frequency or severity "
                       "with probability above 1e-6")
        scales = list(self.homogeneity.values())
        if any(s <= 0 for s in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
            out.append("perturbation scales must be positive and strictly increasing "
                       "(hh < mh < lh)")
        if any(int(n) < 1 for n in self.n_experts):
            out.append("expert counts must be positive")
        if any(g < 0 for g in self.gamma_grid):
            out.append("gamma values must be non-negative")
        if self.replications < 1:
            out.append("replications must be positive")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            out.append(f"unknown methods {sorted(unknown)}")
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("true_params", "n_experts", "gamma_grid", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown study settings {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def draw_experts(true_params, scale, n, rng):
    """Expert parameter sets (m1, s1, m2, s2), shape (n, 4).

    Each parameter is multiplied by an independent mean-one log-normal
    factor with log-standard deviation `scale`, which keeps it positive.
    """
    eps = rng.standard_normal((n, 4))
    return np.asarray(true_params) * np.exp(scale * eps - 0.5 * scale ** 2)


def _ls_priors(means, variances):
    return PriorSet.of([LocationScatterModel([m], [[v]]) for m, v in zip(means, variances)])


_PRODUCT = RiskMapping("custom", {"label": "z1*z2"}, lambda z: z[..., 0] * z[..., 1],
                       lambda z: z[..., ::-1].copy(), dim=2)


def _entropic_values(par, gammas, size, pad):
    sds = np.sqrt(par[:, [1, 3]])
    axes = common_axes(par[:, [0, 2]], sds, size=size, pad=pad)
    models = [GridDensityModel.normal(axes, [p[0], p[2]], np.diag([p[1], p[3]])) for p in par]
    with warnings.catch_warnings():
        # dissimilar experts barely overlap; that is part of what is measured
        warnings.simplefilter("ignore", RuntimeWarning)
        bar = kl_barycenter(PriorSet.of(models))
    vals = _PRODUCT(bar.model.points())
    out = []
    for g in gammas:
        try:
            out.append(entropic_from_barycenter(bar, vals, g).value)
        except NumericalError:
            out.append(np.nan)
    return out


def _replication(cfg, b):
    """All (homogeneity, n, gamma, method) risks for replication b."""
    rng_seed = cfg.seed + b
    res = {}
    for h, scale in cfg.homogeneity.items():
        for n in cfg.n_experts:
            par = draw_experts(cfg.true_params, scale, int(n), np.random.default_rng(rng_seed))
            if "average" in cfg.methods:
                avg = float(np.mean(par[:, 0] * par[:, 2]))
                for g in cfg.gamma_grid:
                    res[(h, n, g, "average")] = avg
            if "wasserstein" in cfg.methods:
                ps1, ps2 = _ls_priors(par[:, 0], par[:, 1]), _ls_priors(par[:, 2], par[:, 3])
                for g in cfg.gamma_grid:
                    try:
                        val = premium_linear_1d(PremiumProblem(ps1, ps2, 1.0, 1.0, g)).risk
                    except NumericalError:
                        val = np.nan
                    res[(h, n, g, "wasserstein")] = val
            if "entropic" in cfg.methods:
                vals = _entropic_values(par, cfg.gamma_grid, cfg.entropic_grid_size,
                                        cfg.entropic_pad)
                for g, v in zip(cfg.gamma_grid, vals):
                    res[(h, n, g, "entropic")] = v
    return res


def _threads():
    try:
        return max(1, int(os.environ.get("FRECHET_RISK_THREADS", "1")))
    except ValueError:
        return 1


def run_robustness_study(cfg=None):
    """Monte Carlo robustness study of the three aggregation methods.

    For every (homogeneity, n, gamma) cell, B expert panels are drawn by
    perturbing the true parameters, and each method turns a panel into a
    risk value. The true risk is rho0 = m1 * m2.

    Parameters
    ----------
    cfg : SimulationConfig, optional

    Returns
    -------
    list of dict
        One row per (homogeneity, n, gamma, method) with keys
        ``CSV_COLUMNS``. Failed replications (e.g. entropic risk with an
        infinite exponential moment) are excluded and counted.
    """
    cfg = cfg or SimulationConfig()
    msgs = cfg.violations()
    if msgs:
        raise ValidationError("invalid study configuration: " + "; ".join(msgs), msgs)
    reps = range(cfg.replications)
    workers = min(_threads(), cfg.replications)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda b: _replication(cfg, b), reps))
    else:
        results = [_replication(cfg, b) for b in reps]
    rho0 = cfg.true_params[0] * cfg.true_params[2]
    rows = []
    for h in cfg.homogeneity:
        for n in cfg.n_experts:
            for g in cfg.gamma_grid:
                for meth in cfg.methods:
                    vals = np.array([r[(h, n, g, meth)] for r in results])
                    ok = vals[np.isfinite(vals)]
                    rel = np.abs(ok - rho0) / rho0
                    rows.append({
                        "homogeneity": h, "n": int(n), "gamma": float(g), "method": meth,
                        "mean_risk": float(ok.mean()) if len(ok) else float("nan"),
                        "mean_rel_err": float(rel.mean()) if len(ok) else float("nan"),
                        "sd_rel_err": float(rel.std(ddof=1)) if len(ok) > 1 else float("nan"),
                        "failures": int(len(vals) - len(ok)),
                    })
    return rows


def write_study_csv(rows, fh):
    """Write study rows to an open text file."""
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def study_cell(rows, homogeneity, n, gamma, method):
    for r in rows:
        if (r["homogeneity"], r["n"], r["gamma"], r["method"]) == (homogeneity, n, gamma, method):
            return r
    raise KeyError((homogeneity, n, gamma, method))
