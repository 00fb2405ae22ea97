"""Probability models, prior sets and risk mappings.

Three model kinds are supported:

* ``quantile``: a 1-D law stored as its quantile function on a fixed grid
  of (0, 1). All 1-D transport reduces to pointwise arithmetic on that grid.
* ``location-scatter``: the law of ``m + S^{1/2} Z0`` for a central
  variable ``Z0`` with zero mean and identity covariance.
* ``grid-density``: a density tabulated on a uniform 1-D or 2-D lattice.

Model objects do not enforce their invariants on construction, so that
malformed inputs can still be inspected with :func:`validate_prior_set`.
Named constructors always produce valid models, and every solver calls
:func:`require_valid` before doing any work.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from . import spd
from .errors import NumericalError, ValidationError

QUANTILE_GRID_SIZE = 2001
DEFAULT_SAMPLES = 200_000
KINDS = ("quantile", "location-scatter", "grid-density")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------- grids

@lru_cache(maxsize=8)
def _quantile_grid(M):
    return _frozen((np.arange(1, M + 1) - 0.5) / M)


def quantile_grid(M=QUANTILE_GRID_SIZE):
    """Shared quantile grid s_j = (j - 0.5) / M, j = 1..M."""
    if M < 2:
        raise ValidationError("quantile grid needs at least 2 points")
    return _quantile_grid(int(M))


def quantile_weights(grid):
    """Quadrature weights for integrals over (0, 1) on a quantile grid.

    Each node carries the length of its cell, with cell boundaries at the
    midpoints between nodes and at 0 and 1. On the uniform grid this is
    1/M per node, so constants integrate exactly and the weights sum to one.
    """
    grid = np.asarray(grid, dtype=float)
    edges = np.concatenate([[0.0], 0.5 * (grid[1:] + grid[:-1]), [1.0]])
    return np.diff(edges)


def trapezoid_weights(axis):
    """Trapezoid weights for a uniform 1-D axis."""
    axis = np.asarray(axis, dtype=float)
    if len(axis) < 2:
        return np.ones_like(axis)
    h = np.diff(axis)
    w = np.empty_like(axis)
    w[1:-1] = 0.5 * (h[1:] + h[:-1])
    w[0] = 0.5 * h[0]
    w[-1] = 0.5 * h[-1]
    return w


def default_grid_size(dim):
    """Points per axis for grid densities: 4001 in 1-D, 401 per axis in 2-D."""
    return 4001 if dim == 1 else 401


def common_axes(means, sds, size=None, pad=6.0):
    """Uniform axes covering every prior's mean +- pad standard deviations.

    Parameters
    ----------
    means, sds : array-like, shape (n, d)
        Per-prior, per-coordinate centers and standard deviations.
    size : int, optional
        Points per axis; see :func:`default_grid_size`.
    pad : float

    Returns
    -------
    tuple of ndarray
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    sds = np.atleast_2d(np.asarray(sds, dtype=float))
    d = means.shape[1]
    size = size or default_grid_size(d)
    lo = np.min(means - pad * sds, axis=0)
    hi = np.max(means + pad * sds, axis=0)
    return tuple(np.linspace(lo[k], hi[k], size) for k in range(d))


# --------------------------------------------------------- central laws

@dataclass(frozen=True)
class CentralLaw:
    """Law of the standardized variable Z0 (zero mean, identity covariance).

    Parameters
    ----------
    name : str
        ``"normal"``, ``"student-t"`` or a free label for custom samplers.
    df : float, optional
        Degrees of freedom for ``"student-t"``; must exceed 4.
    sampler : callable, optional
        ``sampler(rng, n, d) -> (n, d) array`` for custom laws. Custom laws
        are checked by sample moments; the shipped laws are exact.
    """

    name: str = "normal"
    df: float = None
    sampler: object = field(default=None, compare=False, repr=False)

    @property
    def exact(self):
        return self.sampler is None

    def sample(self, n, d, seed=None):
        """Draw n i.i.d. copies of Z0 in dimension d, shape (n, d)."""
        rng = np.random.default_rng(seed)
        if self.sampler is not None:
            z = np.asarray(self.sampler(rng, n, d), dtype=float).reshape(n, d)
        elif self.name == "normal":
            z = rng.standard_normal((n, d))
        elif self.name == "student-t":
            g = rng.standard_normal((n, d))
            chi2 = rng.chisquare(self.df, size=(n, 1))
            z = g * np.sqrt((self.df - 2.0) / chi2)
        else:
            raise ValidationError(f"unknown central law {self.name!r}")
        if not np.all(np.isfinite(z)):
            raise NumericalError("central law sampler returned non-finite values")
        return z

    def quantile(self, s):
        """Quantile function of one coordinate of Z0 (1-D laws only)."""
        s = np.asarray(s, dtype=float)
        if self.name == "normal" and self.sampler is None:
            return stats.norm.ppf(s)
        if self.name == "student-t" and self.sampler is None:
            return stats.t.ppf(s, self.df) * np.sqrt((self.df - 2.0) / self.df)
        raise ValidationError(f"central law {self.name!r} has no quantile function")

    def violations(self, d, n=20_000, seed=20240101):
        """List of moment problems (empty when the law looks standardized)."""
        if self.name not in ("normal", "student-t") and self.sampler is None:
            return [f"unknown central law {self.name!r}"]
        if self.name == "student-t" and self.sampler is None:
            if self.df is None or not self.df > 4:
                return [f"student-t central law needs df > 4, got {self.df}"]
        if self.exact:
            return []
        z = self.sample(n, d, seed)
        tol = 5.0 / np.sqrt(n)
        out = []
        if np.abs(z.mean(axis=0)).max() > tol:
            out.append("central law sample mean is not zero")
        if np.abs(np.cov(z, rowvar=False).reshape(d, d) - np.eye(d)).max() > tol:
            out.append("central law sample covariance is not the identity")
        return out


NORMAL = CentralLaw("normal")


def student_t_law(df):
    return CentralLaw("student-t", float(df))


def central_law(name="normal", df=None):
    """Look up a shipped central law by name."""
    if name == "normal":
        return NORMAL
    if name in ("student-t", "student", "t"):
        if df is None:
            raise ValidationError("student-t central law needs df")
        return student_t_law(df)
    raise ValidationError(f"unknown central law {name!r}")


# ---------------------------------------------------------------- models

@dataclass(frozen=True, eq=False)
class QuantileModel:
    """1-D law represented by its quantile function on a grid of (0, 1)."""

    grid: np.ndarray
    values: np.ndarray
    kind = "quantile"

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen(self.grid))
        object.__setattr__(self, "values", _frozen(self.values))

    @classmethod
    def from_function(cls, ppf, M=QUANTILE_GRID_SIZE):
        s = quantile_grid(M)
        return cls(s, ppf(s))

    @classmethod
    def normal(cls, mean=0.0, sd=1.0, M=QUANTILE_GRID_SIZE):
        return cls.from_function(lambda s: mean + sd * stats.norm.ppf(s), M)

    @classmethod
    def student_t(cls, df, loc=0.0, scale=1.0, M=QUANTILE_GRID_SIZE):
        return cls.from_function(lambda s: loc + scale * stats.t.ppf(s, df), M)

    @classmethod
    def constant(cls, c, M=QUANTILE_GRID_SIZE):
        return cls.from_function(lambda s: np.full_like(s, float(c)), M)

    @property
    def weights(self):
        return quantile_weights(self.grid)

    def integrate(self, h):
        """Quadrature of values h(s_j) over (0, 1)."""
        return float(self.weights @ h)

    def mean(self):
        return self.integrate(self.values)

    def violations(self):
        out = []
        s, g = self.grid, self.values
        if s.ndim != 1 or g.shape != s.shape:
            return [f"grid and values shapes differ ({s.shape} vs {g.shape})"]
        if len(s) == 0:
            return ["empty quantile grid"]
        if s[0] <= 0 or s[-1] >= 1:
            out.append("quantile grid not strictly inside (0, 1)")
        bad = np.flatnonzero(np.diff(s) <= 0)
        if len(bad):
            out.append(f"quantile grid not strictly increasing at index {bad[0] + 1}")
        if not np.all(np.isfinite(g)):
            out.append("non-finite quantile value")
        bad = np.flatnonzero(np.diff(g) < 0)
        if len(bad):
            out.append(f"non-monotone quantile at index {bad[0] + 1}")
        return out


@dataclass(frozen=True, eq=False)
class LocationScatterModel:
    """Law of m + S^{1/2} Z0."""

    m: np.ndarray
    S: np.ndarray
    central: CentralLaw = NORMAL
    kind = "location-scatter"

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        object.__setattr__(self, "m", _frozen(m))
        object.__setattr__(self, "S", _frozen(S))

    @property
    def dim(self):
        return len(self.m)

    def sample(self, n, seed=None):
        z = self.central.sample(n, self.dim, seed)
        return self.m + z @ spd.sqrt_spd(self.S)

    def to_quantile(self, M=QUANTILE_GRID_SIZE):
        """Quantile model induced by a 1-D location-scatter law."""
        if self.dim != 1:
            raise ValidationError("only 1-D location-scatter models have a quantile function")
        s = quantile_grid(M)
        return QuantileModel(s, self.m[0] + np.sqrt(self.S[0, 0]) * self.central.quantile(s))

    def violations(self):
        d = len(self.m)
        if self.S.shape != (d, d):
            return [f"scatter matrix has shape {self.S.shape}, expected {(d, d)}"]
        out = []
        if not np.all(np.isfinite(self.m)):
            out.append("non-finite mean")
        msg = spd.spd_violation(self.S, "scatter matrix")
        if msg:
            out.append(msg)
        out.extend(self.central.violations(d))
        return out


@dataclass(frozen=True, eq=False)
class GridDensityModel:
    """Density tabulated on a uniform 1-D axis or a 2-D tensor lattice.

    Parameters
    ----------
    axes : tuple of 1-D arrays
        One uniform axis per dimension.
    density : ndarray
        Shape ``tuple(len(a) for a in axes)``.
    """

    axes: tuple
    density: np.ndarray
    kind = "grid-density"

    def __post_init__(self):
        axes = self.axes
        if isinstance(axes, np.ndarray) and axes.ndim == 1:
            axes = (axes,)
        object.__setattr__(self, "axes", tuple(_frozen(a) for a in axes))
        object.__setattr__(self, "density", _frozen(self.density))

    @property
    def dim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def weights(self):
        """Tensor-product trapezoid weights, same shape as the density."""
        w = trapezoid_weights(self.axes[0])
        for a in self.axes[1:]:
            w = np.multiply.outer(w, trapezoid_weights(a))
        return w

    def points(self):
        """Grid nodes, shape ``self.shape + (dim,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def integrate(self, h):
        return float(np.sum(self.weights * h))

    def same_grid(self, other):
        return self.shape == other.shape and all(
            np.array_equal(a, b) for a, b in zip(self.axes, other.axes))

    @classmethod
    def from_log_density(cls, axes, logf):
        """Normalize exp(logf) on the lattice (computed with a max shift)."""
        tmp = cls(axes, np.zeros(0))
        logf = np.asarray(logf, dtype=float)
        top = np.max(logf)
        if not np.isfinite(top):
            raise NumericalError("log density has no finite maximum on the grid")
        f = np.exp(logf - top)
        mass = np.sum(tmp.weights * f)
        return cls(tmp.axes, f / mass)

    @classmethod
    def normal(cls, axes, mean, cov):
        """Gaussian density on a lattice (1-D: cov is the variance)."""
        tmp = cls(axes, np.zeros(0))
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        x = tmp.points() - mean
        P = np.linalg.inv(cov)
        logf = -0.5 * np.einsum("...i,ij,...j->...", x, P, x)
        return cls.from_log_density(tmp.axes, logf)

    @classmethod
    def student_t(cls, axis, df, loc=0.0, scale=1.0):
        return cls.from_log_density((axis,), stats.t.logpdf(axis, df, loc, scale))

    def mean(self):
        pts = self.points()
        return np.array([self.integrate(self.density * pts[..., k]) for k in range(self.dim)])

    def covariance(self):
        pts = self.points() - self.mean()
        d = self.dim
        return np.array([[self.integrate(self.density * pts[..., i] * pts[..., j])
                          for j in range(d)] for i in range(d)])

    def violations(self):
        out = []
        if self.density.shape != self.shape:
            return [f"density shape {self.density.shape} does not match grid {self.shape}"]
        if self.dim not in (1, 2):
            out.append(f"grid densities are limited to 1 or 2 dimensions, got {self.dim}")
        for k, a in enumerate(self.axes):
            if len(a) < 2:
                out.append(f"axis {k} has fewer than 2 points")
                continue
            h = np.diff(a)
            if np.any(h <= 0) or np.ptp(h) > 1e-9 * abs(h[0]) + 1e-12 * np.abs(a).max():
                out.append(f"axis {k} is not uniform and increasing")
        if not np.all(np.isfinite(self.density)):
            out.append("non-finite density value")
        elif np.any(self.density < 0):
            out.append("negative density value")
        elif not out:
            mass = self.integrate(self.density)
            if abs(mass - 1.0) > 1e-8:
                out.append(f"density integrates to {mass:.10g} ≠ 1")
        return out


# ------------------------------------------------------------ prior sets

@dataclass(frozen=True, eq=False)
class PriorSet:
    """Weighted collection of models of one kind."""

    kind: str
    models: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "weights", _frozen(np.atleast_1d(self.weights)))

    @classmethod
    def of(cls, models, weights=None):
        """Build a prior set, inferring the kind; uniform weights by default."""
        models = list(models)
        if not models:
            raise ValidationError("a prior set needs at least one model")
        if weights is None:
            weights = np.full(len(models), 1.0 / len(models))
        return cls(models[0].kind, models, weights)

    @property
    def n(self):
        return len(self.models)

    def __len__(self):
        return len(self.models)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def weight_violations(w, n=None):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    out = []
    if n is not None and len(w) != n:
        out.append(f"{len(w)} weights for {n} models")
    if not np.all(np.isfinite(w)):
        return out + ["non-finite weight"]
    neg = np.flatnonzero(w < 0)
    if len(neg):
        out.append(f"negative weight at index {neg[0]}")
    total = w.sum()
    if abs(total - 1.0) > 1e-12:
        out.append(f"weights sum {total:.12g} ≠ 1")
    return out


def validate_prior_set(ps):
    """Check every invariant of a prior set and its models.

    Parameters
    ----------
    ps : PriorSet

    Returns
    -------
    ValidationReport
        ``ok`` is True iff no invariant is violated; otherwise
        ``violations`` lists each problem with the offending index.
    """
    out = []
    if ps.kind not in KINDS:
        return ValidationReport((f"unknown model kind {ps.kind!r}",))
    if ps.n < 1:
        return ValidationReport(("prior set is empty",))
    out.extend(weight_violations(ps.weights, ps.n))
    ref = ps.models[0]
    for i, mdl in enumerate(ps.models):
        if getattr(mdl, "kind", None) != ps.kind:
            out.append(f"model {i}: kind {getattr(mdl, 'kind', None)!r} differs from {ps.kind!r}")
            continue
        out.extend(f"model {i}: {msg}" for msg in mdl.violations())
        if i == 0:
            continue
        if ps.kind == "quantile" and not np.array_equal(mdl.grid, ref.grid):
            out.append(f"model {i}: quantile grid differs from model 0")
        elif ps.kind == "location-scatter":
            if mdl.dim != ref.dim:
                out.append(f"model {i}: dimension {mdl.dim} differs from {ref.dim}")
            if mdl.central != ref.central:
                out.append(f"model {i}: central law differs from model 0")
        elif ps.kind == "grid-density" and not mdl.same_grid(ref):
            out.append(f"model {i}: density grid differs from model 0")
    return ValidationReport(tuple(out))


def require_valid(ps, kind=None):
    """Raise ValidationError unless `ps` is a valid prior set of `kind`."""
    if not isinstance(ps, PriorSet):
        raise ValidationError(f"expected a PriorSet, got {type(ps).__name__}")
    if kind is not None and ps.kind != kind:
        raise ValidationError(f"expected a {kind} prior set, got {ps.kind}")
    rep = validate_prior_set(ps)
    if not rep.ok:
        raise ValidationError("invalid prior set: " + "; ".join(rep.violations), rep.violations)
    return ps


# --------------------------------------------------------- risk mappings

def _fd_step(z):
    return 1e-6 * (1.0 + np.abs(z))


@dataclass(frozen=True, eq=False)
class RiskMapping:
    """Loss as a function of the risk factors, Phi0(z) = -X.

    Use the factory functions :func:`affine`, :func:`quadratic`,
    :func:`linear`, :func:`quadratic_multi` and :func:`custom`.
    Scalar mappings (``dim is None``) act elementwise on arrays; multivariate
    ones take arrays of shape ``(..., d)`` and return shape ``(...)``.
    """

    tag: str
    params: dict
    func: object = field(repr=False)
    grad: object = field(default=None, repr=False)
    dim: int = None

    def __call__(self, z):
        return self.func(np.asarray(z, dtype=float))

    @property
    def has_exact_gradient(self):
        return self.grad is not None

    def gradient(self, z):
        """Exact gradient when available, central differences otherwise."""
        z = np.asarray(z, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(z), dtype=float)
        if self.dim is None:
            h = _fd_step(z)
            return (self.func(z + h) - self.func(z - h)) / (2 * h)
        out = np.empty(z.shape, dtype=float)
        for k in range(z.shape[-1]):
            h = _fd_step(z[..., k])
            zp, zm = z.copy(), z.copy()
            zp[..., k] += h
            zm[..., k] -= h
            out[..., k] = (self.func(zp) - self.func(zm)) / (2 * h)
        return out

    def curvature(self, z):
        """Second derivative of a scalar mapping."""
        z = np.asarray(z, dtype=float)
        if self.tag == "affine":
            return np.zeros_like(z)
        if self.tag == "quadratic":
            return np.full_like(z, self.params["c"])
        if self.grad is not None:
            h = 1e-6 * (1.0 + np.abs(z))
            return (self.grad(z + h) - self.grad(z - h)) / (2 * h)
        h = 1e-4 * (1.0 + np.abs(z))
        return (self.func(z + h) - 2 * self.func(z) + self.func(z - h)) / h**2

    def shifted(self, kappa):
        """The mapping Phi0 - kappa (position with extra cash kappa)."""
        return lincomb([self, constant(kappa, self.dim)], [1.0, -1.0])


def affine(alpha, b):
    """Phi0(z) = alpha + b z."""
    alpha, b = float(alpha), float(b)
    return RiskMapping("affine", {"alpha": alpha, "b": b},
                       lambda z: alpha + b * z, lambda z: np.full_like(z, b))


def quadratic(alpha, b, c):
    """Delta-Gamma mapping Phi0(z) = alpha + b z + (c/2) z^2."""
    alpha, b, c = float(alpha), float(b), float(c)
    return RiskMapping("quadratic", {"alpha": alpha, "b": b, "c": c},
                       lambda z: alpha + b * z + 0.5 * c * z * z,
                       lambda z: b + c * z)


def constant(kappa, dim=None):
    if dim is None:
        return affine(kappa, 0.0)
    return quadratic_multi(np.zeros(dim), np.zeros((dim, dim)), alpha=kappa)


def linear(a):
    """Phi0(z) = <a, z>."""
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return RiskMapping("linear-multi", {"a": a},
                       lambda z: z @ a, lambda z: np.broadcast_to(a, z.shape).copy(),
                       dim=len(a))


def quadratic_multi(a, A, alpha=0.0):
    """Phi0(z) = alpha + <a, z> + <z, A z>, with A symmetrized."""
    a = np.array(a, dtype=float)
    A = spd.sym(np.atleast_2d(A))
    a.setflags(write=False)
    A.setflags(write=False)
    alpha = float(alpha)
    return RiskMapping("quadratic-multi", {"a": a, "A": A, "alpha": alpha},
                       lambda z: alpha + z @ a + np.einsum("...i,ij,...j->...", z, A, z),
                       lambda z: a + 2 * z @ A, dim=len(a))


def custom(func, grad=None, dim=None, label="custom"):
    """Arbitrary mapping; gradients fall back to central differences.

    Parameters
    ----------
    func : callable
        Vectorized evaluator. Scalar mappings (``dim=None``) receive arrays
        of any shape; multivariate ones receive shape ``(..., dim)``.
    grad : callable, optional
        Vectorized gradient with the same input convention.
    dim : int, optional
    """
    return RiskMapping("custom", {"label": label}, func, grad, dim)


def lincomb(mappings, coeffs):
    """Linear combination sum_k coeffs[k] * mappings[k].

    Affine, quadratic, linear-multi and quadratic-multi families are closed
    under this operation and keep their tag; anything else becomes custom.
    """
    mappings = list(mappings)
    coeffs = [float(c) for c in coeffs]
    dims = {m.dim for m in mappings}
    if len(dims) != 1:
        raise ValidationError("cannot combine mappings of different dimensions")
    dim = dims.pop()
    tags = {m.tag for m in mappings}
    if dim is None and tags <= {"affine", "quadratic"}:
        p = {k: sum(c * m.params.get(k, 0.0) for m, c in zip(mappings, coeffs))
             for k in ("alpha", "b", "c")}
        if tags == {"affine"}:
            return affine(p["alpha"], p["b"])
        return quadratic(p["alpha"], p["b"], p["c"])
    if dim is not None and tags <= {"linear-multi", "quadratic-multi"}:
        a = sum(c * m.params["a"] for m, c in zip(mappings, coeffs))
        alpha = sum(c * m.params.get("alpha", 0.0) for m, c in zip(mappings, coeffs))
        if tags == {"linear-multi"}:
            return linear(a)
        A = sum(c * m.params.get("A", np.zeros((dim, dim))) for m, c in zip(mappings, coeffs))
        return quadratic_multi(a, A, alpha)

    def func(z):
        return sum(c * m(z) for m, c in zip(mappings, coeffs))

    grad = None
    if all(m.has_exact_gradient for m in mappings):
        def grad(z):
            return sum(c * m.gradient(z) for m, c in zip(mappings, coeffs))
    return custom(func, grad, dim, label="combination")


# ---------------------------------------------------------- expectations

def _checked(values, where):
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(values.ravel()))
    if len(bad):
        raise NumericalError(f"risk mapping returned a non-finite value at {where(bad[0])}")
    return values


def quantile_expectation(q, phi):
    """Integral of Phi0(g(s)) over (0, 1) on the model's grid.

    Parameters
    ----------
    q : QuantileModel
    phi : RiskMapping
        Scalar mapping.

    Returns
    -------
    float
    """
    msgs = q.violations()
    if msgs:
        raise ValidationError("invalid quantile model: " + "; ".join(msgs), msgs)
    vals = _checked(phi(q.values), lambda j: f"grid point s={q.grid[j]:.6g} (z={q.values[j]:.6g})")
    return q.integrate(vals)


def exact_ls_expectation(m, S, phi):
    """Closed-form E[Phi0(m + S^{1/2} Z0)] or None if there is none."""
    m = np.atleast_1d(m)
    p = phi.params
    if phi.tag == "affine" and len(m) == 1:
        return p["alpha"] + p["b"] * m[0]
    if phi.tag == "quadratic" and len(m) == 1:
        return p["alpha"] + p["b"] * m[0] + 0.5 * p["c"] * (m[0] ** 2 + S[0, 0])
    if phi.tag == "linear-multi":
        return float(p["a"] @ m)
    if phi.tag == "quadratic-multi":
        return float(p.get("alpha", 0.0) + p["a"] @ m + m @ p["A"] @ m + np.trace(p["A"] @ S))
    return None


def apply_mapping(phi, x):
    """Evaluate a mapping on sample rows x of shape (n, d)."""
    if phi.dim is None:
        if x.shape[1] != 1:
            raise ValidationError("scalar risk mapping used with multivariate factors")
        return phi(x[:, 0])
    if phi.dim != x.shape[1]:
        raise ValidationError(f"risk mapping dimension {phi.dim} does not match factors ({x.shape[1]})")
    return phi(x)


def apply_gradient(phi, x):
    if phi.dim is None:
        return phi.gradient(x[:, 0])[:, None]
    return phi.gradient(x)


def ls_expectation(model, phi, n_samples=DEFAULT_SAMPLES, seed=0, method="auto",
                   return_stderr=False):
    """E[Phi0(m + S^{1/2} Z0)] for a location-scatter model.

    Parameters
    ----------
    model : LocationScatterModel
    phi : RiskMapping
    n_samples : int
        Monte Carlo sample size.
    seed : int
        Seed for the draws of Z0.
    method : {"auto", "exact", "mc"}
        ``auto`` uses exact moments for affine, quadratic, linear-multi and
        quadratic-multi mappings and Monte Carlo otherwise.
    return_stderr : bool
        Also return the Monte Carlo standard error (0 for exact values).

    Returns
    -------
    float, or (float, float)
    """
    msgs = model.violations()
    if msgs:
        raise ValidationError("invalid location-scatter model: " + "; ".join(msgs), msgs)
    if n_samples < 1:
        raise ValidationError("n_samples must be at least 1")
    val = None
    if method in ("auto", "exact"):
        val = exact_ls_expectation(model.m, model.S, phi)
        if val is None and method == "exact":
            raise ValidationError(f"no closed-form expectation for mapping tag {phi.tag!r}")
    if val is not None:
        return (float(val), 0.0) if return_stderr else float(val)
    z = model.central.sample(n_samples, model.dim, seed)
    x = model.m + z @ spd.sqrt_spd(model.S)
    vals = _checked(apply_mapping(phi, x), lambda j: f"sample {j} (x={x[j]})")
    est = float(vals.mean())
    if return_stderr:
        se = float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else np.inf
        return est, se
    return est


# --------------------------------------------------------------- reports

@dataclass(frozen=True, eq=False)
class RiskReport:
    """Result of a risk computation.

    Attributes
    ----------
    value : float
    maximizer : model (or tuple of models for two-factor problems)
    gamma : float
    method : str
        One of ``closed-form``, ``foc``, ``direct``, ``perturbative``,
        ``fixed-point``.
    diagnostics : dict
    """

    value: float
    maximizer: object
    gamma: float
    method: str
    diagnostics: dict = field(default_factory=dict)
