"""JSON reading and writing for models, prior sets, mappings and reports.

Model files::

    {"kind": "location-scatter", "m": [0, 1], "S": [[1, 0], [0, 2]], "central": "normal"}
    {"kind": "quantile", "grid_size": 2001, "family": "normal", "params": {"mean": 0, "sd": 1}}
    {"kind": "grid-density", "family": "normal", "params": {"mean": 0, "sd": 1}}

Prior-set files list models (inline or as paths relative to the prior-set
file) and their weights::

    {"models": ["a.json", "b.json"], "weights": [0.5, 0.5]}

Grid-density prior sets are expanded onto one common lattice covering every
prior by ``pad`` standard deviations (keys ``grid_size`` and ``pad``).

Mapping files::

    {"tag": "affine", "alpha": 0, "b": 1}
    {"tag": "quadratic", "alpha": 0, "b": 1, "c": 0.5}
    {"tag": "linear-multi", "a": [1, 2]}
    {"tag": "quadratic-multi", "a": [0, 0], "A": [[1, 0], [0, 1]]}
    {"tag": "custom", "expr": "log(1 + exp(z))"}
    {"tag": "custom", "expr": "z0 * z1", "dim": 2}
"""

import dataclasses
import json
import os
import tempfile

import numpy as np

from .errors import ValidationError
from .models import (GridDensityModel, LocationScatterModel, PriorSet, QuantileModel,
                     QUANTILE_GRID_SIZE, RiskMapping, affine, central_law, common_axes,
                     custom, linear, quadratic, quadratic_multi, quantile_grid)


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc


def _resolve(entry, base_dir):
    if isinstance(entry, str):
        return load_json(os.path.join(base_dir, entry))
    if isinstance(entry, dict):
        return entry
    raise ValidationError(f"model entry must be a file name or an object, got {type(entry).__name__}")


def _need(d, key, what):
    if key not in d:
        raise ValidationError(f"{what} is missing the field {key!r}")
    return d[key]


# ---------------------------------------------------------------- models

def _central(d):
    name = d.get("central", "normal")
    if isinstance(name, dict):
        return central_law(name.get("name", "normal"), name.get("df"))
    return central_law(name, d.get("df"))


def model_from_dict(d):
    """Build a quantile or location-scatter model from its JSON object."""
    kind = _need(d, "kind", "model")
    if kind == "location-scatter":
        return LocationScatterModel(_need(d, "m", "model"), _need(d, "S", "model"), _central(d))
    if kind == "quantile":
        if "values" in d:
            grid = d.get("grid")
            grid = quantile_grid(len(d["values"])) if grid is None else grid
            return QuantileModel(grid, d["values"])
        M = int(d.get("grid_size", QUANTILE_GRID_SIZE))
        fam = _need(d, "family", "quantile model")
        p = d.get("params", {})
        if fam == "normal":
            return QuantileModel.normal(p.get("mean", 0.0), p.get("sd", 1.0), M)
        if fam in ("student-t", "t"):
            return QuantileModel.student_t(_need(p, "df", "student-t params"),
                                           p.get("loc", 0.0), p.get("scale", 1.0), M)
        if fam == "location-scatter":
            ls = LocationScatterModel([p.get("m", 0.0)], [[p.get("S", 1.0)]], _central(p))
            return ls.to_quantile(M)
        raise ValidationError(f"unknown quantile family {fam!r}")
    if kind == "grid-density":
        raise ValidationError("grid-density models must be loaded as part of a prior set")
    raise ValidationError(f"unknown model kind {kind!r}")


def _density_moments(d):
    fam = _need(d, "family", "grid-density model")
    p = d.get("params", {})
    if fam == "normal":
        if "cov" in p:
            mean = np.atleast_1d(np.asarray(p["mean"], dtype=float))
            cov = np.atleast_2d(np.asarray(p["cov"], dtype=float))
            return mean, np.sqrt(np.diag(cov))
        return np.atleast_1d(float(p.get("mean", 0.0))), np.atleast_1d(float(p.get("sd", 1.0)))
    if fam in ("student-t", "t"):
        df = float(_need(p, "df", "student-t params"))
        scale = float(p.get("scale", 1.0))
        sd = scale * np.sqrt(df / (df - 2)) if df > 2 else scale * 10
        return np.atleast_1d(float(p.get("loc", 0.0))), np.atleast_1d(sd)
    raise ValidationError(f"unknown grid-density family {fam!r}")


def _density_on(d, axes):
    p = d.get("params", {})
    if d["family"] == "normal":
        if "cov" in p:
            return GridDensityModel.normal(axes, p["mean"], p["cov"])
        return GridDensityModel.normal(axes, p.get("mean", 0.0), float(p.get("sd", 1.0)) ** 2)
    if len(axes) != 1:
        raise ValidationError("student-t grid densities are one-dimensional")
    return GridDensityModel.student_t(axes[0], p["df"], p.get("loc", 0.0), p.get("scale", 1.0))


def _grid_density_set(entries, spec):
    explicit = [e for e in entries if "density" in e]
    if explicit:
        if len(explicit) != len(entries):
            raise ValidationError("mix of tabulated and named grid densities in one prior set")
        return [GridDensityModel(tuple(np.asarray(a, float) for a in _need(e, "axes", "grid density")),
                                 np.asarray(e["density"], float)) for e in entries]
    moments = [_density_moments(e) for e in entries]
    dims = {len(m) for m, _ in moments}
    if len(dims) != 1:
        raise ValidationError("grid densities of different dimensions in one prior set")
    dim = dims.pop()
    if dim > 2:
        raise ValidationError("grid densities are limited to 2 dimensions; "
                              "use location-scatter priors for more factors")
    axes = common_axes([m for m, _ in moments], [s for _, s in moments],
                       size=spec.get("grid_size"), pad=float(spec.get("pad", 6.0)))
    return [_density_on(e, axes) for e in entries]


def prior_set_from_dict(d, base_dir="."):
    """Build a PriorSet from a prior-set object (or a single model object)."""
    if "kind" in d and "models" not in d:
        d = {"models": [d]}
    entries = [_resolve(e, base_dir) for e in _need(d, "models", "prior set")]
    if not entries:
        raise ValidationError("prior set has no models")
    kinds = {e.get("kind") for e in entries}
    if len(kinds) != 1:
        raise ValidationError(f"prior set mixes model kinds {sorted(map(str, kinds))}")
    kind = kinds.pop()
    if kind == "grid-density":
        models = _grid_density_set(entries, d)
    else:
        models = [model_from_dict(e) for e in entries]
    weights = d.get("weights")
    if weights is None:
        weights = [1.0 / len(models)] * len(models)
    try:
        weights = np.asarray(weights, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError("weights must be numbers") from exc
    return PriorSet(models[0].kind, models, weights)


def load_prior_set(path):
    return prior_set_from_dict(load_json(path), os.path.dirname(os.path.abspath(path)))


# -------------------------------------------------------------- mappings

def _sympy_mapping(expr, dim):
    import sympy

    if dim is None:
        syms = [sympy.Symbol("z")]
    else:
        syms = [sympy.Symbol(f"z{k}") for k in range(dim)]
    local = {s.name: s for s in syms}
    try:
        f = sympy.sympify(expr, locals=local)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ValidationError(f"cannot parse risk mapping expression {expr!r}") from exc
    extra = f.free_symbols - set(syms)
    if extra:
        raise ValidationError(f"unknown variables {sorted(map(str, extra))} in {expr!r}")
    fn = sympy.lambdify(syms, f, "numpy")
    grads = [sympy.lambdify(syms, sympy.diff(f, s), "numpy") for s in syms]

    if dim is None:
        def func(z):
            return np.broadcast_to(fn(z), np.shape(z)).astype(float)

        def grad(z):
            return np.broadcast_to(grads[0](z), np.shape(z)).astype(float)
    else:
        def func(z):
            cols = [z[..., k] for k in range(dim)]
            return np.broadcast_to(fn(*cols), z.shape[:-1]).astype(float)

        def grad(z):
            cols = [z[..., k] for k in range(dim)]
            return np.stack([np.broadcast_to(g(*cols), z.shape[:-1]) for g in grads],
                            axis=-1).astype(float)
    return custom(func, grad, dim, label=str(expr))


def mapping_from_dict(d):
    """Build a RiskMapping from its JSON object."""
    tag = _need(d, "tag", "risk mapping")
    if tag == "affine":
        return affine(d.get("alpha", 0.0), _need(d, "b", "affine mapping"))
    if tag == "quadratic":
        return quadratic(d.get("alpha", 0.0), d.get("b", 0.0), _need(d, "c", "quadratic mapping"))
    if tag in ("linear-multi", "linear"):
        return linear(_need(d, "a", "linear mapping"))
    if tag == "quadratic-multi":
        A = np.asarray(_need(d, "A", "quadratic mapping"), dtype=float)
        return quadratic_multi(d.get("a", np.zeros(len(A))), A, d.get("alpha", 0.0))
    if tag == "custom":
        dim = d.get("dim")
        return _sympy_mapping(_need(d, "expr", "custom mapping"), None if dim is None else int(dim))
    raise ValidationError(f"unknown risk mapping tag {tag!r}")


def load_mapping(path):
    return mapping_from_dict(load_json(path))


# --------------------------------------------------------- serialization

def to_jsonable(x):
    """Convert numpy arrays, dataclasses and models to plain JSON values."""
    if isinstance(x, (str, bool)) or x is None:
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, QuantileModel):
        return {"kind": "quantile", "grid": to_jsonable(x.grid), "values": to_jsonable(x.values)}
    if isinstance(x, LocationScatterModel):
        out = {"kind": "location-scatter", "m": to_jsonable(x.m), "S": to_jsonable(x.S),
               "central": x.central.name}
        if x.central.df is not None:
            out["df"] = x.central.df
        return out
    if isinstance(x, GridDensityModel):
        return {"kind": "grid-density", "axes": to_jsonable(list(x.axes)),
                "density": to_jsonable(x.density)}
    if isinstance(x, RiskMapping):
        return {"tag": x.tag, **to_jsonable({k: v for k, v in x.params.items()})}
    if dataclasses.is_dataclass(x):
        return {f.name: to_jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if hasattr(x, "_asdict"):
        return to_jsonable(x._asdict())
    return repr(x)


def dumps(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_write(path, text):
    """Write text to path through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
