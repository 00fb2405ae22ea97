"""Command line front end.

    frechet-risk [--seed N] [--out PATH] [--format json|csv] <subcommand> ...

Exit status is 0 on success, 1 for invalid input (bad flags, malformed JSON,
violated model invariants) and 2 for numerical failures. Errors are reported
as one JSON object on stderr.
"""

import argparse
import csv
import io as _io
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .allocation import allocate_numeric, allocate_perturbative
from .barycenter import barycenter
from .entropic import entropic_risk, entropic_risk_direct
from .errors import FrechetRiskError, NumericalError, ValidationError
from .io import atomic_write, dumps, load_json, load_mapping, mapping_from_dict, \
    prior_set_from_dict, to_jsonable
from .models import DEFAULT_SAMPLES, GridDensityModel, require_valid
from .premia import SimulationConfig, run_robustness_study, write_study_csv
from .risk1d import risk_1d
from .riskls import risk_ls

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


@dataclass
class RunConfig:
    """Everything that determines the output of one invocation."""

    subcommand: str
    inputs: dict = field(default_factory=dict)
    gamma: float = None
    method: str = None
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    out: str = None
    format: str = "json"

    def to_report(self):
        """Settings echoed in reports; the output path is left out so that the
        same run written to different files gives identical bytes."""
        d = asdict(self)
        d.pop("out")
        return d


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(p, suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--seed", type=int, help="random seed (default 0)", **kw)
    p.add_argument("--out", help="output file (default: stdout)", **kw)
    p.add_argument("--format", choices=("json", "csv"), help="report format", **kw)


def build_parser():
    parser = _Parser(prog="frechet-risk",
                     description="Risk measures under multi-prior model uncertainty.")
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    def add(name, help_, methods=None, gamma=True, samples=False):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        if gamma:
            p.add_argument("--gamma", type=float, required=name != "allocate",
                           help="uncertainty aversion")
        if methods:
            p.add_argument("--method", choices=methods, default=methods[0])
        if samples:
            p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                           help="Monte Carlo sample size for non-polynomial mappings")
        return p

    p = add("barycenter", "barycenter of a prior set", gamma=False)
    p.add_argument("--priors", required=True)
    p = add("risk1d", "risk measure for 1-D quantile priors",
            methods=("auto", "closed", "foc", "direct", "perturbative"))
    p.add_argument("--priors", required=True)
    p.add_argument("--mapping", required=True)
    p = add("riskls", "risk measure for location-scatter priors",
            methods=("auto", "fixed-point", "perturbative"), samples=True)
    p.add_argument("--priors", required=True)
    p.add_argument("--mapping", required=True)
    p = add("entropic", "weighted entropic risk for grid-density priors",
            methods=("auto", "closed", "direct"))
    p.add_argument("--priors", required=True)
    p.add_argument("--mapping", required=True)
    p = add("allocate", "Euler allocation of a sector portfolio",
            methods=("perturbative", "numeric"), samples=True)
    p.add_argument("--portfolio", required=True,
                   help="JSON with 'priors', 'sectors' and 'gamma' (--gamma overrides)")
    p = add("study", "robustness study of the premium aggregation methods", gamma=False)
    p.add_argument("--config", help="study settings JSON (defaults if omitted)")
    p.add_argument("--replications", type=int, help="override the number of replications")
    return parser


# ----------------------------------------------------------- reports

def _model_summary(model):
    if isinstance(model, GridDensityModel):
        out = {"kind": "grid-density", "mean": model.mean(), "grid_shape": list(model.shape)}
        if model.dim > 1:
            out["covariance"] = model.covariance()
        else:
            out["variance"] = model.covariance()
        return out
    return model


def _risk_payload(rep, cfg):
    return {"subcommand": cfg.subcommand, "value": rep.value, "gamma": rep.gamma,
            "method": rep.method, "seed": cfg.seed, "maximizer": _model_summary(rep.maximizer),
            "diagnostics": rep.diagnostics, "config": cfg.to_report()}


def _flat_rows(payload):
    """(key, value) rows of the scalar entries of a report, for CSV output."""
    rows = []

    def walk(prefix, x):
        if isinstance(x, dict):
            for k in sorted(x):
                walk(f"{prefix}.{k}" if prefix else str(k), x[k])
        elif not isinstance(x, list):
            rows.append((prefix, x))

    walk("", to_jsonable(payload))
    return rows


def _render(payload, cfg):
    if cfg.format == "json":
        return dumps(payload)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if cfg.subcommand == "allocate":
        w.writerow(("sector", "contribution"))
        for name, c in zip(payload["sectors"], payload["contributions"]):
            w.writerow((name, repr(float(c))))
        w.writerow(("total", repr(float(payload["total_risk"]))))
    else:
        w.writerow(("field", "value"))
        w.writerows(_flat_rows(payload))
    return buf.getvalue()


# ---------------------------------------------------------- commands

def _priors(path, kind):
    return require_valid(prior_set_from_dict(load_json(path), _dir(path)), kind)


def _dir(path):
    return os.path.dirname(os.path.abspath(path))


def run_barycenter(args, cfg):
    ps = prior_set_from_dict(load_json(args.priors), _dir(args.priors))
    require_valid(ps)
    bar = barycenter(ps)
    return {"subcommand": "barycenter", "barycenter": _model_summary(bar.model),
            "frechet_variance": bar.frechet_variance, "iterations": bar.iterations,
            "residual": bar.residual, "diagnostics": bar.diagnostics, "seed": cfg.seed,
            "config": cfg.to_report()}


def run_risk1d(args, cfg):
    ps = _priors(args.priors, "quantile")
    rep = risk_1d(ps, load_mapping(args.mapping), cfg.gamma, cfg.method)
    return _risk_payload(rep, cfg)


def run_riskls(args, cfg):
    ps = _priors(args.priors, "location-scatter")
    rep = risk_ls(ps, load_mapping(args.mapping), cfg.gamma, cfg.method,
                  n_samples=cfg.samples, seed=cfg.seed)
    return _risk_payload(rep, cfg)


def run_entropic(args, cfg):
    ps = _priors(args.priors, "grid-density")
    phi = load_mapping(args.mapping)
    if cfg.method == "direct":
        rep = entropic_risk_direct(ps, phi, cfg.gamma)
    else:
        rep = entropic_risk(ps, phi, cfg.gamma)
    return _risk_payload(rep, cfg)


def run_allocate(args, cfg):
    port = load_json(args.portfolio)
    base = _dir(args.portfolio)
    for key in ("priors", "sectors"):
        if key not in port:
            raise ValidationError(f"portfolio is missing the field {key!r}")
    pri = port["priors"]
    if isinstance(pri, str):
        path = os.path.join(base, pri)
        ps = prior_set_from_dict(load_json(path), _dir(path))
    else:
        ps = prior_set_from_dict(pri, base)
    require_valid(ps, "location-scatter")
    sectors = port["sectors"]
    if not isinstance(sectors, list) or not sectors:
        raise ValidationError("portfolio 'sectors' must be a non-empty list")
    if len(sectors) > 4:
        raise ValidationError(f"at most 4 sectors are supported, got {len(sectors)}")
    names, mappings = [], []
    for k, s in enumerate(sectors):
        if isinstance(s, str):
            s = load_json(os.path.join(base, s))
        names.append(s.get("name", f"sector{k}"))
        mappings.append(mapping_from_dict(s))
    if cfg.gamma is None:
        if "gamma" not in port:
            raise ValidationError("gamma must be given in the portfolio or with --gamma")
        cfg.gamma = float(port["gamma"])
    if cfg.method == "numeric":
        rep = allocate_numeric(ps, mappings, cfg.gamma, n_samples=cfg.samples, seed=cfg.seed)
    else:
        rep = allocate_perturbative(ps, mappings, cfg.gamma, n_samples=cfg.samples, seed=cfg.seed)
    return {"subcommand": "allocate", "sectors": names, "total_risk": rep.total_risk,
            "contributions": rep.contributions, "method": rep.method, "gamma": cfg.gamma,
            "residuals": rep.residuals, "diagnostics": rep.diagnostics, "seed": cfg.seed,
            "config": cfg.to_report()}


def run_study(args, cfg, seed_given):
    settings = load_json(args.config) if args.config else {}
    if not isinstance(settings, dict):
        raise ValidationError("study configuration must be a JSON object")
    try:
        scfg = SimulationConfig.from_dict(settings)
    except TypeError as exc:
        raise ValidationError(f"invalid study configuration: {exc}") from exc
    if seed_given:
        scfg.seed = cfg.seed
    cfg.seed = scfg.seed
    if args.replications is not None:
        scfg.replications = args.replications
    rows = run_robustness_study(scfg)
    return {"subcommand": "study", "rows": rows, "seed": scfg.seed,
            "settings": scfg.to_dict(), "config": cfg.to_report()}


def _execute(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    seed_given = args.seed is not None
    fmt = args.format or ("csv" if args.subcommand == "study" else "json")
    inputs = {k: getattr(args, k) for k in ("priors", "mapping", "portfolio", "config")
              if getattr(args, k, None) is not None}
    cfg = RunConfig(args.subcommand, inputs, getattr(args, "gamma", None),
                    getattr(args, "method", None), getattr(args, "samples", DEFAULT_SAMPLES),
                    args.seed if seed_given else 0, args.out, fmt)
    if cfg.seed < 0:
        raise ValidationError("seed must be non-negative")
    if cfg.samples is not None and cfg.samples < 2:
        raise ValidationError("samples must be at least 2")
    if cfg.gamma is not None and not (np.isfinite(cfg.gamma) and cfg.gamma >= 0):
        raise ValidationError(f"gamma must be a finite non-negative number, got {cfg.gamma}")

    if cfg.subcommand == "study":
        payload = run_study(args, cfg, seed_given)
        if cfg.format == "csv":
            buf = _io.StringIO()
            write_study_csv(payload["rows"], buf)
            text = buf.getvalue()
        else:
            text = dumps(payload)
    else:
        run = {"barycenter": run_barycenter, "risk1d": run_risk1d, "riskls": run_riskls,
               "entropic": run_entropic, "allocate": run_allocate}[cfg.subcommand]
        text = _render(run(args, cfg), cfg)

    if cfg.out:
        atomic_write(cfg.out, text)
    else:
        sys.stdout.write(text)


def _report_error(kind, exc, code):
    err = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "violations", None):
        err["violations"] = list(exc.violations)
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv=None):
    """Run the command line and return the exit status."""
    try:
        _execute(sys.argv[1:] if argv is None else list(argv))
    except ValidationError as exc:
        return _report_error("validation", exc, EXIT_INVALID)
    except NumericalError as exc:
        return _report_error("numerical", exc, EXIT_NUMERICAL)
    except FrechetRiskError as exc:
        return _report_error("validation", exc, EXIT_INVALID)
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        return _report_error("numerical", exc, EXIT_NUMERICAL)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return EXIT_OK


def dispatch(argv):
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
