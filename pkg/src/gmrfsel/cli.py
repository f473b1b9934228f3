"""Command-line front end.

    gmrfsel simulate   write simulated fields (binary or CSV, with a JSON sidecar)
    gmrfsel select     neighborhood selection on a dataset
    gmrfsel fit        fit one model of the collection
    gmrfsel benchmark  Monte Carlo risk tables
    gmrfsel path-dump  dimension-versus-N selection path of a dataset

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import io as gio
from .baselines import aic_bic_select, fit_mle, variogram_estimator
from .cls import Periodogram, fit_plane, fit_torus
from .errors import GMRFError
from .experiments import EXPERIMENTS, ExperimentConfig, named_config, run_experiment
from .lattice import LatticeSpec, build_model_collection
from .params import ConstraintSpec, ThetaField
from .risk import write_risk_csv
from .select import slope_select_plane, slope_select_torus
from .simulate import (AnisotropySpec, CorrelationModel, PlaneSampler, TorusSampler, make_theta_phi,
                       substream)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


def load_config(path: str | None) -> dict:
    """Read and validate a JSON config file (empty dict when ``path`` is None)."""
    if path is None:
        return {}
    import jsonschema

    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    schema = json.loads(resources.files("gmrfsel").joinpath("config_schema.json").read_text())
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc.message}") from exc
    return cfg


def _merge(cfg: dict, args, keys) -> dict:
    """Command-line flags override config keys."""
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _rho(v):
    if v is None:
        return None
    return math.inf if str(v).lower() in ("inf", "infinity") else float(v)


def _write_json(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(gio.dumps(obj) + "\n")


# --- simulate ---------------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _merge(load_config(args.config), args,
                 ["p", "n", "seed", "phi", "family", "range", "kappa", "aniso_ratio", "aniso_rotation"])
    p, n, seed = int(cfg.get("p", 20)), int(cfg.get("n", 1)), int(cfg.get("seed", 0))
    family = cfg.get("family")
    if args.theta is not None:
        theta = ThetaField.from_json(Path(args.theta).read_text())
        obs = TorusSampler(theta).sample(n, substream(seed))
        truth = {"theta": theta.to_dict()}
    elif family is None:
        lat = LatticeSpec(p, p)
        theta = make_theta_phi(float(cfg.get("phi", 0.0)), lat)
        obs = TorusSampler(theta).sample(n, substream(seed))
        truth = {"theta": theta.to_dict(), "phi": float(cfg.get("phi", 0.0))}
    else:
        lat = LatticeSpec(p, p, toroidal=False)
        model = CorrelationModel(family, float(cfg.get("range", 3.0)), cfg.get("kappa"))
        ratio, rot = float(cfg.get("aniso_ratio", 1.0)), float(cfg.get("aniso_rotation", 0.0))
        aniso = AnisotropySpec(ratio, rot) if (ratio != 1.0 or rot != 0.0) else None
        obs = PlaneSampler(model, lat, aniso).sample(n, substream(seed))
        truth = {"correlation": model.to_dict(), "anisotropy": None if aniso is None else aniso.to_dict()}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv" or out.suffix == ".csv":
        gio.write_csv(obs, out)
    else:
        gio.write_binary(obs, out)
    gio.write_sidecar(out, {"lattice": obs.lattice.to_dict(), "n": obs.n, "seed": seed, "truth": truth,
                            "generator": "Philox", "version": __version__})
    print(f"wrote {obs.n} field(s) on a {obs.lattice.p1}x{obs.lattice.p2} "
          f"{'torus' if obs.lattice.toroidal else 'window'} to {out}")
    return EXIT_OK


# --- select / fit / path-dump -----------------------------------------------------------------

def _load(args):
    obs, meta = gio.load_dataset(args.dataset)
    if getattr(args, "plane", False) and obs.lattice.toroidal:
        obs = type(obs)(LatticeSpec(obs.lattice.p1, obs.lattice.p2, toroidal=False), obs.data)
    return obs, meta


def _collection(obs, args):
    iso = not args.aniso
    max_dim = args.max_dim
    if max_dim is None:
        max_dim = 21 if obs.lattice.toroidal else (18 if iso else 28)
    return build_model_collection(obs.lattice, max_dim, iso=iso), iso


def select_report(obs, method: str, collection, iso: bool, rho=None, family=None, fix_kappa=None):
    """Library call behind ``gmrfsel select``; returns a JSON-ready dict."""
    if method in ("aic", "bic"):
        if not obs.lattice.toroidal:
            raise ConfigError(f"method {method} requires a torus (likelihood is only tractable there)")
        k, res = aic_bic_select(obs, collection, iso, method.upper())
        return {"method": method, "selected": k, "selected_dim": res.model.dim(iso), "fit": res.to_dict()}
    if method == "variogram":
        if obs.lattice.toroidal:
            raise ConfigError("method variogram requires a non-toroidal window")
        if family is None:
            raise ConfigError("method variogram requires --family")
        theta, vf = variogram_estimator(obs, family, fix_kappa)
        return {"method": method, "variogram": vf.to_dict(), "theta": theta.to_dict()}
    if method == "cls-slope":
        if obs.lattice.toroidal:
            rep = slope_select_torus(obs, collection, iso, ConstraintSpec(rho=rho) if rho not in
                                     (None, math.inf) else None)
        else:
            rep = slope_select_plane(obs, collection, iso)
        return {"method": method, **rep.to_dict()}
    raise ConfigError(f"unknown method {method!r}")


def cmd_select(args) -> int:
    obs, _ = _load(args)
    models, iso = _collection(obs, args)
    report = select_report(obs, args.method, models, iso, _rho(args.rho), args.family, args.fix_kappa)
    if args.out:
        _write_json(report, args.out)
    if "selected_dim" in report:
        print(f"{args.method}: selected model {report['selected']} (dimension {report['selected_dim']})")
    else:
        v = report["variogram"]
        print(f"{args.method}: {v['family']} range={v['range_hat']:.6g} variance={v['variance_hat']:.6g}"
              + (f" kappa={v['kappa_hat']:.6g}" if v["kappa_hat"] is not None else ""))
    if not args.out:
        print(gio.dumps(report))
    return EXIT_OK


def cmd_fit(args) -> int:
    obs, _ = _load(args)
    models, iso = _collection(obs, args)
    if not 0 <= args.model < len(models):
        raise ConfigError(f"model index must be in [0, {len(models) - 1}]")
    m = models[args.model]
    if args.method == "mle":
        if not obs.lattice.toroidal:
            raise ConfigError("method mle requires a torus")
        out = fit_mle(m, obs, iso).to_dict()
    elif obs.lattice.toroidal:
        rho = _rho(args.rho)
        out = fit_torus(m, obs, iso, ConstraintSpec(rho=rho) if rho not in (None, math.inf) else None).to_dict()
    else:
        out = fit_plane(m, obs, None, iso).to_dict()
    if args.out:
        _write_json(out, args.out)
    else:
        print(gio.dumps(out))
    return EXIT_OK


def cmd_path_dump(args) -> int:
    obs, _ = _load(args)
    models, iso = _collection(obs, args)
    if obs.lattice.toroidal:
        rep = slope_select_torus(Periodogram(obs), models, iso)
    else:
        rep = slope_select_plane(obs, models, iso)
    path = rep.path
    out = {"normalization": path.normalization, "N_min_hat": rep.N_min_hat, "jump_size": rep.jump_size,
           "selected": rep.selected, "breakpoints": path.to_dict()["breakpoints"],
           "models": rep.diagnostics()}
    if args.out:
        _write_json(out, args.out)
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["N", "dim"])
                for bp in out["breakpoints"]:
                    w.writerow([f"{bp['N']:.6g}", bp["dim"]])
    else:
        print(gio.dumps(out))
    return EXIT_OK


# --- benchmark --------------------------------------------------------------------------------

_CONFIG_KEYS = [f for f in ExperimentConfig.__dataclass_fields__]


def build_experiment_config(file_cfg: dict, args) -> ExperimentConfig:
    cfg = dict(file_cfg)
    for k in ("p", "n", "reps", "seed", "collection_max_dim", "workers", "output_dir"):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if args.experiment is not None:
        cfg["experiment"] = args.experiment
    name = cfg.pop("experiment", "custom")
    if "rhos" in cfg:
        cfg["rhos"] = [_rho(r) for r in cfg["rhos"]]
    if "phi" in cfg:
        cfg.setdefault("params", [cfg.pop("phi")])
    unknown = set(cfg) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        ec = named_config(name, **cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not ec.estimators:
        raise ConfigError("no estimators configured")
    return ec


def provenance(cfg: ExperimentConfig, result) -> dict:
    return {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": {"gmrfsel": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": __import__("scipy").__version__},
        "rng": "numpy Philox, substream (seed, replication)",
        "failed_replications": result.failed_reps,
        "cell_failures": {f"{r['estimator']}|{r['param']}": r["failures"] for r in result.rows},
        "oracle_models": result.oracle_models,
    }


def cmd_benchmark(args) -> int:
    cfg = build_experiment_config(load_config(args.config), args)
    result = run_experiment(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = cfg.experiment
    write_risk_csv(result.rows, out / f"{stem}.csv")
    _write_json(provenance(cfg, result), out / f"{stem}_provenance.json")
    # plot data: per-model risks and selected dimensions per cell
    with open(out / f"{stem}_models.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "series", "mean"])
        for param, losses in result.losses.items():
            for key, vals in losses.items():
                arr = np.asarray(vals, dtype=float)
                arr = arr[np.isfinite(arr)]
                if key.startswith(("model", "dim")) and arr.size:
                    w.writerow([param, key, f"{float(np.mean(arr)):.6g}"])
    for r in result.rows:
        print(f"{r['estimator']:>20s}  {str(r['param']):>22s}  {r['risk_mean']:.6g} +- {r['ci95']:.3g}"
              f"  (reps {r['reps']}, failures {r['failures']})")
    return EXIT_OK


# --- parser -----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gmrfsel", description="Neighborhood selection for Gaussian fields")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate fields to a dataset file")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=["bin", "csv"], default="bin")
    s.add_argument("--p", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--phi", type=float, help="torus truth theta^phi")
    s.add_argument("--theta", help="torus truth from a ThetaField JSON file")
    s.add_argument("--family", choices=["exponential", "circular", "spherical", "matern"],
                   help="window truth with this correlation family")
    s.add_argument("--range", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--aniso-ratio", dest="aniso_ratio", type=float)
    s.add_argument("--aniso-rotation", dest="aniso_rotation", type=float)
    s.set_defaults(func=cmd_simulate)

    def data_args(q):
        q.add_argument("dataset")
        q.add_argument("--out")
        q.add_argument("--max-dim", dest="max_dim", type=int)
        q.add_argument("--aniso", action="store_true", help="anisotropic models (default isotropic)")
        q.add_argument("--plane", action="store_true", help="treat data without a sidecar as a window")

    s = sub.add_parser("select", help="select a neighborhood")
    data_args(s)
    s.add_argument("--method", choices=["cls-slope", "aic", "bic", "variogram"], default="cls-slope")
    s.add_argument("--rho")
    s.add_argument("--family", choices=["exponential", "circular", "spherical", "matern"])
    s.add_argument("--fix-kappa", dest="fix_kappa", type=float)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("fit", help="fit one model of the collection")
    data_args(s)
    s.add_argument("--model", type=int, required=True, help="index in the collection")
    s.add_argument("--method", choices=["cls", "mle"], default="cls")
    s.add_argument("--rho")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("path-dump", help="selection path (dimension versus N)")
    data_args(s)
    s.add_argument("--csv", help="also write (N, dim) breakpoints as CSV")
    s.set_defaults(func=cmd_path_dump)

    s = sub.add_parser("benchmark", help="Monte Carlo risk table")
    s.add_argument("--experiment", choices=EXPERIMENTS)
    s.add_argument("--config")
    s.add_argument("--p", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--collection-max-dim", dest="collection_max_dim", type=int)
    s.add_argument("--workers", type=int, help="worker processes (default: $GMRFSEL_WORKERS or 1)")
    s.add_argument("--output-dir", dest="output_dir")
    s.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GMRFError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
