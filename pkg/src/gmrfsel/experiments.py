"""Monte Carlo studies: torus studies of the CLS slope heuristic against
constrained variants and AIC/BIC, and window studies against the
variogram/kriging route.

Each study is a picklable per-replication task returning named losses;
:func:`run_experiment` turns them into table rows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .baselines import aic_bic_select, default_kriging_window, fit_mle, variogram_estimator
from .cls import Periodogram, fit_torus
from .errors import GMRFError
from .lattice import LatticeSpec, build_model_collection
from .params import ConstraintSpec
from .risk import PlaneLoss, RiskEstimate, loss_torus, oracle_and_ratio, run_replications
from .select import slope_select_plane, slope_select_torus
from .simulate import AnisotropySpec, CorrelationModel, PlaneSampler, TorusSampler, make_theta_phi

EXPERIMENTS = ("table1", "table2", "table3", "table4", "table5", "table6", "custom")
INF = math.inf


@dataclass
class ExperimentConfig:
    """Parameters of one benchmark run; named experiments fill in their defaults."""

    experiment: str = "custom"
    p: int = 20
    n: int = 1
    reps: int = 200
    seed: int = 20240101
    collection_max_dim: int | None = None
    estimators: list[str] = field(default_factory=list)
    params: list = field(default_factory=list)
    # torus truth
    rhos: list = field(default_factory=lambda: [INF])
    # window truth
    family: str | None = None
    range: float = 3.0
    kappa: float | None = None
    aniso_ratio: float = 1.0
    aniso_rotation: float = 0.0
    iso: bool = True
    variogram_families: list[str] = field(default_factory=list)
    fix_kappa: bool = False
    workers: int | None = None
    output_dir: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def toroidal(self) -> bool:
        return self.family is None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rhos"] = [_rho_label(r) for r in self.rhos]
        return d


def named_config(name: str, **overrides) -> ExperimentConfig:
    """Desk-scale defaults of the named studies (``reps`` 200, windows up to 30)."""
    base = {
        "table1": dict(p=20, params=[0.015], rhos=[2.0, 4.0, 8.0, INF], collection_max_dim=21,
                       estimators=["cls_slope"]),
        "table2": dict(p=20, params=[0.0, 0.0125, 0.015, 0.0175], collection_max_dim=21,
                       estimators=["aic", "bic", "cls_slope"]),
        "table3": dict(p=20, family="exponential", params=["exponential", "circular", "spherical"],
                       collection_max_dim=18, estimators=["variogram", "cls_slope"]),
        "table4": dict(p=30, family="matern", params=[0.05, 0.25, 0.5, 1.0, 2.0, 4.0], collection_max_dim=18,
                       estimators=["variogram", "cls_slope"]),
        "table5": dict(p=30, family="matern", kappa=0.05, collection_max_dim=18, estimators=["variogram"],
                       variogram_families=["exponential", "circular", "spherical", "matern"]),
        "table6": dict(p=30, family="matern", iso=False,
                       params=[[a, k] for a in (2.0, 5.0) for k in (0.05, 0.25, 0.5, 1.0, 2.0, 4.0)],
                       collection_max_dim=28, estimators=["variogram", "cls_slope"]),
        "custom": dict(),
    }
    if name not in base:
        raise ValueError(f"unknown experiment {name!r}")
    kw = dict(base[name])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(experiment=name, **kw)


def _rho_label(r) -> str:
    return "inf" if r is None or (isinstance(r, float) and math.isinf(r)) else f"{float(r):g}"


def _constraint(r):
    return None if r is None or math.isinf(r) else ConstraintSpec(rho=float(r))


class TorusTask:
    """One replication on a torus: CLS slope heuristic (per rho), AIC and BIC,
    plus per-model CLS losses for the oracle."""

    def __init__(self, p: int, n: int, phi: float, rhos: Sequence, estimators: Sequence[str], max_dim: int):
        self.lattice = LatticeSpec(p, p)
        self.n = n
        self.truth = make_theta_phi(phi, self.lattice)
        self.sampler = TorusSampler(self.truth)
        self.models = build_model_collection(self.lattice, max_dim, iso=True)
        self.rhos = list(rhos)
        self.estimators = list(estimators)

    def __call__(self, rep: int, rng) -> dict:
        data = Periodogram(self.sampler.sample(self.n, rng))
        out = {}
        if "cls_slope" in self.estimators:
            for r in self.rhos:
                tag = _rho_label(r)
                try:
                    fits = [fit_torus(m, data, True, _constraint(r)) for m in self.models]
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        report = slope_select_torus(data, self.models, True, _constraint(r), fits)
                    losses = [loss_torus(f.theta, self.truth, self.truth) for f in fits]
                    out[f"cls_slope|{tag}"] = losses[report.selected]
                    out[f"dim|{tag}"] = float(report.selected_model.d_m_iso)
                    for k, v in enumerate(losses):
                        out[f"model{k}|{tag}"] = v
                except GMRFError:
                    out[f"cls_slope|{tag}"] = math.nan
        if "aic" in self.estimators or "bic" in self.estimators:
            try:
                mle = [fit_mle(m, data, True) for m in self.models]
                for crit in ("aic", "bic"):
                    if crit in self.estimators:
                        _, res = aic_bic_select(data, self.models, True, crit.upper(), mle)
                        out[crit] = loss_torus(res.theta, self.truth, self.truth)
            except GMRFError:
                out.update({c: math.nan for c in ("aic", "bic") if c in self.estimators})
        return out


class PlaneTask:
    """One replication on a window: CLS slope heuristic (common-sublattice
    fits for the oracle, refit for the reported risk) and variogram/kriging."""

    def __init__(self, p: int, n: int, model: CorrelationModel, aniso: AnisotropySpec | None, iso: bool,
                 max_dim: int, estimators: Sequence[str], variogram_families: Sequence[str],
                 fix_kappa: bool):
        self.lattice = LatticeSpec(p, p, toroidal=False)
        self.n = n
        self.model = model
        self.aniso = aniso
        self.iso = iso
        self.sampler = PlaneSampler(model, self.lattice, aniso)
        self.loss = PlaneLoss(model, self.lattice, aniso)
        self.models = build_model_collection(self.lattice, max_dim, iso=iso)
        self.estimators = list(estimators)
        self.vfams = list(variogram_families) or [model.family]
        self.fix_kappa = fix_kappa
        # window from the true smoothness, mirroring the near-singular Matern cases
        self.window = default_kriging_window(model.family, model.kappa)

    def __call__(self, rep: int, rng) -> dict:
        data = self.sampler.sample(self.n, rng)
        out = {}
        if "cls_slope" in self.estimators:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    report = slope_select_plane(data, self.models, self.iso)
                losses = [self.loss(f.theta) for f in report.fits]
                out["cls_slope"] = self.loss(report.final_fit.theta)
                out["cls_common"] = losses[report.selected]
                out["dim"] = float(report.selected_model.dim(self.iso))
                for k, v in enumerate(losses):
                    out[f"model{k}"] = v
            except GMRFError:
                out["cls_slope"] = math.nan
        if "variogram" in self.estimators:
            for fam in self.vfams:
                kappa = self.model.kappa if (self.fix_kappa and fam == self.model.family) else None
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        theta, _ = variogram_estimator(data, fam, kappa, self.window, self.aniso,
                                                       seed=rep)
                    out[f"variogram|{fam}"] = self.loss(theta)
                except (GMRFError, RuntimeError, ValueError, np.linalg.LinAlgError):
                    out[f"variogram|{fam}"] = math.nan
        return out


def ratio_with_ci(selected: Sequence[float], oracle: Sequence[float]) -> tuple[float, float]:
    """Ratio of mean losses with a delta-method 95% half-width (paired replications)."""
    x = np.asarray(selected, dtype=float)
    y = np.asarray(oracle, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2:
        return math.nan, math.nan
    my = math.fsum(sorted(y)) / y.size
    mx = math.fsum(sorted(x)) / x.size
    if my == 0:
        return (1.0 if mx == 0 else INF), math.nan
    R = mx / my
    z = (x - R * y) / my
    return R, float(1.96 * z.std(ddof=1) / math.sqrt(z.size))


def _row(exp, est, param, mean, ci, reps, failures) -> dict:
    return {"experiment": exp, "estimator": est, "param": param, "risk_mean": mean, "ci95": ci,
            "reps": reps, "failures": failures}


def _oracle_rows(exp, losses: dict, prefix_sel: str, suffix: str, param, failures):
    """Risk ratio of the selected estimator against the best single model."""
    per_model = {k: RiskEstimate.from_losses(v) for k, v in losses.items()
                 if k.startswith("model") and k.endswith(suffix)}
    if not per_model:
        return None, None
    sel = RiskEstimate.from_losses(losses[prefix_sel])
    key, _ = oracle_and_ratio(per_model, sel)
    R, half = ratio_with_ci(losses[prefix_sel], losses[key])
    return _row(exp, "ratio_" + prefix_sel.split("|")[0], param, R, half, sel.reps, failures), key


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    losses: dict = field(repr=False)
    oracle_models: dict = field(default_factory=dict)
    failed_reps: dict = field(default_factory=dict)

    def cell(self, estimator: str, param) -> dict:
        for r in self.rows:
            if r["estimator"] == estimator and str(r["param"]) == str(param):
                return r
        raise KeyError((estimator, param))


def _plane_truth(cfg: ExperimentConfig, param):
    """``(CorrelationModel, AnisotropySpec or None, label)`` of one cell.

    ``param`` is a family name (table3), a Matern smoothness, or an
    ``[anisotropy ratio, smoothness]`` pair.
    """
    family, kappa = cfg.family, cfg.kappa
    ratio = cfg.aniso_ratio
    label = "default" if param is None else param
    if isinstance(param, (list, tuple)):
        ratio, kappa = float(param[0]), float(param[1])
        label = f"ratio={ratio:g};kappa={kappa:g}"
        param = None
    aniso = AnisotropySpec(ratio, cfg.aniso_rotation) if (ratio != 1.0 or cfg.aniso_rotation != 0.0) else None
    if param is None:
        pass
    elif cfg.experiment == "table3" or isinstance(param, str):
        family = param
    else:
        kappa = float(param)
    return CorrelationModel(family, cfg.range, kappa if family == "matern" else None), aniso, label


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every cell of ``cfg``; cells reuse one seed so parameters are compared on common noise."""
    rows, all_losses, oracles, failed = [], {}, {}, {}
    exp = cfg.experiment
    if cfg.toroidal:
        params = cfg.params or [0.015]
        max_dim = cfg.collection_max_dim or 21
        for phi in params:
            task = TorusTask(cfg.p, cfg.n, float(phi), cfg.rhos, cfg.estimators, max_dim)
            losses, nfail = run_replications(task, cfg.reps, cfg.seed, cfg.workers)
            all_losses[phi], failed[str(phi)] = losses, nfail
            for est in ("aic", "bic"):
                if est in cfg.estimators:
                    r = RiskEstimate.from_losses(losses.get(est, [math.nan] * cfg.reps))
                    rows.append(_row(exp, est, phi, r.mean, r.ci95_halfwidth, r.reps, r.failures + nfail))
            if "cls_slope" in cfg.estimators:
                for rho in cfg.rhos:
                    tag = _rho_label(rho)
                    key = f"cls_slope|{tag}"
                    r = RiskEstimate.from_losses(losses.get(key, [math.nan] * cfg.reps))
                    param = phi if len(cfg.rhos) == 1 else f"phi={phi};rho={tag}"
                    rows.append(_row(exp, "cls_slope", param, r.mean, r.ci95_halfwidth, r.reps,
                                     r.failures + nfail))
                    ratio, okey = _oracle_rows(exp, losses, key, f"|{tag}", param, r.failures + nfail)
                    if ratio is not None:
                        rows.append(ratio)
                        oracles[str(param)] = okey
    else:
        params = cfg.params or [None]
        max_dim = cfg.collection_max_dim or 18
        for param in params:
            model, aniso, label = _plane_truth(cfg, param)
            task = PlaneTask(cfg.p, cfg.n, model, aniso, cfg.iso, max_dim, cfg.estimators,
                             cfg.variogram_families, cfg.fix_kappa)
            losses, nfail = run_replications(task, cfg.reps, cfg.seed, cfg.workers)
            all_losses[label], failed[str(label)] = losses, nfail
            if "variogram" in cfg.estimators:
                for fam in task.vfams:
                    key = f"variogram|{fam}"
                    r = RiskEstimate.from_losses(losses.get(key, [math.nan] * cfg.reps))
                    est = "variogram" if len(task.vfams) == 1 else f"variogram_{fam}"
                    rows.append(_row(exp, est, label, r.mean, r.ci95_halfwidth, r.reps, r.failures + nfail))
            if "cls_slope" in cfg.estimators:
                r = RiskEstimate.from_losses(losses.get("cls_slope", [math.nan] * cfg.reps))
                rows.append(_row(exp, "cls_slope", label, r.mean, r.ci95_halfwidth, r.reps, r.failures + nfail))
                ratio, okey = _oracle_rows(exp, losses, "cls_common", "", label, r.failures + nfail)
                if ratio is not None:
                    ratio["estimator"] = "ratio_cls_slope"
                    rows.append(ratio)
                    oracles[str(label)] = okey
    return ExperimentResult(cfg, rows, all_losses, oracles, failed)
