"""Prediction loss, Monte Carlo risk estimation and oracle risk ratios.

The loss of ``theta1`` against ``theta2`` is the mean squared difference
of the two conditional predictions of a node under the true field.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import GMRFError, InvalidParameterError
from .lattice import LatticeSpec
from .params import ThetaField
from .simulate import AnisotropySpec, CorrelationModel, substream, window_covariance

WORKERS_ENV = "GMRFSEL_WORKERS"
LOSS_WINDOW_LIMIT = 31
TRUNCATION_REFERENCE = 25


def loss_torus(theta1, theta2, truth: ThetaField) -> float:
    """``(1/p1p2) tr[(C1 - C2) Sigma (C1 - C2)]`` through the eigenvalues.

    ``theta1`` and ``theta2`` may be ThetaFields or wrapped coefficient arrays.
    """
    gap = 1.0 - truth.eigenvalues
    if not gap.min() > 0:
        raise InvalidParameterError("truth is not a valid parameter", min_gap=float(gap.min()))
    c1 = theta1.coeffs if isinstance(theta1, ThetaField) else np.asarray(theta1, dtype=float)
    c2 = theta2.coeffs if isinstance(theta2, ThetaField) else np.asarray(theta2, dtype=float)
    if c1.shape != truth.lattice.shape or c2.shape != truth.lattice.shape:
        raise ValueError("parameters must live on the truth's lattice")
    diff = np.fft.fft2(c1 - c2).real
    return float(np.mean(diff ** 2 * truth.sigma2 / gap))


class PlaneLoss:
    """Loss against the exact conditional expectation of the center node of a window.

    The window is the observation lattice, or its centered
    ``31 x 31`` sub-window for larger lattices; ``truncation`` then holds
    the loss of the 31-window predictor measured against a 25-window one,
    an estimate of the error made by truncating.
    """

    def __init__(self, model: CorrelationModel, lattice: LatticeSpec,
                 aniso: AnisotropySpec | None = None, max_window: int = LOSS_WINDOW_LIMIT):
        self.model = model
        self.lattice = lattice
        self.aniso = aniso
        w1, w2 = min(lattice.p1, max_window), min(lattice.p2, max_window)
        self.window = LatticeSpec(w1, w2, toroidal=False)
        self.center = (w1 // 2, w2 // 2)
        self.sigma, self.best = self._predictor(self.window)
        self.truncation = 0.0
        if (w1, w2) != lattice.shape:
            r1, r2 = min(w1, TRUNCATION_REFERENCE), min(w2, TRUNCATION_REFERENCE)
            _, small = self._predictor(LatticeSpec(r1, r2, toroidal=False))
            embedded = np.zeros((w1, w2))
            o1, o2 = self.center[0] - r1 // 2, self.center[1] - r2 // 2
            embedded[o1:o1 + r1, o2:o2 + r2] = small
            d = (embedded - self.best).ravel()[self._rest]
            self.truncation = float(d @ self.sigma @ d)

    def _predictor(self, win: LatticeSpec):
        S = window_covariance(self.model, win, self.aniso)
        c = (win.p1 // 2) * win.p2 + win.p2 // 2
        rest = np.delete(np.arange(win.size), c)
        S_rr = S[np.ix_(rest, rest)]
        try:
            coef = np.linalg.solve(S_rr, S[rest, c])
        except np.linalg.LinAlgError as exc:
            raise InvalidParameterError("window covariance is singular") from exc
        full = np.zeros(win.size)
        full[rest] = coef
        if win == self.window:
            self._rest = rest
        return S_rr, full.reshape(win.shape)

    def coefficients(self, theta) -> np.ndarray:
        """``theta`` placed around the center node of the window (center entry 0)."""
        support = theta.support() if isinstance(theta, ThetaField) else dict(theta)
        a = np.zeros(self.window.shape)
        for (i, j), v in support.items():
            r, c = self.center[0] + i, self.center[1] + j
            if not (0 <= r < self.window.p1 and 0 <= c < self.window.p2):
                raise ValueError(f"offset {(i, j)} falls outside the loss window")
            a[r, c] += v
        return a

    def __call__(self, theta) -> float:
        d = (self.coefficients(theta) - self.best).ravel()[self._rest]
        return float(max(d @ self.sigma @ d, 0.0))

    def best_theta(self) -> dict:
        """Exact best-predictor coefficients keyed by offset from the center."""
        out = {}
        for r, c in np.argwhere(self.best != 0):
            out[(int(r) - self.center[0], int(c) - self.center[1])] = float(self.best[r, c])
        return out


def loss_plane(theta_hat, model: CorrelationModel, window: LatticeSpec,
               aniso: AnisotropySpec | None = None) -> float:
    """Prediction loss of ``theta_hat`` for a stationary field observed on ``window``."""
    return PlaneLoss(model, window, aniso)(theta_hat)


@dataclass
class RiskEstimate:
    mean: float
    ci95_halfwidth: float
    reps: int
    per_rep_losses: list[float] = field(repr=False)
    failures: int = 0

    @classmethod
    def from_losses(cls, losses: Sequence[float]) -> "RiskEstimate":
        """Summary of per-replication losses; NaN entries count as failures."""
        arr = np.asarray(losses, dtype=float)
        ok = arr[np.isfinite(arr)]
        fails = int(arr.size - ok.size)
        if ok.size == 0:
            return cls(math.nan, math.nan, 0, [], fails)
        srt = sorted(ok.tolist())
        mean = math.fsum(srt) / len(srt)
        if len(srt) > 1:
            var = math.fsum((x - mean) ** 2 for x in srt) / (len(srt) - 1)
            half = 1.96 * math.sqrt(var) / math.sqrt(len(srt))
        else:
            half = math.nan
        return cls(mean, half, len(srt), arr.tolist(), fails)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci95_halfwidth": self.ci95_halfwidth, "reps": self.reps,
                "failures": self.failures}


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


class _Replicate:
    def __init__(self, task, seed):
        self.task = task
        self.seed = seed

    def __call__(self, rep: int):
        try:
            return self.task(rep, substream(self.seed, rep))
        except (GMRFError, np.linalg.LinAlgError, FloatingPointError):
            return None


def run_replications(task: Callable[[int, np.random.Generator], Mapping[str, float]], reps: int,
                     seed: int, workers: int | None = None) -> tuple[dict[str, list[float]], int]:
    """Run ``task(rep, rng)`` for every replication on its own substream.

    ``task`` returns ``{estimator: loss}``; NaN marks a failed estimator.
    Results are merged by replication index, so the output does not
    depend on the number of workers. Returns the per-estimator losses and
    the number of replications that failed as a whole.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    run = _Replicate(task, seed)
    nw = worker_count(workers)
    if nw == 1:
        results = [run(r) for r in range(reps)]
    else:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(run, range(reps), chunksize=max(1, reps // (4 * nw))))
    keys: list[str] = []
    for res in results:
        for k in res or {}:
            if k not in keys:
                keys.append(k)
    out = {k: [float((res or {}).get(k, math.nan)) for res in results] for k in keys}
    return out, sum(res is None for res in results)


def monte_carlo_risk(simulate: Callable[[np.random.Generator], object], estimate: Callable[[object], object],
                     loss: Callable[[object], float], reps: int, seed: int,
                     workers: int | None = None) -> RiskEstimate:
    """Risk of one estimator: simulate, estimate, score, over ``reps`` substreams."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    losses, _ = run_replications(_SingleTask(simulate, estimate, loss), reps, seed, workers)
    return RiskEstimate.from_losses(losses.get("risk", [math.nan] * reps))


class _SingleTask:
    def __init__(self, simulate, estimate, loss):
        self.simulate, self.estimate, self.loss = simulate, estimate, loss

    def __call__(self, rep, rng):
        data = self.simulate(rng)
        try:
            value = self.loss(self.estimate(data))
        except (GMRFError, np.linalg.LinAlgError):
            value = math.nan
        return {"risk": value}


def oracle_and_ratio(per_model: Mapping, selected: RiskEstimate):
    """Oracle key (smallest mean risk) and the ratio of ``selected`` to it.

    A zero oracle risk gives ``inf`` (or 1 when the selected risk is zero too).
    """
    if not per_model:
        raise ValueError("no per-model risks")
    key = min(per_model, key=lambda k: per_model[k].mean)
    best = per_model[key].mean
    if best == 0:
        return key, (1.0 if selected.mean == 0 else math.inf)
    return key, selected.mean / best


RISK_CSV_COLUMNS = ("experiment", "estimator", "param", "risk_mean", "ci95", "reps", "failures")


def write_risk_csv(rows: Sequence[Mapping], path) -> None:
    """Write risk rows with 6 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RISK_CSV_COLUMNS)
        for r in rows:
            w.writerow([r["experiment"], r["estimator"], r["param"], _fmt(r["risk_mean"]),
                        _fmt(r["ci95"]), int(r["reps"]), int(r["failures"])])


def _fmt(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"
