"""Competing estimators: exact likelihood with AIC/BIC on tori, and the
geostatistical route (robust variogram, weighted least squares fit,
ordinary kriging of the center node) on windows.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .cls import Periodogram, class_basis, coords_to_theta
from .errors import InvalidParameterError, KrigingError
from .lattice import LatticeSpec, NeighborhoodModel
from .params import ThetaField
from .simulate import AnisotropySpec, CorrelationModel, FieldObservations

# --- likelihood on a torus -------------------------------------------------------------------

MLE_GAP = 1e-8
MLE_GTOL = 1e-6
MLE_MAX_ITER = 200


def torus_loglik(theta: ThetaField, sigma2: float | None, data) -> float:
    """Exact Gaussian log-likelihood of all replications, computed spectrally.

    ``sigma2=None`` uses ``theta.sigma2``.
    """
    cache = data if isinstance(data, Periodogram) else Periodogram(data)
    s2 = theta.sigma2 if sigma2 is None else float(sigma2)
    if not s2 > 0:
        raise InvalidParameterError("sigma2 must be positive")
    gap = 1.0 - theta.eigenvalues
    if not gap.min() > 0:
        raise InvalidParameterError("theta is not valid (max eigenvalue >= 1)", min_gap=float(gap.min()))
    N = cache.lattice.size
    n = cache.n
    quad = float(np.sum(gap * cache.power)) / N
    return float(-0.5 * n * N * math.log(2.0 * math.pi * s2) + 0.5 * n * np.sum(np.log(gap)) - 0.5 * quad / s2)


def profile_sigma2(theta: ThetaField, data) -> float:
    """Maximizer of the likelihood in ``sigma2`` at fixed ``theta``."""
    cache = data if isinstance(data, Periodogram) else Periodogram(data)
    N = cache.lattice.size
    return float(np.sum((1.0 - theta.eigenvalues) * cache.power) / (N * N * cache.n))


@dataclass(eq=False)
class LoglikResult:
    theta: ThetaField
    sigma2_hat: float
    loglik: float
    model: NeighborhoodModel
    iso: bool = True
    converged: bool = True
    iterations: int = 0
    grad_norm: float = 0.0

    def to_dict(self) -> dict:
        return {"theta": self.theta.to_dict(), "sigma2_hat": self.sigma2_hat, "loglik": self.loglik,
                "d_m": self.model.d_m, "d_m_iso": self.model.d_m_iso, "iso": self.iso,
                "converged": self.converged, "iterations": self.iterations, "grad_norm": self.grad_norm}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fit_mle(model: NeighborhoodModel, data, iso: bool = True) -> LoglikResult:
    """Maximum likelihood within ``model`` on a torus.

    Works in the natural parameters ``tau = 1/sigma2`` and
    ``eta = beta / sigma2``, where the precision eigenvalues
    ``mu = tau - eta' Lambda`` are linear and the negative log-likelihood
    is convex. Damped Newton with an exact Hessian; steps are shortened
    to keep ``mu > 1e-8 tau`` (i.e. ``max lambda < 1 - 1e-8``).
    """
    cache = data if isinstance(data, Periodogram) else Periodogram(data)
    lat = cache.lattice
    n, N = cache.n, lat.size
    B = class_basis(model, lat, iso)
    d = len(B)
    P = cache.power.ravel() / N
    if not P.sum() > 0:
        raise InvalidParameterError("data are identically zero")
    # rows: tau, then each class (mu = J' z)
    J = np.vstack([np.ones(N), -np.fft.fft2(B, axes=(-2, -1)).real.reshape(d, N)]) if d else np.ones((1, N))

    def nll(z):
        mu = z @ J
        if mu.min() <= MLE_GAP * z[0]:
            return math.inf, mu
        return float(-0.5 * n * np.sum(np.log(mu)) + 0.5 * mu @ P), mu

    z = np.zeros(d + 1)
    z[0] = n * N / P.sum()
    f, mu = nll(z)
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, MLE_MAX_ITER + 1):
        grad = J @ (0.5 * P - 0.5 * n / mu)
        # scale-free stopping rule: gradient relative to the Fisher scale n N
        gnorm = float(np.abs(grad * np.concatenate([[z[0]], np.full(d, z[0])])).max() / (n * N))
        if gnorm <= MLE_GTOL:
            converged = True
            break
        H = (J * (0.5 * n / mu ** 2)) @ J.T
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        slope = float(grad @ step)
        while t > 1e-12:
            fn, mun = nll(z + t * step)
            if fn <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        z, f, mu = z + t * step, fn, mun
    sigma2 = 1.0 / z[0]
    beta = z[1:] * sigma2
    theta = ThetaField(lat, coords_to_theta(beta, B), sigma2, iso)
    if not converged:
        warnings.warn(f"likelihood maximization did not converge (grad {gnorm:.2e})", RuntimeWarning)
    return LoglikResult(theta, sigma2, torus_loglik(theta, sigma2, cache), model, iso, converged, it, gnorm)


def aic_bic_select(data, collection: Sequence[NeighborhoodModel], iso: bool = True,
                   criterion: str = "AIC", fits: Sequence[LoglikResult] | None = None):
    """Model minimizing ``-2 L + c d`` with ``c = 2`` (AIC) or ``log(p1 p2)`` (BIC).

    Returns ``(index, LoglikResult)``.
    """
    cache = data if isinstance(data, Periodogram) else Periodogram(data)
    crit = criterion.upper()
    if crit not in ("AIC", "BIC"):
        raise ValueError(f"criterion must be AIC or BIC, got {criterion!r}")
    c = 2.0 if crit == "AIC" else math.log(cache.lattice.size)
    if fits is None:
        fits = [fit_mle(m, cache, iso) for m in collection]
    scores = [-2.0 * r.loglik + c * r.model.dim(iso) for r in fits]
    k = min(range(len(fits)), key=lambda t: (scores[t], fits[t].model.dim(iso)))
    return k, fits[k]


# --- variogram route -------------------------------------------------------------------------

HC_A, HC_B = 0.457, 0.494
N_STARTS = 5
REWEIGHT_ROUNDS = 20
REWEIGHT_TOL = 1e-6
OPT_MAXFUN = 2000
# tight enough that successive reweighting rounds can settle below REWEIGHT_TOL
_INNER_OPTS = {"maxfun": OPT_MAXFUN, "ftol": 1e-15, "gtol": 1e-10}


@dataclass
class VariogramBins:
    """Binned robust semivariances: mean lag, semivariance and pair count per bin."""

    lag: np.ndarray
    gamma: np.ndarray
    count: np.ndarray

    def __len__(self):
        return len(self.lag)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lag", "semivariance", "pairs"])
        for h, g, c in zip(self.lag, self.gamma, self.count):
            w.writerow([f"{h:.6g}", f"{g:.6g}", int(c)])
        return buf.getvalue()


def _half_plane_offsets(p1: int, p2: int, max_lag: float):
    out = []
    for di in range(0, p1):
        for dj in range(-(p2 - 1), p2):
            if (di == 0 and dj <= 0) or di * di + dj * dj > max_lag * max_lag + 1e-9:
                continue
            out.append((di, dj))
    return out


def _binned_variogram(data: FieldObservations, max_lag: float, n_bins: int,
                      aniso: AnisotropySpec | None = None, warn: bool = True) -> VariogramBins:
    lat = data.lattice
    edges = np.linspace(0.0, max_lag, n_bins + 1)
    sroot = np.zeros(n_bins)
    count = np.zeros(n_bins)
    dist = np.zeros(n_bins)
    X = data.data
    reach = max_lag * (1.0 if aniso is None else aniso.ratio)
    for di, dj in _half_plane_offsets(lat.p1, lat.p2, reach):
        h = math.hypot(di, dj) if aniso is None else float(aniso.distance(di, dj))
        if h > max_lag + 1e-9:
            continue
        b = min(int(np.searchsorted(edges, h, side="left")) - 1, n_bins - 1)
        if dj >= 0:
            diff = X[:, di:, dj:] - X[:, : lat.p1 - di, : lat.p2 - dj]
        else:
            diff = X[:, di:, : lat.p2 + dj] - X[:, : lat.p1 - di, -dj:]
        if diff.size == 0:
            continue
        sroot[b] += np.sqrt(np.abs(diff)).sum()
        count[b] += diff.size
        dist[b] += h * diff.size
    keep = count > 0
    if warn and not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} empty variogram bins", RuntimeWarning)
    c = count[keep]
    gamma = 0.5 * (sroot[keep] / c) ** 4 / (HC_A + HC_B / c)
    return VariogramBins(dist[keep] / c, gamma, c)


def empirical_variogram(data: FieldObservations, max_lag: float | None = None,
                        n_bins: int | None = None, aniso: AnisotropySpec | None = None) -> VariogramBins:
    """Robust (Hawkes-Cressie modulus) semivariogram pooled over replications.

    Bins split ``(0, max_lag]`` into ``n_bins`` equal intervals of euclidean
    lag (measured in deformed coordinates when ``aniso`` is given);
    defaults are ``max_lag = min(p1, p2) / 2`` and unit-width bins.
    """
    lat = data.lattice
    if max_lag is None:
        max_lag = min(lat.p1, lat.p2) / 2.0
    if n_bins is None:
        n_bins = max(3, int(round(max_lag)))
    if n_bins < 3:
        raise ValueError("need at least 3 bins")
    return _binned_variogram(data, max_lag, n_bins, aniso, warn=aniso is None)


@dataclass
class VariogramFit:
    family: str
    range_hat: float
    variance_hat: float
    kappa_hat: float | None
    bins: VariogramBins = field(repr=False)
    objective: float = math.nan
    rounds: int = 0
    converged: bool = True

    @property
    def model(self) -> CorrelationModel:
        return CorrelationModel(self.family, self.range_hat, self.kappa_hat, self.variance_hat)

    def semivariance(self, h) -> np.ndarray:
        m = self.model
        return m.variance * (1.0 - m.correlation(h))

    def to_dict(self) -> dict:
        return {"family": self.family, "range_hat": self.range_hat, "variance_hat": self.variance_hat,
                "kappa_hat": self.kappa_hat, "objective": self.objective, "rounds": self.rounds,
                "converged": self.converged,
                "bins": [{"lag": float(h), "semivariance": float(g), "pairs": int(c)}
                         for h, g, c in zip(self.bins.lag, self.bins.gamma, self.bins.count)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _unpack(x, family, fix_kappa):
    rng, var = math.exp(x[0]), math.exp(x[1])
    if family != "matern":
        return rng, var, None
    kappa = fix_kappa if fix_kappa is not None else math.exp(x[2])
    return rng, var, kappa


def _semivar(x, family, fix_kappa, h):
    rng, var, kappa = _unpack(x, family, fix_kappa)
    return var * (1.0 - CorrelationModel(family, rng, kappa, var).correlation(h))


def fit_variogram_wls(bins: VariogramBins, family: str, fix_kappa: float | None = None,
                      seed: int = 0) -> VariogramFit:
    """Cressie's weighted least squares fit of a semivariogram model.

    The ratio objective ``sum N_h (gamma_hat / gamma_model - 1)^2`` is
    minimized first (bounded L-BFGS-B in log parameters, five starts);
    reweighting rounds then minimize ``sum w_h (gamma_hat - gamma_model)^2``
    with ``w_h = N_h / gamma_model(previous)^2`` until the parameters move
    by less than 1e-6.
    """
    if len(bins) < 3:
        raise ValueError("need at least 3 nonempty bins")
    h, g = bins.lag, bins.gamma
    nh = bins.count / bins.count.sum()  # normalized weights keep optimizer tolerances scale-free
    gmax = max(float(g.max()), 1e-12)
    hmax = float(h.max())
    lb = [math.log(1e-3), math.log(1e-6 * gmax)]
    ub = [math.log(50.0 * hmax), math.log(100.0 * gmax)]
    est_kappa = family == "matern" and fix_kappa is None
    if est_kappa:
        lb.append(math.log(0.01))
        ub.append(math.log(20.0))
    bounds = list(zip(lb, ub))

    def ratio_obj(x):
        gm = _semivar(x, family, fix_kappa, h)
        if np.any(gm <= 0):
            return 1e300
        return float(np.sum(nh * (g / gm - 1.0) ** 2))

    rng = np.random.default_rng(seed)
    starts = [[math.log(hmax / 3.0), math.log(gmax)] + ([math.log(0.5)] if est_kappa else [])]
    # random starts away from the flat tiny-range corner
    box = [(math.log(0.5), math.log(2.0 * hmax)), (math.log(0.25 * gmax), math.log(4.0 * gmax))]
    if est_kappa:
        box.append((math.log(0.1), math.log(5.0)))
    while len(starts) < N_STARTS:
        starts.append([rng.uniform(a, b) for a, b in box])
    best = None
    for x0 in starts:
        try:
            r = minimize(ratio_obj, np.clip(x0, lb, ub), method="L-BFGS-B", bounds=bounds,
                         options=_INNER_OPTS)
        except (ValueError, FloatingPointError, OverflowError):
            continue
        if np.isfinite(r.fun) and (best is None or r.fun < best.fun):
            best = r
    if best is None:
        raise RuntimeError("variogram fit failed from every start")
    x = best.x
    converged = False
    rounds = 0
    for rounds in range(1, REWEIGHT_ROUNDS + 1):
        w = nh / np.maximum(_semivar(x, family, fix_kappa, h), 1e-300) ** 2
        # relative to sum w g^2 so the inner tolerance does not depend on the sill
        w = w / np.sum(w * g ** 2)

        def wls(y, w=w):
            return float(np.sum(w * (g - _semivar(y, family, fix_kappa, h)) ** 2))

        r = minimize(wls, x, method="L-BFGS-B", bounds=bounds, options=_INNER_OPTS)
        moved = float(np.abs(r.x - x).max())
        x = r.x
        if moved < REWEIGHT_TOL:
            converged = True
            break
    rng_hat, var_hat, kappa_hat = _unpack(x, family, fix_kappa)
    return VariogramFit(family, rng_hat, var_hat, kappa_hat, bins, ratio_obj(x) * float(bins.count.sum()),
                        rounds, converged)


def default_kriging_window(family: str, kappa: float | None) -> int:
    """11x11, shrunk to 7x7 / 3x3 for very smooth Matern fields."""
    if family == "matern" and kappa is not None:
        if kappa >= 4:
            return 3
        if kappa >= 2:
            return 7
    return 11


KRIGING_COND_LIMIT = 1e13


def kriging_weights(model: CorrelationModel, window: int, aniso: AnisotropySpec | None = None) -> np.ndarray:
    """Ordinary-kriging weights of the ``window x window`` neighbors of the center (center entry 0)."""
    if window < 3 or window % 2 == 0:
        raise ValueError("kriging window must be an odd integer >= 3")
    r = window // 2
    ii, jj = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    keep = ~((ii == 0) & (jj == 0))
    oi, oj = ii[keep], jj[keep]
    dist = (aniso or AnisotropySpec()).distance
    S = model.covariance(dist(oi[:, None] - oi[None, :], oj[:, None] - oj[None, :]))
    c0 = model.covariance(dist(oi, oj))
    k = len(oi)
    K = np.ones((k + 1, k + 1))
    K[:k, :k] = S
    K[k, k] = 0.0
    rhs = np.append(c0, 1.0)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > KRIGING_COND_LIMIT:
        raise KrigingError(f"kriging system is numerically singular (cond {cond:.2e}) for a "
                           f"{window}x{window} window; use a smaller window")
    sol = np.linalg.solve(K, rhs)
    w = np.zeros((window, window))
    w[keep] = sol[:k]
    return w


def kriging_theta(fit, window: int | None = None, aniso: AnisotropySpec | None = None) -> ThetaField:
    """``theta^V``: kriging weights of the center node given its window.

    ``fit`` is a :class:`VariogramFit` or a :class:`CorrelationModel`. The
    result lives on a ``window x window`` non-toroidal lattice.
    """
    model = fit.model if isinstance(fit, VariogramFit) else fit
    if window is None:
        window = default_kriging_window(model.family, model.kappa)
    w = kriging_weights(model, window, aniso)
    r = window // 2
    lat = LatticeSpec(window, window, toroidal=False)
    vals = {(i - r, j - r): float(w[i, j]) for i in range(window) for j in range(window) if w[i, j] != 0}
    # weights are centrally symmetric up to rounding; average the pair
    sym = {o: 0.5 * (v + vals.get((-o[0], -o[1]), 0.0)) for o, v in vals.items()}
    return ThetaField.from_offsets(lat, sym, model.variance, iso=False)


def variogram_estimator(data: FieldObservations, family: str, fix_kappa: float | None = None,
                        window: int | None = None, aniso: AnisotropySpec | None = None,
                        seed: int = 0):
    """Full geostatistical pipeline; returns ``(theta^V, VariogramFit)``.

    With known anisotropy, lags are measured in the deformed coordinates.
    """
    bins = empirical_variogram(data, aniso=aniso)
    vf = fit_variogram_wls(bins, family, fix_kappa, seed)
    kappa = vf.kappa_hat
    if window is None:
        window = default_kriging_window(family, kappa)
    return kriging_theta(vf, window, aniso), vf
