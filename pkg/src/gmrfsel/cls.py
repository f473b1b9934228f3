"""Conditional least-squares (CLS) criterion and per-model constrained estimation.

On a torus the criterion is evaluated through the data periodogram,

    gamma(theta) = 1/(n p1^2 p2^2) sum_{i,j} (1 - lambda[i,j](theta))^2 sum_k |F(X_k)[i,j]|^2,

which makes it a quadratic form in the class coordinates of a model.
Estimation minimizes that quadratic over the closure of the valid set,
whose constraints ``lambda[i,j] <= 1`` (and ``1 - lambda[i,j] <= rho``) are
linear in the coordinates.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySublatticeError, RankError
from .lattice import LatticeSpec, NeighborhoodModel, Sublattice, sublattice_for_model
from .params import ConstraintSpec, ThetaField
from .qp import solve_qp
from .simulate import FieldObservations
from .spectral import dft2_eigenvalues

QP_TOL = 1e-8
QP_MAX_ITER = 500


def _coeffs(theta, lattice: LatticeSpec) -> np.ndarray:
    if isinstance(theta, ThetaField):
        return theta.coeffs
    c = np.asarray(theta, dtype=float)
    if c.shape != lattice.shape:
        raise ValueError(f"coefficient shape {c.shape} does not match data lattice {lattice.shape}")
    return c


def cls_direct(theta, data: FieldObservations) -> float:
    """CLS criterion from its definition: mean squared residual of the
    simultaneous conditional regressions, indices taken modulo the torus."""
    lat = data.lattice
    c = _coeffs(theta, lat)
    resid = data.data.copy()
    for i, j in np.argwhere(c != 0):
        resid -= c[i, j] * np.roll(data.data, shift=(-i, -j), axis=(1, 2))
    return float(np.mean(resid ** 2))


class Periodogram:
    """Per-frequency weights ``sum_k |F(X_k)|^2 / (n p1^2 p2^2)``, computed once per dataset."""

    def __init__(self, data: FieldObservations):
        if not data.lattice.toroidal:
            raise ValueError("the periodogram form of the criterion needs a toroidal lattice")
        self.lattice = data.lattice
        self.n = data.n
        f = np.fft.fft2(data.data, axes=(-2, -1))
        p = np.sum(f.real ** 2 + f.imag ** 2, axis=0)
        self.power = p  # sum_k |lambda(X_k)|^2
        self.weights = p / (data.n * self.lattice.size ** 2)
        self.second_moment = float(np.sum(data.data ** 2) / (data.n * self.lattice.size))

    def criterion(self, theta) -> float:
        lam = dft2_eigenvalues(_coeffs(theta, self.lattice), check=False)
        return float(np.sum(self.weights * (1.0 - lam) ** 2))


def cls_fft(theta, data) -> float:
    """CLS criterion through the FFT identity; ``data`` may be a cached :class:`Periodogram`."""
    cache = data if isinstance(data, Periodogram) else Periodogram(data)
    return cache.criterion(theta)


@dataclass
class Quadratic:
    """``gamma(beta) = c0 - 2 b'beta + beta'A beta`` in class coordinates."""

    A: np.ndarray
    b: np.ndarray
    c0: float

    def value(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        return float(self.c0 - 2.0 * self.b @ beta + beta @ self.A @ beta)

    def gradient(self, beta) -> np.ndarray:
        return 2.0 * (self.A @ np.asarray(beta, dtype=float) - self.b)


def class_basis(model: NeighborhoodModel, lattice: LatticeSpec, iso: bool) -> np.ndarray:
    """Indicator arrays (``d x p1 x p2``, wrapped convention) of the model's classes."""
    classes = model.classes(iso)
    B = np.zeros((len(classes),) + lattice.shape)
    for k, cl in enumerate(classes):
        for (i, j) in cl:
            B[k, i % lattice.p1, j % lattice.p2] = 1.0
    return B


def coords_to_theta(beta, basis: np.ndarray) -> np.ndarray:
    if len(beta) == 0:
        return np.zeros(basis.shape[1:])
    return np.tensordot(np.asarray(beta, dtype=float), basis, axes=1)


def torus_quadratic(model: NeighborhoodModel, cache: Periodogram, iso: bool):
    """Quadratic form of the criterion and the eigenvalue basis ``(d, p1*p2)``."""
    B = class_basis(model, cache.lattice, iso)
    eig = np.fft.fft2(B, axes=(-2, -1)).real.reshape(len(B), cache.lattice.size)
    w = cache.weights.ravel()
    A = (eig * w) @ eig.T
    b = eig @ w
    return Quadratic(A, b, float(w.sum())), B, eig


@dataclass(eq=False)
class FitResult:
    theta: ThetaField
    criterion: float
    model: NeighborhoodModel
    iso: bool
    coords: np.ndarray
    on_boundary: bool = False
    kkt_residual: float = 0.0
    sublattice: Sublattice | None = field(default=None, repr=False)
    non_unique: bool = False

    @property
    def dim(self) -> int:
        return self.model.dim(self.iso)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.to_dict(),
            "criterion": self.criterion,
            "d_m": self.model.d_m,
            "d_m_iso": self.model.d_m_iso,
            "radius": self.model.radius,
            "iso": self.iso,
            "on_boundary": self.on_boundary,
            "kkt_residual": self.kkt_residual,
            "non_unique": self.non_unique,
            "sublattice_size": None if self.sublattice is None else self.sublattice.size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _dedupe_rows(G: np.ndarray) -> np.ndarray:
    return np.unique(np.round(G, 12), axis=0)


def _sigma2(crit: float) -> float:
    return crit if crit > 0 else np.finfo(float).tiny


def fit_torus(model: NeighborhoodModel, data, iso: bool = True,
              constraint: ConstraintSpec | None = None) -> FitResult:
    """CLS estimator of ``theta`` on a torus within ``model``.

    Parameters
    ----------
    model : NeighborhoodModel
    data : FieldObservations or Periodogram
    iso : bool
        Restrict to isotropic coefficients.
    constraint : ConstraintSpec, optional
        ``rho`` caps the largest eigenvalue of ``I - C(theta)``.

    Returns
    -------
    FitResult
        ``theta.sigma2`` holds the attained criterion.
    """
    cache = data if isinstance(data, Periodogram) else Periodogram(data)
    lat = cache.lattice
    rho = None if constraint is None else constraint.rho
    quad, B, eig = torus_quadratic(model, cache, iso)
    d = len(B)
    if d == 0:
        crit = cache.criterion(np.zeros(lat.shape))
        return FitResult(ThetaField(lat, np.zeros(lat.shape), _sigma2(crit), iso), crit, model, iso,
                         np.zeros(0))
    evals = np.linalg.eigvalsh(quad.A)
    if evals.min() <= 1e-12 * max(evals.max(), 1e-300):
        raise RankError(f"normal equations are singular for model with d={d} (degenerate data)")
    beta = np.linalg.solve(quad.A, quad.b)
    lam = beta @ eig
    feasible = lam.max() <= 1.0 and (rho is None or 1.0 - lam.min() <= rho)
    on_boundary = False
    resid = float(np.abs(quad.gradient(beta)).max() / (1.0 + np.abs(quad.b).max()))
    if not feasible:
        rows, rhs = [eig.T], [np.ones(eig.shape[1])]
        if rho is not None:
            rows.append(-eig.T)
            rhs.append(np.full(eig.shape[1], rho - 1.0))
        G = np.vstack(rows)
        h = np.concatenate(rhs)
        Gh = _dedupe_rows(np.column_stack([G, h]))
        res = solve_qp(2.0 * quad.A, -2.0 * quad.b, Gh[:, :-1], Gh[:, -1], np.zeros(d),
                       tol=QP_TOL, max_iter=QP_MAX_ITER)
        beta = res.x
        on_boundary = bool(res.active)
        resid = res.kkt_residual
        if not res.converged:
            warnings.warn(f"active-set solver stopped after {res.iterations} iterations", RuntimeWarning)
    coeffs = coords_to_theta(beta, B)
    crit = cache.criterion(coeffs)
    return FitResult(ThetaField(lat, coeffs, _sigma2(crit), iso), crit, model, iso, beta,
                     on_boundary, resid)


# --- non-toroidal windows -------------------------------------------------------------------

def _shifted(data: np.ndarray, offset) -> np.ndarray:
    """``out[k, s] = data[k, s + offset]`` (wrapping, harmless on the edge sublattice)."""
    return np.roll(data, shift=(-offset[0], -offset[1]), axis=(1, 2))


def _check_sublattice(model, data, sub):
    if sub.size == 0:
        raise EmptySublatticeError("empty sublattice")
    if sub.mask.shape != data.lattice.shape:
        raise ValueError("sublattice mask does not match the data lattice")
    if not data.lattice.toroidal and not sub.issubset(sublattice_for_model(model, data.lattice)):
        raise ValueError("sublattice is not contained in the edge sublattice of the model")


def cls_sublattice(theta, data: FieldObservations, model: NeighborhoodModel, sub: Sublattice) -> float:
    """CLS criterion restricted to the conditional regressions of the nodes in ``sub``.

    No wrapping is involved on a window. On toroidal data neighbors wrap,
    so the full lattice reproduces :func:`cls_direct`.
    """
    _check_sublattice(model, data, sub)
    lat = data.lattice
    c = _coeffs(theta, lat)
    if isinstance(theta, ThetaField):
        support = theta.support()
    else:
        support = {(_s(i, lat.p1), _s(j, lat.p2)): c[i, j] for i, j in np.argwhere(c != 0)}
    allowed = set(model.offsets)
    resid = data.data.copy()
    for off, v in support.items():
        if off not in allowed:
            raise ValueError(f"coefficient at {off} lies outside the model")
        resid -= v * _shifted(data.data, off)
    return float(np.mean(resid[:, sub.mask] ** 2))


def _s(i, p):
    i = int(i)
    return i if i <= p // 2 else i - p


def plane_design(model: NeighborhoodModel, data: FieldObservations, sub: Sublattice, iso: bool):
    """Responses and class regressors of the conditional regressions on ``sub``."""
    y = data.data[:, sub.mask].ravel()
    classes = model.classes(iso)
    Z = np.empty((y.size, len(classes)))
    for k, cl in enumerate(classes):
        acc = np.zeros_like(data.data)
        for off in cl:
            acc += _shifted(data.data, off)
        Z[:, k] = acc[:, sub.mask].ravel()
    return y, Z


def plane_quadratic(model, data, sub, iso) -> Quadratic:
    y, Z = plane_design(model, data, sub, iso)
    N = y.size
    return Quadratic(Z.T @ Z / N, Z.T @ y / N, float(y @ y / N))


_COSINE_CACHE: dict = {}


def _class_cosines(model: NeighborhoodModel, iso: bool, resolution: int) -> np.ndarray:
    """Distinct rows of ``sum_{o in class} cos(o . w)`` over the half grid ``w = 2 pi (k, l) / resolution``.

    Cached per model since the same collection is refit on every dataset.
    """
    classes = model.classes(iso)
    key = (tuple(tuple(sorted(c)) for c in classes), resolution)
    if key not in _COSINE_CACHE:
        out = np.empty((len(classes), resolution * (resolution // 2 + 1)))
        for k, cl in enumerate(classes):
            a = np.zeros((resolution, resolution))
            for (i, j) in cl:
                a[i % resolution, j % resolution] += 1.0
            out[k] = np.fft.rfft2(a).real.ravel()
        if len(_COSINE_CACHE) > 256:
            _COSINE_CACHE.clear()
        _COSINE_CACHE[key] = _dedupe_rows(out.T)
    return _COSINE_CACHE[key]


def _max_plane_eigenvalue(beta, model, iso, resolution) -> float:
    a = np.zeros((resolution, resolution))
    for b, cl in zip(beta, model.classes(iso)):
        for (i, j) in cl:
            a[i % resolution, j % resolution] += b
    return float(np.fft.rfft2(a).real.max())


def fit_plane(model: NeighborhoodModel, data: FieldObservations, sub: Sublattice | None = None,
              iso: bool = True, grid_resolution: int = 512) -> FitResult:
    """CLS estimator on a window using only the regressions of nodes in ``sub``.

    ``sub`` defaults to the model's own edge sublattice. The spectral
    density of the estimate is kept nonnegative on a
    ``grid_resolution``-square frequency grid. When the normal equations
    are rank deficient the minimum-norm solution is returned and the
    result is flagged ``non_unique``.
    """
    lat = data.lattice
    if sub is None:
        sub = sublattice_for_model(model, lat)
    _check_sublattice(model, data, sub)
    d = model.dim(iso)
    if d == 0:
        crit = float(np.mean(data.data[:, sub.mask] ** 2))
        return FitResult(ThetaField(lat, np.zeros(lat.shape), _sigma2(crit), iso), crit, model, iso,
                         np.zeros(0), sublattice=sub)
    if data.n * sub.size <= d:
        raise RankError(f"{data.n * sub.size} regressions cannot identify {d} parameters")
    non_unique = sub.size < model.d_m
    if non_unique:
        warnings.warn(f"sublattice has {sub.size} nodes for a model of dimension {model.d_m}; "
                      "the estimator may not be unique", RuntimeWarning)
    quad = plane_quadratic(model, data, sub, iso)
    evals = np.linalg.eigvalsh(quad.A)
    if evals.min() <= 1e-12 * max(evals.max(), 1e-300):
        non_unique = True
        beta = np.linalg.lstsq(quad.A, quad.b, rcond=None)[0]
    else:
        beta = np.linalg.solve(quad.A, quad.b)
    on_boundary = False
    resid = float(np.abs(quad.gradient(beta)).max() / (1.0 + np.abs(quad.b).max()))
    if _max_plane_eigenvalue(beta, model, iso, grid_resolution) > 1.0:
        G = _class_cosines(model, iso, grid_resolution)
        res = solve_qp(2.0 * quad.A, -2.0 * quad.b, G, np.ones(len(G)), np.zeros(d),
                       tol=QP_TOL, max_iter=QP_MAX_ITER)
        beta = res.x
        on_boundary = bool(res.active)
        resid = res.kkt_residual
        if not res.converged:
            warnings.warn(f"active-set solver stopped after {res.iterations} iterations", RuntimeWarning)
    B = class_basis(model, lat, iso)
    coeffs = coords_to_theta(beta, B)
    theta = ThetaField(lat, coeffs, 1.0, iso)
    crit = cls_sublattice(theta, data, model, sub)
    return FitResult(theta.with_sigma2(_sigma2(crit)), crit, model, iso, beta, on_boundary, resid,
                     sub, non_unique)
