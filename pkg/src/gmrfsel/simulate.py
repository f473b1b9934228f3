"""Exact samplers for torus GMRFs and for stationary fields observed on a window.

Random streams are Philox (counter-based) generators keyed by
``(seed, *keys)``, so replication ``k`` of a Monte Carlo study draws from
``substream(seed, k)`` regardless of scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bessel import bessel_k
from .errors import EmbeddingError, InvalidParameterError
from .lattice import LatticeSpec, _sqnorm
from .params import ThetaField, covariance_from_theta

FAMILIES = ("exponential", "circular", "spherical", "matern")
DENSE_SAMPLER_LIMIT = 2500
THETA_PHI_RADIUS2 = 17


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class CorrelationModel:
    """Parametric stationary correlation, scaled by ``variance``."""

    family: str
    range: float
    kappa: float | None = None
    variance: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.range > 0:
            raise ValueError("range must be positive")
        if self.family == "matern" and not (self.kappa is not None and self.kappa > 0):
            raise ValueError("matern requires kappa > 0")
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    def correlation(self, d) -> np.ndarray:
        """Correlation at euclidean distance(s) ``d`` (not scaled by variance)."""
        d = np.asarray(d, dtype=float)
        h = d / self.range
        if self.family == "exponential":
            return np.exp(-h)
        if self.family == "spherical":
            return np.where(h <= 1.0, 1.0 - 1.5 * h + 0.5 * h ** 3, 0.0)
        if self.family == "circular":
            hc = np.minimum(h, 1.0)
            val = 1.0 - (2.0 / math.pi) * (hc * np.sqrt(1.0 - hc * hc) + np.arcsin(hc))
            return np.where(h <= 1.0, val, 0.0)
        return _matern(h, self.kappa)

    def covariance(self, d) -> np.ndarray:
        return self.variance * self.correlation(d)

    def to_dict(self) -> dict:
        return {"family": self.family, "range": self.range, "kappa": self.kappa,
                "variance": self.variance}


def _matern(h: np.ndarray, kappa: float) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    out = np.ones(h.shape)
    pos = h > 0
    if np.any(pos):
        uh, inv = np.unique(h[pos], return_inverse=True)
        logc = (1.0 - kappa) * math.log(2.0) - math.lgamma(kappa)
        vals = np.empty(uh.shape)
        for k, x in enumerate(uh):
            if x > 700.0:
                vals[k] = 0.0
            else:
                vals[k] = math.exp(logc + kappa * math.log(x)) * bessel_k(kappa, x)
        out[pos] = np.minimum(vals[inv], 1.0)
    return out


@dataclass(frozen=True)
class AnisotropySpec:
    """Geometric anisotropy: coordinates rotated by ``rotation`` then the
    second axis shrunk by ``ratio`` (so its range is ``ratio`` times longer)."""

    ratio: float = 1.0
    rotation: float = 0.0

    def __post_init__(self):
        if not self.ratio >= 1:
            raise ValueError("anisotropy ratio must be >= 1")

    def distance(self, di, dj) -> np.ndarray:
        di = np.asarray(di, dtype=float)
        dj = np.asarray(dj, dtype=float)
        if self.ratio == 1.0 and self.rotation == 0.0:
            return np.hypot(di, dj)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = c * di - s * dj
        v = s * di + c * dj
        return np.hypot(u, v / self.ratio)

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "rotation": self.rotation}


def correlation_value(model: CorrelationModel, offset, aniso: AnisotropySpec | None = None) -> float:
    """Covariance ``Cov(X[k, l], X[0, 0])`` at ``offset = (k, l)``.

    Equals ``model.variance`` at the origin.
    """
    if aniso is None:
        d = math.hypot(float(offset[0]), float(offset[1]))
    else:
        d = float(aniso.distance(offset[0], offset[1]))
    return float(model.covariance(d))


def offset_covariance_grid(model: CorrelationModel, lattice: LatticeSpec,
                           aniso: AnisotropySpec | None = None) -> np.ndarray:
    """Covariance at every window offset, indexed ``[di + p1 - 1, dj + p2 - 1]``."""
    di = np.arange(-(lattice.p1 - 1), lattice.p1)[:, None]
    dj = np.arange(-(lattice.p2 - 1), lattice.p2)[None, :]
    d = (aniso or AnisotropySpec()).distance(di, dj)
    return model.covariance(d)


def window_covariance(model: CorrelationModel, lattice: LatticeSpec,
                      aniso: AnisotropySpec | None = None) -> np.ndarray:
    """Dense covariance of the window nodes in row-major order."""
    grid = offset_covariance_grid(model, lattice, aniso)
    i = np.repeat(np.arange(lattice.p1), lattice.p2)
    j = np.tile(np.arange(lattice.p2), lattice.p1)
    return grid[i[None, :] - i[:, None] + lattice.p1 - 1, j[None, :] - j[:, None] + lattice.p2 - 1]


@dataclass(frozen=True, eq=False)
class FieldObservations:
    """``n`` independent observations of the field on the lattice."""

    lattice: LatticeSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[1:] != self.lattice.shape:
            raise ValueError(f"data shape {data.shape} incompatible with lattice {self.lattice.shape}")
        if data.shape[0] < 1:
            raise ValueError("need at least one observation")
        if not np.all(np.isfinite(data)):
            raise ValueError("observations must be finite")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def scaled(self, c: float) -> "FieldObservations":
        return FieldObservations(self.lattice, self.data * c)


def make_theta_phi(phi: float, lattice: LatticeSpec) -> ThetaField:
    """``theta`` equal to ``phi`` on the toroidal disc of radius sqrt(17), zero elsewhere."""
    if not lattice.toroidal:
        raise ValueError("theta^phi is defined on a torus")
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    c = np.zeros(lattice.shape)
    for i in range(lattice.p1):
        for j in range(lattice.p2):
            if (i, j) != (0, 0) and _sqnorm((i, j), lattice) <= THETA_PHI_RADIUS2:
                c[i, j] = phi
    theta = ThetaField(lattice, c, 1.0, iso=True)
    if theta.eigenvalues.max() >= 1.0:
        raise InvalidParameterError(f"phi={phi} gives max eigenvalue {theta.eigenvalues.max():.4g} >= 1")
    return theta


class TorusSampler:
    """Draws from ``N(0, sigma2 (I - C(theta))^{-1})`` by spectral filtering of white noise.

    ``X = F^{-1}(sqrt(s) * F(Z))`` with ``Z`` real white noise and ``s`` the
    covariance eigenvalues: a circular convolution with a symmetric real
    kernel, whose covariance has exactly the eigenvalues ``s``.
    """

    def __init__(self, theta: ThetaField):
        self.lattice = theta.lattice
        self.sqrt_eig = np.sqrt(covariance_from_theta(theta, min_gap=0.0).eigenvalues)

    def sample(self, n: int, rng: np.random.Generator) -> FieldObservations:
        z = rng.standard_normal((n,) + self.lattice.shape)
        x = np.fft.ifft2(self.sqrt_eig * np.fft.fft2(z), axes=(-2, -1)).real
        return FieldObservations(self.lattice, x)


def sample_torus_gmrf(theta: ThetaField, n: int, seed: int) -> FieldObservations:
    """``n`` exact draws of the torus GMRF with parameter ``theta``."""
    if n < 1:
        raise ValueError("n must be positive")
    return TorusSampler(theta).sample(n, substream(seed))


class PlaneSampler:
    """Exact sampler of a stationary field on a window of Z^2.

    Dense factorization up to 2500 nodes, circulant embedding on a torus
    padded by 2 (then 4) beyond that.
    """

    def __init__(self, model: CorrelationModel, lattice: LatticeSpec,
                 aniso: AnisotropySpec | None = None, method: str | None = None):
        if lattice.toroidal:
            raise ValueError("PlaneSampler requires a non-toroidal lattice")
        self.lattice = lattice
        self.model = model
        self.aniso = aniso
        if method is None:
            method = "dense" if lattice.size <= DENSE_SAMPLER_LIMIT else "embedding"
        self.method = method
        if method == "dense":
            self.factor = _psd_factor(window_covariance(model, lattice, aniso))
        elif method == "embedding":
            for pad in (2, 4):
                eig = _embedding_spectrum(model, lattice, aniso, pad)
                if eig.min() >= -1e-8 * eig.max():
                    break
            else:
                raise EmbeddingError(f"circulant embedding has negative spectrum ({eig.min():.3g})")
            self.sqrt_eig = np.sqrt(np.clip(eig, 0.0, None))
        else:
            raise ValueError(f"unknown method {method!r}")

    def sample(self, n: int, rng: np.random.Generator) -> FieldObservations:
        p1, p2 = self.lattice.shape
        if self.method == "dense":
            z = rng.standard_normal((n, self.factor.shape[1]))
            x = (z @ self.factor.T).reshape(n, p1, p2)
        else:
            z = rng.standard_normal((n,) + self.sqrt_eig.shape)
            big = np.fft.ifft2(self.sqrt_eig * np.fft.fft2(z), axes=(-2, -1)).real
            x = big[:, :p1, :p2]
        return FieldObservations(self.lattice, x)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        if w.min() < -1e-8 * w.max():
            raise InvalidParameterError(f"window covariance is not PSD (min eigenvalue {w.min():.3g})")
        return v * np.sqrt(np.clip(w, 0.0, None))


def _embedding_spectrum(model, lattice, aniso, pad):
    m1, m2 = pad * lattice.p1, pad * lattice.p2
    k = np.arange(m1)
    l = np.arange(m2)
    k = np.where(k <= m1 // 2, k, k - m1)[:, None]
    l = np.where(l <= m2 // 2, l, l - m2)[None, :]
    c = model.covariance((aniso or AnisotropySpec()).distance(k, l))
    return np.fft.fft2(c).real


def sample_plane_window(model: CorrelationModel, lattice: LatticeSpec, n: int,
                        aniso: AnisotropySpec | None = None, seed: int = 0,
                        method: str | None = None) -> FieldObservations:
    """``n`` exact draws of the field with covariance ``model`` on the window ``lattice``."""
    return PlaneSampler(model, lattice, aniso, method).sample(n, substream(seed))
