"""The parameter ``theta`` with its conditional variance, and covariance algebra.

On a torus the covariance of the field is ``Sigma = sigma2 (I - C(theta))^{-1}``;
every matrix involved is block circulant, so all operations go through
the eigenvalue grid of :mod:`gmrfsel.spectral`. Dense constructions are
kept for small lattices as test oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .errors import InvalidParameterError
from .lattice import LatticeSpec, Offset
from .spectral import check_symmetric, dft2_eigenvalues, reflect

DENSE_LIMIT = 4096


def project_symmetry(raw: np.ndarray, iso: bool = False, transpose: bool | None = None) -> np.ndarray:
    """Orthogonal projection of a coefficient matrix onto the symmetric subspace.

    Averages ``raw`` over its orbit under central symmetry (``iso=False``)
    or under axis reflections and, when ``transpose`` (default: square
    input), transposition. ``[0, 0]`` is zeroed. The map is idempotent.
    """
    a = np.array(raw, dtype=float)
    if not iso:
        out = 0.5 * (a + reflect(a))
    else:
        flip_i = lambda b: np.roll(b[::-1, :], 1, axis=0)
        flip_j = lambda b: np.roll(b[:, ::-1], 1, axis=1)
        images = [a, flip_i(a), flip_j(a), flip_i(flip_j(a))]
        if transpose is None:
            transpose = a.shape[0] == a.shape[1]
        if transpose:
            images += [b.T for b in images]
        out = sum(images) / len(images)
    out[0, 0] = 0.0
    return out


@dataclass(frozen=True)
class ConstraintSpec:
    """Eigenvalue constraints on ``I - C(theta)``.

    ``rho`` caps the largest eigenvalue (at least 2, so that the constrained
    set still contains a neighborhood of zero); ``min_gap`` is the
    margin required on the smallest one when strict validity is checked.
    """

    rho: float | None = None
    min_gap: float = 1e-8

    def __post_init__(self):
        if self.rho is not None and not self.rho >= 2:
            raise ValueError(f"rho must be at least 2, got {self.rho}")
        if self.min_gap < 0:
            raise ValueError("min_gap must be nonnegative")


@dataclass(frozen=True, eq=False)
class ThetaField:
    """Coefficients ``theta`` (wrapped ``p1 x p2`` array) and conditional variance.

    For a non-toroidal lattice the array stores a finitely supported
    parameter of the infinite lattice; its support must stay within half
    the window so that wrapped indices are unambiguous.
    """

    lattice: LatticeSpec
    coeffs: np.ndarray
    sigma2: float = 1.0
    iso: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != self.lattice.shape:
            raise InvalidParameterError(
                f"coefficient shape {c.shape} does not match lattice {self.lattice.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidParameterError("coefficients must be finite")
        check_symmetric(c, tol=1e-8)
        if not self.sigma2 > 0:
            raise InvalidParameterError(f"sigma2 must be positive, got {self.sigma2}")
        c = 0.5 * (c + reflect(c))
        c[0, 0] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lattice: LatticeSpec, sigma2: float = 1.0, iso: bool = False):
        return cls(lattice, np.zeros(lattice.shape), sigma2, iso)

    @classmethod
    def from_offsets(cls, lattice: LatticeSpec, values: Mapping[Offset, float],
                     sigma2: float = 1.0, iso: bool = False, symmetrize: bool = True):
        """Build from ``{(i, j): value}``; the reflection ``(-i, -j)`` is filled in."""
        c = np.zeros(lattice.shape)
        for (i, j), v in values.items():
            if not lattice.toroidal and (2 * abs(i) >= lattice.p1 or 2 * abs(j) >= lattice.p2):
                raise InvalidParameterError(f"offset {(i, j)} does not fit in the window")
            c[i % lattice.p1, j % lattice.p2] = v
            if symmetrize:
                c[-i % lattice.p1, -j % lattice.p2] = v
        return cls(lattice, c, sigma2, iso)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """``lambda[i, j](theta)``; only meaningful on a torus."""
        return dft2_eigenvalues(self.coeffs, check=False)

    def support(self) -> dict[Offset, float]:
        """Nonzero coefficients keyed by signed offset."""
        out = {}
        for i, j in np.argwhere(self.coeffs != 0):
            out[self.lattice.reduce((int(i), int(j))) if self.lattice.toroidal
                else (_signed(i, self.lattice.p1), _signed(j, self.lattice.p2))] = float(self.coeffs[i, j])
        return out

    def embed(self, lattice: LatticeSpec) -> "ThetaField":
        """The same finitely supported parameter on another lattice."""
        return ThetaField.from_offsets(lattice, self.support(), self.sigma2, self.iso)

    def with_sigma2(self, sigma2: float) -> "ThetaField":
        return ThetaField(self.lattice, self.coeffs, sigma2, self.iso)

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.coeffs).sum())

    def to_dict(self) -> dict:
        return {
            "p1": self.lattice.p1,
            "p2": self.lattice.p2,
            "toroidal": self.lattice.toroidal,
            "sigma2": self.sigma2,
            "iso": self.iso,
            "nonzero": [{"i": i, "j": j, "value": v} for (i, j), v in sorted(self.support().items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ThetaField":
        lat = LatticeSpec(d["p1"], d["p2"], d.get("toroidal", True))
        vals = {(e["i"], e["j"]): e["value"] for e in d["nonzero"]}
        return cls.from_offsets(lat, vals, d["sigma2"], d["iso"])

    @classmethod
    def from_json(cls, text: str) -> "ThetaField":
        return cls.from_dict(json.loads(text))


def _signed(i, p):
    i = int(i)
    return i if i <= p // 2 else i - p


def build_circulant(theta: ThetaField) -> np.ndarray:
    """Dense ``C(theta)``, row ``i1*p2 + j1``, column ``i2*p2 + j2`` (0-based).

    Oracle-scale only: refuses lattices with more than 4096 nodes.
    """
    lat = theta.lattice
    if not lat.toroidal:
        raise ValueError("C(theta) is defined on a torus")
    if lat.size > DENSE_LIMIT:
        raise ValueError(f"dense circulant limited to {DENSE_LIMIT} nodes, got {lat.size}")
    i = np.repeat(np.arange(lat.p1), lat.p2)
    j = np.tile(np.arange(lat.p2), lat.p1)
    di = (i[None, :] - i[:, None]) % lat.p1
    dj = (j[None, :] - j[:, None]) % lat.p2
    return theta.coeffs[di, dj]


@dataclass(frozen=True, eq=False)
class SpectralCovariance:
    """``Sigma`` represented by its eigenvalues on the Fourier grid."""

    lattice: LatticeSpec
    eigenvalues: np.ndarray  # sigma2 / (1 - lambda)
    precision_gap: np.ndarray = field(repr=False)  # 1 - lambda

    @property
    def phi_max(self) -> float:
        return float(self.eigenvalues.max())

    @property
    def phi_min(self) -> float:
        return float(self.eigenvalues.min())

    def autocovariance(self) -> np.ndarray:
        """``Cov(X[0,0], X[i,j])`` in the wrapped index convention."""
        return np.fft.ifft2(self.eigenvalues).real

    def dense(self) -> np.ndarray:
        lat = self.lattice
        if lat.size > DENSE_LIMIT:
            raise ValueError(f"dense covariance limited to {DENSE_LIMIT} nodes")
        acov = self.autocovariance()
        i = np.repeat(np.arange(lat.p1), lat.p2)
        j = np.tile(np.arange(lat.p2), lat.p1)
        return acov[(i[None, :] - i[:, None]) % lat.p1, (j[None, :] - j[:, None]) % lat.p2]


def covariance_from_theta(theta: ThetaField, min_gap: float = 0.0) -> SpectralCovariance:
    """Spectral representation of ``sigma2 (I - C(theta))^{-1}`` on a torus.

    Raises :class:`InvalidParameterError` (carrying ``min(1 - lambda)``) when
    ``I - C(theta)`` is not positive definite.
    """
    if not theta.lattice.toroidal:
        raise ValueError("plane covariances come from correlation models, not theta")
    gap = 1.0 - theta.eigenvalues
    lo = float(gap.min())
    if not lo > min_gap:
        raise InvalidParameterError(f"I - C(theta) is not positive definite (min 1-lambda = {lo:.3g})",
                                    min_gap=lo)
    return SpectralCovariance(theta.lattice, theta.sigma2 / gap, gap)


def theta_from_covariance(sigma: np.ndarray, lattice: LatticeSpec) -> ThetaField:
    """Recover ``theta`` and ``sigma2`` from a dense stationary covariance (oracle use)."""
    q = np.linalg.inv(sigma)
    row = q[0].reshape(lattice.shape)
    sigma2 = 1.0 / row[0, 0]
    coeffs = -row * sigma2
    coeffs[0, 0] = 0.0
    return ThetaField(lattice, coeffs, sigma2)
