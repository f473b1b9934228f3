"""Eigenvalues of symmetric block-circulant matrices and spectral densities.

A centrally symmetric coefficient matrix ``theta`` (wrapped convention,
``theta[0, 0] = 0``) defines the block-circulant matrix ``C(theta)``. All
such matrices share one orthogonal eigenbasis, and the eigenvalue attached
to Fourier frequency ``(i, j)`` is the cosine sum

    lambda[i, j] = sum_{k,l} theta[k, l] cos(2 pi (k i / p1 + l j / p2)),

which is the (real) 2-D DFT of ``theta``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidParameterError

IMAG_TOL = 1e-10
SYM_TOL = 1e-10


def reflect(a: np.ndarray) -> np.ndarray:
    """``a[-i, -j]`` with indices taken modulo the array shape."""
    return np.roll(a[::-1, ::-1], shift=(1, 1), axis=(0, 1))


def check_symmetric(theta: np.ndarray, tol: float = SYM_TOL) -> None:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2:
        raise InvalidParameterError(f"expected a 2-D coefficient matrix, got shape {theta.shape}")
    scale = max(1.0, float(np.abs(theta).max(initial=0.0)))
    if abs(theta[0, 0]) > tol * scale:
        raise InvalidParameterError(f"theta[0,0] must be 0, got {theta[0, 0]!r}")
    diff = np.abs(theta - reflect(theta))
    if diff.max(initial=0.0) > tol * scale:
        i, j = np.unravel_index(np.argmax(diff), diff.shape)
        raise InvalidParameterError(
            f"theta[{i},{j}]={theta[i, j]!r} differs from its reflection "
            f"theta[{-i % theta.shape[0]},{-j % theta.shape[1]}]={reflect(theta)[i, j]!r}")


def dft2_eigenvalues(theta: np.ndarray, check: bool = True) -> np.ndarray:
    """Eigenvalues of ``C(theta)`` on the ``p1 x p2`` frequency grid.

    Parameters
    ----------
    theta : (p1, p2) array
        Centrally symmetric coefficients with ``theta[0, 0] = 0``.
    check : bool
        Validate the symmetry first (raises naming the offending entry).

    Returns
    -------
    (p1, p2) real array, one eigenvalue per Fourier frequency.
    """
    theta = np.asarray(theta, dtype=float)
    if check:
        check_symmetric(theta)
    lam = np.fft.fft2(theta)
    scale = max(1.0, float(np.abs(theta).sum()))
    if np.abs(lam.imag).max(initial=0.0) > IMAG_TOL * scale:
        raise InvalidParameterError("eigenvalues have a non-negligible imaginary part")
    return lam.real.copy()


class Validity(NamedTuple):
    valid: bool
    min_gap: float  # min over frequencies of 1 - lambda
    max_gap: float  # max over frequencies of 1 - lambda


def is_valid_torus(theta: np.ndarray, sigma2: float = 1.0, rho: float | None = None,
                   min_gap: float = 0.0) -> Validity:
    """Whether ``I - C(theta)`` is positive definite (and below ``rho`` if given).

    ``min_gap`` requires ``1 - lambda > min_gap`` instead of ``> 0``.
    """
    if sigma2 <= 0:
        raise InvalidParameterError("sigma2 must be positive")
    gap = 1.0 - dft2_eigenvalues(theta)
    lo, hi = float(gap.min()), float(gap.max())
    ok = lo > min_gap
    if rho is not None:
        ok = ok and hi < rho
    return Validity(bool(ok), lo, hi)


def _as_offsets(coeffs):
    """Accept a mapping ``{(i, j): value}`` or a pair ``(offsets, values)``."""
    if isinstance(coeffs, dict):
        offs = np.array(list(coeffs.keys()), dtype=int).reshape(-1, 2)
        vals = np.array(list(coeffs.values()), dtype=float)
    else:
        offs, vals = coeffs
        offs = np.asarray(offs, dtype=int).reshape(-1, 2)
        vals = np.asarray(vals, dtype=float)
    return offs, vals


def spectral_density_plane(coeffs, omega) -> np.ndarray:
    """``1 - sum theta[i,j] cos(i w1 + j w2)`` at each frequency pair of ``omega``.

    ``coeffs`` holds finitely many nonzero coefficients of an infinite
    lattice parameter, either as ``{(i, j): value}`` or ``(offsets, values)``.
    """
    offs, vals = _as_offsets(coeffs)
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    phase = omega @ offs.T.astype(float)
    return 1.0 - np.cos(phase) @ vals


def plane_density_grid(coeffs, resolution: int = 512) -> np.ndarray:
    """Spectral density on the uniform grid ``2 pi (k, l) / resolution``."""
    offs, vals = _as_offsets(coeffs)
    if len(offs) and np.abs(offs).max() * 2 >= resolution:
        raise ValueError("grid resolution too small for the coefficient support")
    a = np.zeros((resolution, resolution))
    np.add.at(a, (offs[:, 0] % resolution, offs[:, 1] % resolution), vals)
    return 1.0 - np.fft.fft2(a).real


def lipschitz_margin(coeffs, resolution: int) -> float:
    """Upper bound on how far the density can drop between grid points."""
    offs, vals = _as_offsets(coeffs)
    # nearest grid point is at most pi/resolution away along each axis
    return float(np.sum(np.abs(vals) * np.abs(offs).sum(axis=1)) * np.pi / resolution)


def is_valid_plane(coeffs, resolution: int = 512) -> Validity:
    """Grid check of positivity of the plane spectral density with a safety margin."""
    dens = plane_density_grid(coeffs, resolution)
    lo = float(dens.min()) - lipschitz_margin(coeffs, resolution)
    return Validity(lo > 0.0, lo, float(dens.max()))
