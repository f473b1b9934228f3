import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmrfsel.errors import InvalidParameterError
from gmrfsel.lattice import LatticeSpec
from gmrfsel.params import ThetaField
from gmrfsel.simulate import make_theta_phi
from gmrfsel.spectral import (dft2_eigenvalues, is_valid_plane, is_valid_torus,
                              plane_density_grid, spectral_density_plane)

from conftest import random_theta


def naive_eigenvalues(theta):
    p1, p2 = theta.shape
    out = np.zeros((p1, p2), dtype=complex)
    for a in range(p1):
        for b in range(p2):
            for k in range(p1):
                for l in range(p2):
                    out[a, b] += theta[k, l] * np.exp(-2j * np.pi * (a * k / p1 + b * l / p2))
    return out


@given(p1=st.integers(2, 8), p2=st.integers(2, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_eigenvalues_match_naive_dft(p1, p2, seed):
    rng = np.random.default_rng(seed)
    theta = random_theta(rng, LatticeSpec(p1, p2), nnz=5)
    lam = dft2_eigenvalues(theta.coeffs)
    ref = naive_eigenvalues(theta.coeffs)
    assert np.abs(ref.imag).max() < 1e-12
    assert np.allclose(lam, ref.real, rtol=1e-8, atol=1e-12)


def test_asymmetric_theta_rejected():
    c = np.zeros((5, 5))
    c[1, 0] = 0.1
    with pytest.raises(InvalidParameterError, match=r"theta\[1,0\]"):
        dft2_eigenvalues(c)


def test_validity_of_theta_phi(torus20):
    th = make_theta_phi(0.015, torus20)
    v = is_valid_torus(th.coeffs)
    assert v.valid and v.min_gap > 0
    assert not is_valid_torus(th.coeffs, rho=1.0).valid
    with pytest.raises(InvalidParameterError):
        make_theta_phi(0.05, torus20)


def test_plane_density_grid_matches_pointwise():
    coeffs = {(1, 0): 0.2, (-1, 0): 0.2, (0, 1): 0.1, (0, -1): 0.1, (1, 1): 0.05, (-1, -1): 0.05}
    res = 16
    grid = plane_density_grid(coeffs, res)
    k, l = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    omega = 2 * np.pi * np.column_stack([k.ravel(), l.ravel()]) / res
    assert np.allclose(grid.ravel(), spectral_density_plane(coeffs, omega), atol=1e-13)


def test_plane_validity():
    ok = {(1, 0): 0.2, (-1, 0): 0.2, (0, 1): 0.2, (0, -1): 0.2}
    bad = {(1, 0): 0.3, (-1, 0): 0.3, (0, 1): 0.3, (0, -1): 0.3}
    assert is_valid_plane(ok).valid
    v = is_valid_plane(bad)
    assert not v.valid and v.min_gap < 0


def test_torus_and_plane_densities_agree_on_torus_frequencies():
    lat = LatticeSpec(12, 12)
    th = ThetaField.from_offsets(lat, {(1, 0): 0.1, (0, 2): -0.05, (1, 1): 0.07})
    p = 1.0 - th.eigenvalues
    q = plane_density_grid(th.support(), 12)
    assert np.allclose(p, q, atol=1e-13)
