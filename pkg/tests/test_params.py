import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmrfsel.errors import InvalidParameterError
from gmrfsel.lattice import LatticeSpec
from gmrfsel.params import (ConstraintSpec, ThetaField, build_circulant, covariance_from_theta,
                            project_symmetry, theta_from_covariance)

from conftest import dense_C, random_theta


@given(p1=st.integers(2, 8), p2=st.integers(2, 8), seed=st.integers(0, 2 ** 32 - 1),
       sigma2=st.floats(0.1, 10.0))
def test_covariance_matches_dense_inverse(p1, p2, seed, sigma2):
    lat = LatticeSpec(p1, p2)
    theta = random_theta(np.random.default_rng(seed), lat, sigma2=sigma2)
    cov = covariance_from_theta(theta)
    ref = sigma2 * np.linalg.inv(np.eye(lat.size) - dense_C(theta))
    assert np.allclose(cov.dense(), ref, rtol=1e-8, atol=1e-12 * sigma2)
    assert cov.phi_max == pytest.approx(np.linalg.eigvalsh(ref).max(), rel=1e-8)


def test_build_circulant_matches_entrywise(rng):
    theta = random_theta(rng, LatticeSpec(5, 7))
    assert np.array_equal(build_circulant(theta), dense_C(theta))


def test_theta_round_trip_through_covariance(rng):
    lat = LatticeSpec(6, 6)
    theta = random_theta(rng, lat, sigma2=2.5)
    back = theta_from_covariance(covariance_from_theta(theta).dense(), lat)
    assert back.sigma2 == pytest.approx(2.5, rel=1e-10)
    assert np.allclose(back.coeffs, theta.coeffs, atol=1e-10)


def test_invalid_theta_raises_with_gap():
    lat = LatticeSpec(6, 6)
    theta = ThetaField.from_offsets(lat, {(1, 0): 0.3, (0, 1): 0.3})
    with pytest.raises(InvalidParameterError) as exc:
        covariance_from_theta(theta)
    assert exc.value.min_gap == pytest.approx(1 - 1.2)


def test_asymmetric_coeffs_rejected():
    c = np.zeros((4, 4))
    c[0, 1] = 0.1
    with pytest.raises(InvalidParameterError):
        ThetaField(LatticeSpec(4, 4), c)


def test_json_round_trip(rng):
    theta = random_theta(rng, LatticeSpec(7, 5), sigma2=0.7)
    back = ThetaField.from_json(theta.to_json())
    assert np.array_equal(back.coeffs, theta.coeffs)
    assert back.sigma2 == theta.sigma2


def test_constraint_rho_bounds():
    assert ConstraintSpec(rho=2).rho == 2
    with pytest.raises(ValueError):
        ConstraintSpec(rho=1.5)


@given(n=st.integers(3, 8), seed=st.integers(0, 2 ** 32 - 1), iso=st.booleans())
def test_projection_idempotent_and_symmetric(n, seed, iso):
    a = np.random.default_rng(seed).normal(size=(n, n))
    p = project_symmetry(a, iso=iso)
    assert np.allclose(project_symmetry(p, iso=iso), p)
    ThetaField(LatticeSpec(n, n), p)  # symmetry check passes
    if iso:
        assert np.allclose(p, p.T)
        assert np.allclose(p, np.roll(p[::-1, :], 1, axis=0))
