import warnings
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmrfsel.cls import Periodogram, fit_torus
from gmrfsel.errors import NoJumpError
from gmrfsel.lattice import LatticeSpec, build_model_collection
from gmrfsel.select import (find_N_min, penalized_select, selection_path, slope_select_plane,
                            slope_select_torus)
from gmrfsel.simulate import (CorrelationModel, make_theta_phi, sample_plane_window, sample_torus_gmrf)


@dataclass
class _Model:
    d: int

    def dim(self, iso):
        return self.d


@dataclass
class _Fit:
    """Stand-in carrying only what selection needs."""
    model: _Model
    criterion: float
    iso: bool = True

    @property
    def dim(self):
        return self.model.d


def fake_fits(dims, crits):
    return [_Fit(_Model(d), c) for d, c in zip(dims, crits)]


def grid_oracle(fits, norm, N):
    return penalized_select(fits, [N * f.dim / norm for f in fits])


@given(seed=st.integers(0, 2 ** 32 - 1), k=st.integers(2, 12))
def test_path_matches_grid_oracle(seed, k):
    rng = np.random.default_rng(seed)
    dims = sorted(rng.choice(40, size=k, replace=False).tolist())
    crits = np.sort(rng.uniform(0.5, 2.0, size=k))[::-1].tolist()
    fits = fake_fits(dims, crits)
    norm = float(rng.uniform(10, 500))
    path = selection_path(fits, norm)
    bps = [N for N, _ in path.breakpoints]
    top = 2 * max(bps) + 1.0
    for N in np.linspace(0, top, 400):
        if min(abs(N - b) for b in bps) < 1e-9 * (1 + top):
            continue
        assert path.dim_at(N) == fits[grid_oracle(fits, norm, N)].dim


@given(seed=st.integers(0, 2 ** 32 - 1), shift=st.floats(-5, 5), scale=st.floats(0.01, 100))
def test_path_affine_equivariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    dims = list(range(0, 20, 2))
    crits = np.sort(rng.uniform(1, 2, size=len(dims)))[::-1]
    base = selection_path(fake_fits(dims, crits), 100.0)
    moved = selection_path(fake_fits(dims, scale * crits + shift), 100.0)
    assert [k for _, k in moved.breakpoints] == [k for _, k in base.breakpoints]
    for (a, _), (b, _) in zip(base.breakpoints, moved.breakpoints):
        assert b == pytest.approx(scale * a, rel=1e-9, abs=1e-12)


def test_hand_computed_path():
    fits = fake_fits([0, 1, 2, 4], [1.0, 0.5, 0.4, 0.1])
    path = selection_path(fits, 1.0)
    # hull vertices 0, 1, 3: model 2 lies above the chord from 1 to 3 (slope -0.4/3)
    assert [k for _, k in path.breakpoints] == [3, 1, 0]
    assert [N for N, _ in path.breakpoints] == pytest.approx([0.0, 0.4 / 3, 0.5])
    assert path.jumps() == [(pytest.approx(0.4 / 3), 3), (pytest.approx(0.5), 1)]
    assert find_N_min(path) == (pytest.approx(0.4 / 3), 3)


def test_jump_ties_take_largest_N():
    fits = fake_fits([0, 2, 4], [1.0, 0.6, 0.3])
    N, jump = find_N_min(selection_path(fits, 1.0))
    assert jump == 2 and N == pytest.approx(0.2)


def test_flat_path():
    fits = fake_fits([0, 3], [1.0, 1.0])
    path = selection_path(fits, 1.0)
    with pytest.raises(NoJumpError):
        find_N_min(path)


def test_penalized_select_ties_to_smaller_dim():
    fits = fake_fits([3, 1], [1.0, 1.0])
    assert penalized_select(fits, [0.0, 0.0]) == 1
    with pytest.raises(ValueError):
        penalized_select(fits, [0.0])


def test_torus_report_consistency(torus20):
    data = sample_torus_gmrf(make_theta_phi(0.015, torus20), 1, seed=2)
    ms = build_model_collection(torus20, 21)
    rep = slope_select_torus(data, ms)
    assert rep.jump_size >= 1
    assert rep.selected == rep.path.model_at(2 * rep.N_min_hat)
    assert rep.final_fit is rep.fits[rep.selected]
    assert rep.path.dim_at(0.5 * rep.N_min_hat) > rep.path.dim_at(2 * rep.N_min_hat)
    d = rep.to_dict()
    assert d["selected"] == rep.selected
    assert d["selected_dim"] == rep.selected_model.d_m_iso


def test_torus_selection_scale_invariant(torus20):
    data = sample_torus_gmrf(make_theta_phi(0.015, torus20), 1, seed=5)
    ms = build_model_collection(torus20, 15)
    a = slope_select_torus(data, ms)
    b = slope_select_torus(data.scaled(3.0), ms)
    assert a.selected == b.selected
    assert b.N_min_hat == pytest.approx(9.0 * a.N_min_hat, rel=1e-9)


def test_flat_torus_falls_back_to_smallest():
    lat = LatticeSpec(6, 6)
    data = sample_torus_gmrf(make_theta_phi(0.0, lat), 1, seed=0)
    ms = build_model_collection(lat, 1)
    cache = Periodogram(data)
    fits = [fit_torus(ms[0], cache), fit_torus(ms[0], cache)]
    with pytest.warns(RuntimeWarning, match="flat"):
        rep = slope_select_torus(cache, ms, fits=fits)
    assert rep.flat and rep.selected_model.d_m_iso == 0


def test_plane_report():
    lat = LatticeSpec(20, 20, toroidal=False)
    data = sample_plane_window(CorrelationModel("exponential", 3.0), lat, 1, seed=1)
    ms = build_model_collection(lat, 18)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = slope_select_plane(data, ms)
    assert rep.common_sublattice.size == (20 - 2 * ms[-1].edge_extent[0]) ** 2
    assert rep.final_fit.model is ms[rep.selected]
    assert rep.final_fit.sublattice.size >= rep.common_sublattice.size
    assert all(f.sublattice.size == rep.common_sublattice.size for f in rep.fits)
