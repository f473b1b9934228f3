"""Penalized neighborhood selection and slope-heuristic calibration.

For a penalty ``N d_m / norm`` the selected model ``m(N)`` is piecewise
constant in ``N`` and only changes at vertices of the lower convex hull of
the points ``(d_m / norm, gamma_m)``. The slope heuristic locates the
largest dimension drop along that path (the minimal penalty ``N_min``)
and keeps the model selected at ``2 N_min``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cls import FitResult, Periodogram, fit_plane, fit_torus
from .errors import EmptySublatticeError, NoJumpError
from .lattice import NeighborhoodModel, Sublattice, sublattice_for_model
from .params import ConstraintSpec
from .simulate import FieldObservations

MIN_SUBLATTICE_NODES = 100


def penalized_select(fits: Sequence[FitResult], pen) -> int:
    """Index minimizing ``criterion + pen``; ties go to the smaller dimension.

    ``pen`` is a sequence aligned with ``fits`` or a callable on a fit.
    """
    if not fits:
        raise ValueError("no fits to select from")
    pens = [pen(f) for f in fits] if callable(pen) else list(pen)
    if len(pens) != len(fits):
        raise ValueError("penalty length does not match the number of fits")
    if any(p < 0 for p in pens):
        raise ValueError("penalties must be nonnegative")
    best = None
    for k, (f, p) in enumerate(zip(fits, pens)):
        key = (f.criterion + p, f.dim)
        if best is None or key < best[0]:
            best = (key, k)
    return best[1]


@dataclass
class SelectionPath:
    """``N -> m(N)`` as a right-continuous step function.

    ``breakpoints[0]`` is ``(0.0, k0)``; each later ``(N, k)`` means model
    ``k`` is selected for ``N`` at and just above that value.
    """

    breakpoints: list[tuple[float, int]]
    normalization: float
    dims: list[int]
    criteria: list[float]

    def model_at(self, N: float) -> int:
        if N < 0:
            raise ValueError("N must be nonnegative")
        k = self.breakpoints[0][1]
        for bp, idx in self.breakpoints[1:]:
            if bp <= N:
                k = idx
            else:
                break
        return k

    def dim_at(self, N: float) -> int:
        return self.dims[self.model_at(N)]

    def jumps(self) -> list[tuple[float, int]]:
        """``(N, d before - d after)`` at every breakpoint past the origin."""
        out = []
        for (_, prev), (N, k) in zip(self.breakpoints, self.breakpoints[1:]):
            out.append((N, self.dims[prev] - self.dims[k]))
        return out

    def to_dict(self) -> dict:
        return {
            "normalization": self.normalization,
            "breakpoints": [{"N": N, "model": k, "dim": self.dims[k]} for N, k in self.breakpoints],
        }


def selection_path(fits: Sequence[FitResult], normalization: float, iso: bool | None = None) -> SelectionPath:
    """Exact selection path for ``pen(m) = N d_m / normalization``.

    Lower convex hull (monotone chain) of ``(d_m, gamma_m)``; among models
    sharing a dimension only the smallest criterion can ever be selected.
    """
    if not fits:
        raise ValueError("no fits")
    if not normalization > 0:
        raise ValueError("normalization must be positive")
    dims = [f.model.dim(f.iso if iso is None else iso) for f in fits]
    crit = [float(f.criterion) for f in fits]
    if not all(math.isfinite(c) for c in crit):
        raise ValueError("criteria must be finite")
    # best representative per dimension, first index on ties
    rep: dict[int, int] = {}
    for k, (d, c) in enumerate(zip(dims, crit)):
        if d not in rep or c < crit[rep[d]]:
            rep[d] = k
    order = [rep[d] for d in sorted(rep)]
    hull: list[int] = []
    for k in order:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (dims[b] - dims[a]) * (crit[k] - crit[a]) - (crit[b] - crit[a]) * (dims[k] - dims[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    # keep the decreasing part: from the smallest dimension to the smallest criterion
    end = min(range(len(hull)), key=lambda t: (crit[hull[t]], dims[hull[t]]))
    chain = hull[: end + 1]
    bps = [(0.0, chain[-1])]
    for t in range(len(chain) - 1, 0, -1):
        big, small = chain[t], chain[t - 1]
        N = (crit[small] - crit[big]) * normalization / (dims[big] - dims[small])
        bps.append((float(N), small))
    return SelectionPath(bps, float(normalization), dims, crit)


def find_N_min(path: SelectionPath) -> tuple[float, int]:
    """Breakpoint with the largest dimension drop, latest one on ties."""
    jumps = path.jumps()
    if not jumps:
        raise NoJumpError("selection path is constant: no dimension jump detected")
    best = max(jumps, key=lambda t: (t[1], t[0]))
    return best


@dataclass(eq=False)
class SelectionReport:
    path: SelectionPath
    N_min_hat: float
    jump_size: int
    selected: int
    final_fit: FitResult
    fits: list[FitResult] = field(repr=False)
    iso: bool = True
    common_sublattice: Sublattice | None = field(default=None, repr=False)
    flat: bool = False

    @property
    def selected_model(self) -> NeighborhoodModel:
        return self.fits[self.selected].model

    @property
    def selected_fit(self) -> FitResult:
        """Fit of the selected model on the common data set used for the path."""
        return self.fits[self.selected]

    def diagnostics(self) -> list[dict]:
        return [{"model": k, "dim": f.model.dim(self.iso), "criterion": f.criterion}
                for k, f in enumerate(self.fits)]

    def to_dict(self) -> dict:
        return {
            "N_min_hat": self.N_min_hat,
            "jump_size": self.jump_size,
            "selected": self.selected,
            "selected_dim": self.selected_model.dim(self.iso),
            "iso": self.iso,
            "flat_path": self.flat,
            "path": self.path.to_dict(),
            "diagnostics": self.diagnostics(),
            "final_fit": self.final_fit.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _calibrate(fits, normalization, iso):
    path = selection_path(fits, normalization, iso)
    try:
        N_min, jump = find_N_min(path)
    except NoJumpError:
        warnings.warn("flat selection path; falling back to the smallest model", RuntimeWarning)
        k = min(range(len(fits)), key=lambda t: fits[t].model.dim(iso))
        return path, float("nan"), 0, k, True
    return path, N_min, jump, path.model_at(2.0 * N_min), False


def slope_select_torus(data, collection: Sequence[NeighborhoodModel], iso: bool = True,
                       constraint: ConstraintSpec | None = None,
                       fits: Sequence[FitResult] | None = None) -> SelectionReport:
    """Data-driven penalization on a torus.

    Parameters
    ----------
    data : FieldObservations or Periodogram
    collection : sequence of NeighborhoodModel
        Should reach well into the overfitting regime so the jump is visible.
    fits : sequence of FitResult, optional
        Precomputed per-model fits (reused by risk studies).
    """
    cache = data if isinstance(data, Periodogram) else Periodogram(data)
    if fits is None:
        fits = [fit_torus(m, cache, iso, constraint) for m in collection]
    norm = cache.n * cache.lattice.size
    path, N_min, jump, k, flat = _calibrate(list(fits), norm, iso)
    return SelectionReport(path, N_min, jump, k, fits[k], list(fits), iso, flat=flat)


def common_sublattice(collection: Sequence[NeighborhoodModel], lattice) -> Sublattice:
    mask = np.ones(lattice.shape, dtype=bool)
    for m in collection:
        mask &= sublattice_for_model(m, lattice).mask
    if not mask.any():
        raise EmptySublatticeError("the models share no interior node")
    return Sublattice(mask)


def slope_select_plane(data: FieldObservations, collection: Sequence[NeighborhoodModel],
                       iso: bool = True, grid_resolution: int = 512) -> SelectionReport:
    """Data-driven penalization on a window of Z^2.

    All models are compared on the common sublattice of the collection; the
    selected model is then refit on its own (larger) sublattice, which is
    the returned ``final_fit``.
    """
    if data.lattice.toroidal:
        raise ValueError("slope_select_plane expects a non-toroidal lattice")
    common = common_sublattice(collection, data.lattice)
    if common.size < MIN_SUBLATTICE_NODES:
        warnings.warn(f"common sublattice has only {common.size} nodes (< {MIN_SUBLATTICE_NODES})",
                      RuntimeWarning)
    fits = [fit_plane(m, data, common, iso, grid_resolution) for m in collection]
    path, N_min, jump, k, flat = _calibrate(fits, data.n * common.size, iso)
    final = fit_plane(collection[k], data, None, iso, grid_resolution)
    return SelectionReport(path, N_min, jump, k, final, fits, iso, common, flat)
