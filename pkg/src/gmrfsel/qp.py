"""Primal active-set solver for small convex quadratic programs.

    minimize    0.5 x'Hx + c'x
    subject to  Gx <= h

``H`` is symmetric positive semi-definite and a feasible starting point
must be supplied. The working set only ever receives blocking constraints,
whose normals are independent of the current working set. Equality
subproblems are solved in an orthonormal basis of the null space of the
working normals, which stays accurate when those normals are nearly
parallel (dense frequency grids produce many such rows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QPResult:
    x: np.ndarray
    active: list[int]
    multipliers: np.ndarray
    iterations: int
    kkt_residual: float
    converged: bool


def _kkt_solve(H, g, Gw):
    """Step minimizing the model on ``Gw p = 0`` and the working-set multipliers."""
    d = H.shape[0]
    if Gw.shape[0] == 0:
        Z = np.eye(d)
    else:
        _, sv, vt = np.linalg.svd(Gw)
        rank = int(np.sum(sv > 1e-12 * sv[0]))
        Z = vt[rank:].T
    if Z.shape[1] == 0:
        p = np.zeros(d)
    else:
        Hz = Z.T @ H @ Z
        rhs = Z.T @ g
        try:
            p = -Z @ np.linalg.solve(Hz, rhs)
        except np.linalg.LinAlgError:
            p = -Z @ np.linalg.lstsq(Hz, rhs, rcond=None)[0]
    if Gw.shape[0] == 0:
        return p, np.zeros(0)
    # stationarity H p + g + Gw' mult = 0
    mult = np.linalg.lstsq(Gw.T, -(H @ p + g), rcond=None)[0]
    return p, mult


def kkt_residual(H, c, G, h, x, active, mult) -> float:
    """Stationarity plus primal infeasibility, relative to the gradient scale."""
    grad = H @ x + c
    if len(active):
        grad = grad + G[active].T @ np.clip(mult, 0.0, None)
    scale = 1.0 + np.abs(c).max(initial=0.0)
    viol = max(0.0, float((G @ x - h).max(initial=0.0)))
    return float(np.abs(grad).max(initial=0.0) / scale + viol)


def solve_qp(H, c, G, h, x0, tol: float = 1e-8, max_iter: int = 500) -> QPResult:
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    x = np.array(x0, dtype=float)
    if np.any(G @ x - h > tol):
        raise ValueError("starting point is infeasible")
    active: list[int] = []
    mult = np.zeros(0)
    gscale = 1.0 + np.abs(c).max(initial=0.0) + np.abs(H).max(initial=0.0) * (1.0 + np.abs(x).max(initial=0.0))
    rownorm = np.linalg.norm(G, axis=1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = H @ x + c
        p, mult = _kkt_solve(H, g, G[active])
        if np.abs(p).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(x).max(initial=0.0)):
            if not active or mult.min() >= -tol * gscale:
                converged = True
                break
            active.pop(int(np.argmin(mult)))
            continue
        Gp = G @ p
        slack = np.clip(h - G @ x, 0.0, None)
        # rows nearly dependent on the working set give Gp ~ 0 and must not block
        cand = Gp > 1e-10 * rownorm * np.linalg.norm(p)
        if active:
            cand[active] = False
        alpha, block = 1.0, -1
        if np.any(cand):
            idx = np.flatnonzero(cand)
            ratios = slack[idx] / Gp[idx]
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha, block = float(ratios[k]), int(idx[k])
        x = x + alpha * p
        if block >= 0:
            active.append(block)
    res = kkt_residual(H, c, G, h, x, active, mult if len(mult) == len(active) else np.zeros(len(active)))
    return QPResult(x, list(active), mult, it, res, converged)
