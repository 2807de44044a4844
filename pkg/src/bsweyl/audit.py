"""Numerical audit of the standing assumptions on a symbol.

Everything here is sampled evidence, not proof: ellipticity outside a
ball, independence of d Re p and d Im p on the real zero set, smallness
of {Re p, Im p} there, and a single-cluster heuristic for connectivity
of the zero set.  Flags are tri-state: "pass" / "fail" / "not-checked".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .symbols import SymbolExpr, real_bracket

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50


@dataclass
class AuditReport:
    ellipticity_min_abs: float
    ellipticity_threshold: float
    ellipticity_flag: str
    n_zero_points: int
    independence_min: float | None
    bracket_max: float | None
    bracket_threshold: float
    bracket_flag: str
    connectivity_flag: str
    action_jacobian_cond: float | None
    sample_budget: int
    ball_radius: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _halton_points(n_pts, dim, seed, lo, hi):
    eng = qmc.Halton(d=dim, scramble=True, seed=seed)
    return lo + (hi - lo) * eng.random(n_pts)


def _zero_set_sample(p: SymbolExpr, budget, seed, box):
    """Gauss-Newton from quasi-random seeds onto {Re p = Im p = 0} in R^{2n}."""
    n = p.n
    dpx = [p.dx(j) for j in range(n)]
    dpxi = [p.dxi(j) for j in range(n)]
    pts = _halton_points(budget, 2 * n, seed, -box, box)
    x = pts[:, :n].astype(complex)
    xi = pts[:, n:].astype(complex)
    for _ in range(NEWTON_MAX_ITER):
        vals = p.evaluate(x, xi)
        res = np.stack([vals.real, vals.imag], axis=-1)
        if np.all(np.abs(vals) <= NEWTON_TOL):
            break
        # complex gradient -> real Jacobian of (Re p, Im p) on real points
        grads = np.stack([d.evaluate(x, xi) for d in dpx + dpxi], axis=-1)
        J = np.stack([grads.real, grads.imag], axis=-2)  # (m, 2, 2n)
        # Gauss-Newton step: minimum-norm solution of J s = res
        JJt = J @ np.swapaxes(J, -1, -2)
        try:
            lam = np.linalg.solve(JJt + 1e-14 * np.eye(2), res[..., None])
        except np.linalg.LinAlgError:
            break
        step = (np.swapaxes(J, -1, -2) @ lam)[..., 0]
        upd = ~ (np.abs(vals) <= NEWTON_TOL)
        x = x - np.where(upd[:, None], step[:, :n], 0.0)
        xi = xi - np.where(upd[:, None], step[:, n:], 0.0)
    vals = p.evaluate(x, xi)
    ok = np.abs(vals) <= NEWTON_TOL
    ok &= np.max(np.abs(np.concatenate([x, xi], axis=1).real), axis=1) <= 2 * box
    pts = np.concatenate([x[ok].real, xi[ok].real], axis=1)
    return pts


def _independence_measure(p: SymbolExpr, pts):
    """|d Re p ^ d Im p| = Gram-determinant area of the two real gradients."""
    n = p.n
    x = pts[:, :n].astype(complex)
    xi = pts[:, n:].astype(complex)
    grads = np.stack([p.dx(j).evaluate(x, xi) for j in range(n)]
                     + [p.dxi(j).evaluate(x, xi) for j in range(n)], axis=-1)
    ga, gb = grads.real, grads.imag
    aa = np.sum(ga * ga, axis=-1)
    bb = np.sum(gb * gb, axis=-1)
    ab = np.sum(ga * gb, axis=-1)
    return np.sqrt(np.maximum(aa * bb - ab * ab, 0.0))


def _single_cluster(pts, radius=0.2) -> bool:
    """Union-find single-linkage connectivity at the given radius."""
    m = len(pts)
    parent = np.arange(m)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    tree = cKDTree(pts)
    for i, j in tree.query_pairs(radius):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    roots = {find(i) for i in range(m)}
    return len(roots) == 1


def audit(p: SymbolExpr, sample_budget=4096, ball_radius=4.0,
          bracket_threshold=0.1, seed=0, action_map=None,
          window=None) -> AuditReport:
    """Measure the standing assumptions on quasi-random samples.

    Reports minima/maxima over samples; deterministic for fixed seed.
    If the Newton search finds no zero point within budget, the
    connectivity and bracket checks come back "not-checked".
    """
    n = p.n
    # ellipticity: min |p| over a quasi-random shell C <= |rho|_inf <= 2C
    shell_raw = _halton_points(sample_budget, 2 * n, seed + 1,
                               -2 * ball_radius, 2 * ball_radius)
    mask = np.max(np.abs(shell_raw), axis=1) >= ball_radius
    shell = shell_raw[mask]
    vals = p.evaluate(shell[:, :n].astype(complex), shell[:, n:].astype(complex))
    ell_min = float(np.min(np.abs(vals))) if len(shell) else float("nan")
    ell_thresh = 1.0 / ball_radius
    ell_flag = "not-checked" if not len(shell) else (
        "pass" if ell_min >= ell_thresh else "fail")

    zero_pts = _zero_set_sample(p, sample_budget, seed, box=ball_radius / 2)
    if len(zero_pts) == 0:
        return AuditReport(
            ellipticity_min_abs=ell_min, ellipticity_threshold=ell_thresh,
            ellipticity_flag=ell_flag, n_zero_points=0,
            independence_min=None, bracket_max=None,
            bracket_threshold=bracket_threshold, bracket_flag="not-checked",
            connectivity_flag="not-checked",
            action_jacobian_cond=_action_cond(action_map, window),
            sample_budget=sample_budget, ball_radius=ball_radius, seed=seed)

    indep = _independence_measure(p, zero_pts)
    br = real_bracket(p)
    if br.is_zero:
        br_max = 0.0
    else:
        bvals = br.evaluate(zero_pts[:, :n].astype(complex),
                            zero_pts[:, n:].astype(complex))
        br_max = float(np.max(np.abs(bvals.real)))
    br_flag = "pass" if br_max < bracket_threshold else "fail"
    conn = "pass" if _single_cluster(zero_pts) else "fail"

    return AuditReport(
        ellipticity_min_abs=ell_min, ellipticity_threshold=ell_thresh,
        ellipticity_flag=ell_flag, n_zero_points=int(len(zero_pts)),
        independence_min=float(np.min(indep)), bracket_max=br_max,
        bracket_threshold=bracket_threshold, bracket_flag=br_flag,
        connectivity_flag=conn,
        action_jacobian_cond=_action_cond(action_map, window),
        sample_budget=sample_budget, ball_radius=ball_radius, seed=seed)


def _action_cond(action_map, window):
    """Max condition number of DI over the window grid, when both given."""
    if action_map is None or window is None:
        return None
    z = window.centers_complex().ravel()
    _, dI = action_map.actions_and_jacobian(z)
    conds = np.linalg.cond(dI)
    return float(np.max(conds))
