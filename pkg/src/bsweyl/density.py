"""Spectral density estimators on windows in the complex plane.

Two densities are computed relative to Lebesgue measure L(dz) =
dRe z dIm z:

* the Weyl density w(z), the direct image of phase-space volume dx dxi
  under the symbol map, estimated by histogram binning of sampled real
  phase-space points (iid or low-discrepancy);
* the action density omega(z) = |det DI(z)| with I(z) = 2 pi eta(z) + I0
  the action map of an integrable torus normal form, computed pointwise
  by Newton inversion of eta -> ptilde(eta) (jacobian formula, no
  statistical error).

For a deformed symbol built over an integrable base the action density
is unchanged by the deformation, so omega of the base is used as is.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .flow import DeformedSymbol
from .symbols import DimensionMismatchError, SymbolExpr

TWO_PI_SQ = (2 * np.pi) ** 2
DEFAULT_SHARD = 1 << 20


class EmptyGridError(RuntimeError):
    """No sample landed in the window."""


class SingularActionMapError(RuntimeError):
    """Newton inversion of the torus symbol failed to converge."""


@dataclass(frozen=True)
class ComplexWindow:
    """Rectangular window in the spectral plane with a cell grid."""

    center: complex
    half_widths: tuple
    resolution: tuple = (64, 64)

    def __post_init__(self):
        hw = (float(self.half_widths[0]), float(self.half_widths[1]))
        res = (int(self.resolution[0]), int(self.resolution[1]))
        if not (hw[0] > 0 and hw[1] > 0):
            raise ValueError("half widths must be positive")
        if res[0] < 2 or res[1] < 2:
            raise ValueError("resolution must be >= 2 per axis")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "half_widths", hw)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def from_bounds(cls, re_lo, re_hi, im_lo, im_hi, resolution=(64, 64)):
        c = complex((re_lo + re_hi) / 2, (im_lo + im_hi) / 2)
        return cls(c, ((re_hi - re_lo) / 2, (im_hi - im_lo) / 2), resolution)

    @property
    def bounds(self):
        c, hw = self.center, self.half_widths
        return (c.real - hw[0], c.real + hw[0], c.imag - hw[1], c.imag + hw[1])

    @property
    def re_edges(self):
        lo, hi, _, _ = self.bounds
        return np.linspace(lo, hi, self.resolution[0] + 1)

    @property
    def im_edges(self):
        _, _, lo, hi = self.bounds
        return np.linspace(lo, hi, self.resolution[1] + 1)

    @property
    def cell_area(self) -> float:
        return (2 * self.half_widths[0] / self.resolution[0]) * \
               (2 * self.half_widths[1] / self.resolution[1])

    @property
    def area(self) -> float:
        return 4 * self.half_widths[0] * self.half_widths[1]

    @property
    def diameter(self) -> float:
        return 2 * float(np.hypot(self.half_widths[0], self.half_widths[1]))

    def centers_complex(self) -> np.ndarray:
        re = 0.5 * (self.re_edges[:-1] + self.re_edges[1:])
        im = 0.5 * (self.im_edges[:-1] + self.im_edges[1:])
        RE, IM = np.meshgrid(re, im, indexing="ij")
        return RE + 1j * IM

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z)
        lo_r, hi_r, lo_i, hi_i = self.bounds
        return ((z.real > lo_r) & (z.real < hi_r)
                & (z.imag > lo_i) & (z.imag < hi_i))

    def to_json_dict(self) -> dict:
        return {"center": [self.center.real, self.center.imag],
                "half_widths": list(self.half_widths),
                "resolution": list(self.resolution)}


@dataclass(frozen=True)
class DensityGrid:
    """Density values per unit L(dz) on a window grid, with stderr."""

    window: ComplexWindow
    values: np.ndarray
    stderr: np.ndarray
    method: str  # monte-carlo | tensor-quadrature | jacobian-formula
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        errs = np.asarray(self.stderr, dtype=float)
        if vals.shape != tuple(self.window.resolution) or errs.shape != vals.shape:
            raise ValueError("grid shapes do not match window resolution")
        finite = vals[np.isfinite(vals)]
        if finite.size and np.min(finite) < 0:
            raise ValueError("density values must be nonnegative")
        vals.setflags(write=False)
        errs.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "stderr", errs)

    @property
    def total_mass(self) -> float:
        return float(np.nansum(self.values) * self.window.cell_area)

    def integral(self, f=None) -> float:
        """Sum of f(z_cell) * value * cell_area (f defaults to 1)."""
        z = self.window.centers_complex()
        w = self.values if f is None else self.values * f(z)
        return float(np.nansum(w) * self.window.cell_area)

    def write_csv(self, path):
        z = self.window.centers_complex()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["z_re", "z_im", "value", "stderr"])
            for i in range(z.shape[0]):
                for j in range(z.shape[1]):
                    wr.writerow([f"{z[i, j].real:.17g}", f"{z[i, j].imag:.17g}",
                                 f"{self.values[i, j]:.17g}",
                                 f"{self.stderr[i, j]:.17g}"])

    def write_meta(self, path):
        with open(path, "w") as fh:
            json.dump({"method": self.method, "window": self.window.to_json_dict(),
                       **self.meta}, fh, indent=2)


# ------------------------------------------------------------------ sampling


def _unit_samples(dim, total, seed, sampler, shard_size=DEFAULT_SHARD):
    """Yield shards of points in [0,1)^dim; deterministic per (seed, sampler)."""
    if sampler == "halton":
        eng = qmc.Halton(d=dim, scramble=True, seed=seed)
        done = 0
        while done < total:
            m = min(shard_size, total - done)
            yield eng.random(m)
            done += m
    elif sampler == "random":
        done = 0
        shard = 0
        while done < total:
            m = min(shard_size, total - done)
            rng = np.random.default_rng(np.random.SeedSequence((seed, shard)))
            yield rng.random((m, dim))
            done += m
            shard += 1
    else:
        raise ValueError(f"unknown sampler {sampler!r} (use 'halton' or 'random')")


def _eval_map(p, pts_x, pts_xi):
    """Values of p (symbol or deformed symbol) at real points."""
    return p.evaluate(pts_x, pts_xi)


def _dim_of(p) -> int:
    return p.n


def weyl_density(p, win: ComplexWindow, box_radius=4.0, samples=10_000_000,
                 seed=0, sampler="halton", shard_size=DEFAULT_SHARD) -> DensityGrid:
    """Histogram estimate of the pushforward of dx dxi under p.

    Samples the real box {|(x, xi)|_inf <= box_radius} in R^{2n}, bins
    p(rho) over the window cells and normalizes per cell area.  The
    reported standard error is the per-cell binomial estimate (for the
    low-discrepancy sampler it is conservative).  Works in any
    dimension n; only the window is two-dimensional.
    """
    n = _dim_of(p)
    dim = 2 * n
    boxvol = (2 * box_radius) ** dim
    counts = np.zeros(tuple(win.resolution), dtype=np.int64)
    re_edges, im_edges = win.re_edges, win.im_edges
    for shard in _unit_samples(dim, samples, seed, sampler, shard_size):
        q = -box_radius + 2 * box_radius * shard
        vals = _eval_map(p, q[:, :n], q[:, n:])
        h, _, _ = np.histogram2d(vals.real, vals.imag, bins=[re_edges, im_edges])
        counts += h.astype(np.int64)
    if counts.sum() == 0:
        raise EmptyGridError("no sample landed in the window")
    scale = boxvol / (samples * win.cell_area)
    values = counts * scale
    phat = counts / samples
    stderr = scale * np.sqrt(np.maximum(counts, 1) * (1 - phat))
    return DensityGrid(win, values, stderr, "monte-carlo" if sampler == "random"
                       else "tensor-quadrature",
                       meta={"samples": samples, "seed": seed,
                             "box_radius": box_radius, "sampler": sampler,
                             "n": n})


def weyl_density_torus(ptilde: SymbolExpr, win: ComplexWindow, eta_box,
                       samples=10_000_000, seed=0, sampler="halton",
                       quadrature_order=None,
                       shard_size=DEFAULT_SHARD) -> DensityGrid:
    """Pushforward of (2 pi)^2 d eta under eta -> ptilde(eta).

    ``ptilde`` must depend on the action variables only (stored in the
    xi slots of a 2-d symbol).  ``eta_box`` is ((lo1, hi1), (lo2, hi2)).
    With ``quadrature_order`` set, a tensor Gauss-Legendre rule replaces
    sampling (zero reported stderr; cell-boundary binning error is the
    caveat, so prefer coarse windows there).
    """
    _require_eta_only(ptilde)
    (lo1, hi1), (lo2, hi2) = eta_box
    area = (hi1 - lo1) * (hi2 - lo2)
    re_edges, im_edges = win.re_edges, win.im_edges

    if quadrature_order is not None:
        xg, wg = np.polynomial.legendre.leggauss(int(quadrature_order))
        e1 = lo1 + (hi1 - lo1) * (xg + 1) / 2
        w1 = wg * (hi1 - lo1) / 2
        e2 = lo2 + (hi2 - lo2) * (xg + 1) / 2
        w2 = wg * (hi2 - lo2) / 2
        E1, E2 = np.meshgrid(e1, e2, indexing="ij")
        W = np.outer(w1, w2).ravel()
        eta = np.stack([E1.ravel(), E2.ravel()], axis=-1)
        vals = ptilde.evaluate(np.zeros_like(eta), eta)
        h, _, _ = np.histogram2d(vals.real, vals.imag,
                                 bins=[re_edges, im_edges], weights=W)
        values = TWO_PI_SQ * h / win.cell_area
        values = np.maximum(values, 0.0)
        return DensityGrid(win, values, np.zeros_like(values), "tensor-quadrature",
                           meta={"quadrature_order": int(quadrature_order),
                                 "eta_box": [[lo1, hi1], [lo2, hi2]]})

    counts = np.zeros(tuple(win.resolution), dtype=np.int64)
    for shard in _unit_samples(2, samples, seed, sampler, shard_size):
        eta = np.stack([lo1 + (hi1 - lo1) * shard[:, 0],
                        lo2 + (hi2 - lo2) * shard[:, 1]], axis=-1)
        vals = ptilde.evaluate(np.zeros_like(eta), eta)
        h, _, _ = np.histogram2d(vals.real, vals.imag, bins=[re_edges, im_edges])
        counts += h.astype(np.int64)
    if counts.sum() == 0:
        raise EmptyGridError("no sample landed in the window")
    scale = TWO_PI_SQ * area / (samples * win.cell_area)
    values = counts * scale
    phat = counts / samples
    stderr = scale * np.sqrt(np.maximum(counts, 1) * (1 - phat))
    return DensityGrid(win, values, stderr, "monte-carlo" if sampler == "random"
                       else "tensor-quadrature",
                       meta={"samples": samples, "seed": seed, "sampler": sampler,
                             "eta_box": [[lo1, hi1], [lo2, hi2]]})


def _require_eta_only(ptilde: SymbolExpr):
    if ptilde.n != 2:
        raise DimensionMismatchError("torus symbols require n = 2")
    for t in ptilde.terms:
        if any(t.xpow) or any(f != 0 for f in t.xfreq):
            raise ValueError("torus symbol must depend on the action variables only")


# ------------------------------------------------------------------ actions


@dataclass(frozen=True)
class ActionMap:
    """z -> I(z) = 2 pi eta(z) + I0 for an integrable torus symbol."""

    ptilde: SymbolExpr
    I0: tuple = (0.0, 0.0)
    newton_tol: float = 1e-12
    max_iter: int = 50

    def __post_init__(self):
        _require_eta_only(self.ptilde)
        object.__setattr__(self, "I0", (float(self.I0[0]), float(self.I0[1])))

    def _jac(self, eta):
        """Real 2x2 Jacobian of (Re ptilde, Im ptilde) wrt eta, shape (...,2,2)."""
        d1 = self.ptilde.dxi(0).evaluate(np.zeros_like(eta), eta)
        d2 = self.ptilde.dxi(1).evaluate(np.zeros_like(eta), eta)
        return np.stack([np.stack([d1.real, d2.real], axis=-1),
                         np.stack([d1.imag, d2.imag], axis=-1)], axis=-2)

    def eta_of_z(self, z):
        """Newton inversion of ptilde(eta) = z over an array of z."""
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        eta = np.stack([z.real, z.imag], axis=-1).astype(float)
        ok = np.ones(z.shape, dtype=bool)
        for _ in range(self.max_iter):
            vals = self.ptilde.evaluate(np.zeros_like(eta, dtype=complex), eta)
            res = np.stack([(vals - z).real, (vals - z).imag], axis=-1)
            if not ok.any() or np.max(np.abs(res[ok])) <= self.newton_tol:
                break
            J = self._jac(eta)
            det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            bad = np.abs(det) < 1e-300
            ok &= ~bad
            det = np.where(bad, 1.0, det)
            step = np.empty_like(eta)
            step[..., 0] = (J[..., 1, 1] * res[..., 0] - J[..., 0, 1] * res[..., 1]) / det
            step[..., 1] = (-J[..., 1, 0] * res[..., 0] + J[..., 0, 0] * res[..., 1]) / det
            eta = eta - np.where(ok[..., None], step, 0.0)
        vals = self.ptilde.evaluate(np.zeros_like(eta, dtype=complex), eta)
        ok &= np.abs(vals - z) <= 10 * self.newton_tol
        if scalar:
            return eta[0], ok[0]
        return eta, ok

    def actions_and_jacobian(self, z):
        """(I(z), DI(z)) with DI the real 2x2 Jacobian wrt (Re z, Im z)."""
        eta, ok = self.eta_of_z(z)
        if not np.all(ok):
            raise SingularActionMapError(
                f"Newton inversion failed at {int((~ok).sum())} point(s)")
        J = self._jac(eta)
        I = 2 * np.pi * eta + np.asarray(self.I0)
        dI = 2 * np.pi * np.linalg.inv(J)
        return I, dI

    def jacobian_det(self, z):
        """|det DI| per point; NaN where the inversion fails."""
        eta, ok = self.eta_of_z(z)
        J = self._jac(eta)
        det_eta = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        out = np.where(ok & (np.abs(det_eta) > 0),
                       TWO_PI_SQ / np.abs(det_eta), np.nan)
        return out

    def constant_sign_on(self, win) -> bool:
        """Whether det DI keeps one sign over the window grid.

        A sign change would contradict the action map being a
        diffeomorphism there; the density and lattice machinery assume
        it holds.
        """
        z = win.centers_complex().ravel()
        eta, ok = self.eta_of_z(z)
        if not np.all(ok):
            return False
        J = self._jac(eta)
        det_eta = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        return bool(np.all(det_eta > 0) or np.all(det_eta < 0))


def action_map_integrable(ptilde: SymbolExpr, I0=(0.0, 0.0),
                          newton_tol=1e-12, max_iter=50) -> ActionMap:
    """Action map I(z) = 2 pi eta(z) + I0 from an eta-only torus symbol."""
    return ActionMap(ptilde, tuple(I0), newton_tol, max_iter)


def omega_density(am: ActionMap, win: ComplexWindow,
                  nan_fraction_limit=0.01) -> DensityGrid:
    """Action density omega(z) = |det DI(z)| at cell centers (exact formula)."""
    z = win.centers_complex()
    vals = am.jacobian_det(z)
    bad = ~np.isfinite(vals)
    if bad.mean() > nan_fraction_limit:
        raise SingularActionMapError(
            f"singular action map on {bad.mean():.1%} of cells")
    return DensityGrid(win, vals, np.zeros_like(vals), "jacobian-formula",
                       meta={"I0": list(am.I0)})


def omega_density_deformed(ps: DeformedSymbol, am: ActionMap,
                           win: ComplexWindow) -> DensityGrid:
    """omega_t of a deformed integrable symbol: unchanged for every t."""
    return omega_density(am, win)


# ------------------------------------------------------------------ volumes


def preimage_volume(p, window_or_bounds, box_radius=4.0, samples=10_000_000,
                    seed=0, sampler="halton", shard_size=DEFAULT_SHARD):
    """vol(p^{-1}(W)) on the real box, with a binomial standard error."""
    if isinstance(window_or_bounds, ComplexWindow):
        lo_r, hi_r, lo_i, hi_i = window_or_bounds.bounds
    else:
        lo_r, hi_r, lo_i, hi_i = window_or_bounds
    n = _dim_of(p)
    dim = 2 * n
    boxvol = (2 * box_radius) ** dim
    hits = 0
    for shard in _unit_samples(dim, samples, seed, sampler, shard_size):
        q = -box_radius + 2 * box_radius * shard
        vals = _eval_map(p, q[:, :n], q[:, n:])
        hits += int(np.sum((vals.real > lo_r) & (vals.real < hi_r)
                           & (vals.imag > lo_i) & (vals.imag < hi_i)))
    phat = hits / samples
    vol = boxvol * phat
    stderr = boxvol * np.sqrt(max(phat * (1 - phat), 1.0 / samples) / samples)
    return vol, stderr


def ellipticity_margin_check(p, win: ComplexWindow, box_radius,
                             n_samples=20000, seed=0, margin_factor=0.2):
    """Check that p(boundary of box) stays away from the window.

    Samples the faces of the integration box and requires the image to
    avoid the window by at least margin_factor * window diameter, so no
    preimage mass is cut off at the box boundary.  Heuristic evidence,
    reported not proved.
    """
    n = _dim_of(p)
    dim = 2 * n
    rng = np.random.default_rng(np.random.SeedSequence((seed, 991)))
    pts = -box_radius + 2 * box_radius * rng.random((n_samples, dim))
    face = rng.integers(0, dim, n_samples)
    sign = rng.integers(0, 2, n_samples) * 2 - 1
    pts[np.arange(n_samples), face] = sign * box_radius
    vals = _eval_map(p, pts[:, :n], pts[:, n:])
    lo_r, hi_r, lo_i, hi_i = win.bounds
    dr = np.maximum(np.maximum(lo_r - vals.real, vals.real - hi_r), 0.0)
    di = np.maximum(np.maximum(lo_i - vals.imag, vals.imag - hi_i), 0.0)
    dist = np.hypot(dr, di)
    min_dist = float(np.min(dist))
    need = margin_factor * win.diameter
    return min_dist >= need, min_dist
