"""Variational identities for the deformed Weyl density.

For M(t) = iint f(p_t) dx dxi and a real compactly supported test
function f these hold:

    dM/dt     = iint (Delta f)(p_t) {Re p_t, Im p_t} Re G  dx dxi
    d^2M/dt^2 |_{t=0, integrable base, real G}
              = iint (Delta f)(p) |H_p G|^2  dx dxi

The right-hand sides are evaluated by deterministic tensor
Gauss-Legendre quadrature over a real box that must contain the support
of f o p_t; the left-hand sides by Richardson-extrapolated central
differences of M in t.  A nonzero second-variation pairing certifies
that the deformed Weyl density splits away from the (deformation
invariant) action density for small t != 0.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .flow import DeformedSymbol, deformed_quadratic
from .symbols import SymbolExpr, poisson_bracket, real_bracket

QUAD_MIN_ORDER = 8
FD_STEP_FIRST = 1e-2
FD_STEP_SECOND = 2e-2
ERROR_FLOOR = 1e-12


@dataclass(frozen=True)
class TestFunction:
    """Real bump f(z) = g(u) g(v), g(u) = (1-u^2)^3 on |u| <= 1.

    u = (Re z - Re c)/r, v = (Im z - Im c)/r, so the support is the
    closed square of half-width r around the center.  The Laplacian is
    closed form, which keeps the identity checks quadrature limited.
    """

    center: complex
    radius: float

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", complex(self.center))

    def _uv(self, z):
        z = np.asarray(z)
        return ((z.real - self.center.real) / self.radius,
                (z.imag - self.center.imag) / self.radius)

    @staticmethod
    def _g(u):
        out = np.zeros_like(u, dtype=float)
        m = np.abs(u) < 1
        w = 1 - u[m] ** 2
        out[m] = w ** 3
        return out

    @staticmethod
    def _gp(u):
        out = np.zeros_like(u, dtype=float)
        m = np.abs(u) < 1
        w = 1 - u[m] ** 2
        out[m] = -6 * u[m] * w ** 2
        return out

    @staticmethod
    def _gpp(u):
        out = np.zeros_like(u, dtype=float)
        m = np.abs(u) < 1
        w = 1 - u[m] ** 2
        out[m] = w * (30 * u[m] ** 2 - 6)
        return out

    def value(self, z):
        u, v = self._uv(z)
        return self._g(u) * self._g(v)

    def laplacian(self, z):
        u, v = self._uv(z)
        return (self._gpp(u) * self._g(v) + self._g(u) * self._gpp(v)) / self.radius ** 2

    def dz(self, z):
        """d f / d z = (d_Re - i d_Im) f / 2."""
        u, v = self._uv(z)
        return (self._gp(u) * self._g(v) - 1j * self._g(u) * self._gp(v)) / (2 * self.radius)

    def support_bounds(self):
        c, r = self.center, self.radius
        return (c.real - r, c.real + r, c.imag - r, c.imag + r)


# ----------------------------------------------------------------- quadrature


def _gauss_axes(box_radius, order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x * box_radius, w * box_radius


def tensor_quadrature(fn, n, box_radius, order):
    """Integrate fn over [-R, R]^{2n}; fn maps (pts_x, pts_xi) -> values.

    Sharded over the leading axis so memory stays bounded; the reduction
    order is fixed, so results are bitwise reproducible.
    """
    order = int(order)
    if order < QUAD_MIN_ORDER:
        raise ValueError(f"quadrature order {order} < {QUAD_MIN_ORDER}")
    if order ** (2 * n) > 5 * 10 ** 8:
        raise ValueError("tensor grid too large; reduce order or dimension")
    x, w = _gauss_axes(box_radius, order)
    dim = 2 * n
    rest = dim - 1
    grids = np.meshgrid(*([x] * rest), indexing="ij")
    pts_rest = np.stack([g.ravel() for g in grids], axis=-1)
    w_rest = np.ones(order ** rest)
    for k in range(rest):
        shape = [1] * rest
        shape[k] = order
        w_rest = w_rest * np.broadcast_to(w.reshape(shape), (order,) * rest).ravel()
    total = 0.0
    for i in range(order):
        pts = np.concatenate(
            [np.full((pts_rest.shape[0], 1), x[i]), pts_rest], axis=1)
        vals = fn(pts[:, :n], pts[:, n:])
        total += w[i] * float(np.dot(np.asarray(vals, dtype=float), w_rest))
    return total


def _symbol_values(p, x, xi):
    if isinstance(p, DeformedSymbol):
        return p.evaluate(x, xi)
    return p.evaluate(x, xi)


def separable_polar_quadrature(fn, r_breaks, r_max, order_r=32, order_theta=64):
    """Integrate fn(x, xi) over R^4 in harmonic action-angle variables.

    Uses x_j = sqrt(2 r_j) cos(theta_j), xi_j = -sqrt(2 r_j) sin(theta_j),
    dx_j dxi_j = dr_j dtheta_j.  The radial axes are split into
    Gauss-Legendre panels at the given breakpoints, so integrands whose
    only non-smoothness sits on action circles (bump supports composed
    with action-separable symbols) are integrated to near machine
    accuracy.  Angles use the trapezoid rule, spectrally accurate for
    the trigonometric-polynomial factors that arise here.
    """
    breaks = sorted({0.0, float(r_max), *(float(b) for b in r_breaks
                                          if 0.0 < b < r_max)})
    xg, wg = np.polynomial.legendre.leggauss(order_r)
    r_nodes = []
    r_weights = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        r_nodes.append(a + (b - a) * (xg + 1) / 2)
        r_weights.append(wg * (b - a) / 2)
    r_nodes = np.concatenate(r_nodes)
    r_weights = np.concatenate(r_weights)
    theta = 2 * np.pi * np.arange(order_theta) / order_theta
    w_theta = 2 * np.pi / order_theta

    R1, T1 = np.meshgrid(r_nodes, theta, indexing="ij")
    x1 = np.sqrt(2 * R1) * np.cos(T1)
    xi1 = -np.sqrt(2 * R1) * np.sin(T1)
    w1 = (r_weights[:, None] * np.full(order_theta, w_theta)[None, :]).ravel()
    x1 = x1.ravel()
    xi1 = xi1.ravel()
    total = 0.0
    m = x1.size
    block = max(1, (1 << 19) // m)
    for start in range(0, m, block):  # shard over the first factor's nodes
        stop = min(start + block, m)
        b = stop - start
        x = np.empty((b, m, 2))
        xi = np.empty((b, m, 2))
        x[..., 0] = x1[start:stop, None]
        x[..., 1] = x1[None, :]
        xi[..., 0] = xi1[start:stop, None]
        xi[..., 1] = xi1[None, :]
        vals = np.asarray(fn(x, xi), dtype=float)
        total += float(np.einsum("i,ij,j->", w1[start:stop], vals, w1))
    return total


def moment(f: TestFunction, p, box_radius, order=48,
           check_support=True) -> float:
    """M = iint f(p(x, xi)) dx dxi by tensor Gauss-Legendre quadrature."""
    n = p.n
    if check_support:
        _warn_if_support_leaks(f, p, box_radius)

    def fn(x, xi):
        return f.value(_symbol_values(p, x, xi))

    return tensor_quadrature(fn, n, box_radius, order)


def _warn_if_support_leaks(f, p, box_radius, n_samples=4096, seed=17):
    """f o p must vanish near the box boundary or mass is being cut off."""
    n = p.n
    dim = 2 * n
    rng = np.random.default_rng(np.random.SeedSequence((seed, 313)))
    pts = -box_radius + 2 * box_radius * rng.random((n_samples, dim))
    face = rng.integers(0, dim, n_samples)
    sign = rng.integers(0, 2, n_samples) * 2 - 1
    pts[np.arange(n_samples), face] = sign * box_radius
    vals = f.value(_symbol_values(p, pts[:, :n], pts[:, n:]))
    if np.max(np.abs(vals)) > 0:
        warnings.warn("test function support reaches the integration box "
                      "boundary; enlarge box_radius", RuntimeWarning, stacklevel=3)


def _closed_form(p):
    """Closed-form symbol for p when available (quadratic deformed fast path)."""
    if isinstance(p, SymbolExpr):
        return p
    if isinstance(p, DeformedSymbol) and p.is_quadratic:
        return deformed_quadratic(p)
    return None


def _re_g_symbol(G: SymbolExpr) -> SymbolExpr:
    return G.real_part_symbol()


def first_variation_rhs(f: TestFunction, p_t, G: SymbolExpr, box_radius,
                        order=48, fd_step=1e-5) -> float:
    """iint (Delta f)(p_t) {Re p_t, Im p_t} Re G dx dxi.

    For closed-form p_t the bracket is the exact symbol (i/2){p, conj p};
    when that symbol merges to zero the integral is exactly 0.0 and no
    quadrature runs (the integrable branch).  An ODE-defined p_t falls
    back to a Richardson central-difference bracket of step ``fd_step``.
    """
    n = p_t.n
    reG = _re_g_symbol(G)
    closed = _closed_form(p_t)
    if closed is not None:
        br = real_bracket(closed)
        if br.is_zero:
            return 0.0

        def fn(x, xi):
            vals = closed.evaluate(x, xi)
            return (f.laplacian(vals) * br.evaluate(x, xi).real
                    * reG.evaluate(x, xi).real)

        return tensor_quadrature(fn, n, box_radius, order)

    def fn(x, xi):
        vals = p_t.evaluate(x, xi)
        br = _numeric_real_bracket(p_t, x, xi, fd_step)
        return f.laplacian(vals) * br * reG.evaluate(x, xi).real

    return tensor_quadrature(fn, n, box_radius, order)


def _numeric_real_bracket(p, x, xi, h):
    """{Re p, Im p} by Richardson central differences of p's evaluation."""
    n = p.n

    def partials(step):
        gx = []
        gxi = []
        for j in range(n):
            ej = np.zeros(n)
            ej[j] = step
            gx.append((p.evaluate(x + ej, xi) - p.evaluate(x - ej, xi)) / (2 * step))
            gxi.append((p.evaluate(x, xi + ej) - p.evaluate(x, xi - ej)) / (2 * step))
        return gx, gxi

    def bracket(step):
        gx, gxi = partials(step)
        out = 0.0
        for j in range(n):
            out = out + (gxi[j].real * gx[j].imag - gx[j].real * gxi[j].imag)
        return out

    b1 = bracket(h)
    b2 = bracket(h / 2)
    return (4 * b2 - b1) / 3


def second_variation_rhs(f: TestFunction, p: SymbolExpr, G: SymbolExpr,
                         box_radius, order=48) -> float:
    """iint (Delta f)(p) |H_p G|^2 dx dxi for an integrable base.

    Rejects bases whose bracket {Re p, Im p} is not the zero symbol and
    generators that are not real-valued on real points.
    """
    if not real_bracket(p).is_zero:
        raise ValueError("second variation formula needs an integrable base "
                         "({Re p, Im p} must vanish identically)")
    if not G.is_real_on_reals():
        raise ValueError("generator must be real-valued on real points")
    hpg = poisson_bracket(p, G)
    if hpg.is_zero:
        return 0.0

    def fn(x, xi):
        vals = p.evaluate(x, xi)
        return f.laplacian(vals) * np.abs(hpg.evaluate(x, xi)) ** 2

    return tensor_quadrature(fn, p.n, box_radius, order)


# -------------------------------------------------------- finite differences


def moment_derivative_fd(make_pt, t0, order_in_t=1, step=None, *,
                         f, box_radius, quad_order=48):
    """Richardson central difference of M(t) around t0.

    ``make_pt(t)`` returns the symbol (or deformed symbol) at time t.
    One Richardson level: error O(step^4) on analytic M.
    """
    if step is None:
        step = FD_STEP_FIRST if order_in_t == 1 else FD_STEP_SECOND

    def M(t):
        return moment(f, make_pt(t), box_radius, quad_order, check_support=False)

    if order_in_t == 1:
        def diff(h):
            return (M(t0 + h) - M(t0 - h)) / (2 * h)
    elif order_in_t == 2:
        m0 = M(t0)

        def diff(h):
            return (M(t0 + h) - 2 * m0 + M(t0 - h)) / h ** 2
    else:
        raise ValueError("order_in_t must be 1 or 2")
    d1 = diff(step)
    d2 = diff(step / 2)
    return (4 * d2 - d1) / 3


@dataclass
class VariationReport:
    lhs: float
    rhs: float
    order: str  # "first" | "second"
    t: float
    lhs_error: float
    rhs_error: float
    discrepancy: float

    @classmethod
    def build(cls, lhs, rhs, order, t, lhs_error=0.0, rhs_error=0.0):
        disc = abs(lhs - rhs) / max(abs(rhs), ERROR_FLOOR)
        return cls(lhs, rhs, order, t, lhs_error, rhs_error, disc)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def quadrature_error_estimate(value_fn, order) -> tuple:
    """(value, error) with error = |I_order - I_{order/2}| + floor."""
    hi = value_fn(order)
    lo = value_fn(max(QUAD_MIN_ORDER, order // 2))
    return hi, abs(hi - lo) + ERROR_FLOOR


class _SecondVariationGrid:
    """Cached quadrature data so many test functions can be paired cheaply.

    Stores p(nodes) and weight * |H_p G(nodes)|^2 per shard for one
    quadrature order; the pairing with a bump then only needs its
    Laplacian on the cached symbol values.
    """

    def __init__(self, p, hpg, box_radius, order):
        x, w = _gauss_axes(box_radius, order)
        n = p.n
        dim = 2 * n
        rest = dim - 1
        grids = np.meshgrid(*([x] * rest), indexing="ij")
        pts_rest = np.stack([g.ravel() for g in grids], axis=-1)
        w_rest = np.ones(order ** rest)
        for k in range(rest):
            shape = [1] * rest
            shape[k] = order
            w_rest = w_rest * np.broadcast_to(w.reshape(shape), (order,) * rest).ravel()
        self.shards = []
        for i in range(order):
            pts = np.concatenate(
                [np.full((pts_rest.shape[0], 1), x[i]), pts_rest], axis=1)
            vals = p.evaluate(pts[:, :n], pts[:, n:])
            wh = (w[i] * w_rest) * np.abs(hpg.evaluate(pts[:, :n], pts[:, n:])) ** 2
            self.shards.append((vals, wh))

    def pair(self, f: TestFunction) -> float:
        return float(sum(np.dot(f.laplacian(vals), wh)
                         for vals, wh in self.shards))


def nonequality_certificate(p: SymbolExpr, G: SymbolExpr, window, box_radius,
                            order=48, centers_per_axis=4, radii=(0.25, 0.4),
                            threshold=5.0):
    """Search bump test functions for |second variation| > threshold x error.

    Scans a coarse grid of bump centers over the window and a couple of
    radii (as fractions of the window half-widths).  Returns
    (TestFunction, value, error) for the best witness, or None when the
    budget is exhausted without one -- which is not a disproof.  The
    pairing only senses the deformation where the test function reaches
    the boundary of the image of the symbol, so the window should
    overlap it.
    """
    if not real_bracket(p).is_zero:
        raise ValueError("certificate search needs an integrable base")
    if not G.is_real_on_reals():
        raise ValueError("generator must be real-valued on real points")
    hpg = poisson_bracket(p, G)
    if hpg.is_zero:
        return None
    grid_hi = _SecondVariationGrid(p, hpg, box_radius, order)
    grid_lo = _SecondVariationGrid(p, hpg, box_radius, max(QUAD_MIN_ORDER, order // 2))
    lo_r, hi_r, lo_i, hi_i = window.bounds
    cs = np.linspace(lo_r, hi_r, centers_per_axis + 2)[1:-1]
    ci = np.linspace(lo_i, hi_i, centers_per_axis + 2)[1:-1]
    best = None
    for rfrac in radii:
        rad = rfrac * min(window.half_widths)
        for cre in cs:
            for cim in ci:
                f = TestFunction(complex(cre, cim), rad)
                v = grid_hi.pair(f)
                err = abs(v - grid_lo.pair(f)) + ERROR_FLOOR
                if abs(v) > threshold * err and (best is None or abs(v) > abs(best[1])):
                    best = (f, v, err)
    return best


def integration_by_parts_gap(f: TestFunction, p, G: SymbolExpr, box_radius,
                             order=48, quadrature=None) -> tuple:
    """Both sides of the Hamilton-field integration-by-parts identity.

    lhs = iint (df/dz)(p) H_p(G) dx dxi
    rhs = -iint H_p[(df/dz)(p)] G dx dxi
        = -iint (1/4)(Delta f)(p) {p, conj p} G dx dxi

    using H_p p = 0.  Returns (lhs, rhs) as complex numbers.

    With the default box rule the comparison is limited by the bump
    profile's curved kink surfaces (percent-scale); pass a kink-aligned
    ``quadrature`` callable (fn -> value), e.g. built from
    separable_polar_quadrature, to verify the identity to 1e-6 and
    below for action-separable bases.
    """
    closed = _closed_form(p)
    if closed is None:
        raise ValueError("integration-by-parts check needs a closed-form symbol")
    hpg = poisson_bracket(closed, G)
    brc = poisson_bracket(closed, closed.conjugate_symbol())
    n = closed.n

    def integrate(fn):
        if quadrature is not None:
            return quadrature(fn)
        return tensor_quadrature(fn, n, box_radius, order)

    def fn_l_re(x, xi):
        vals = closed.evaluate(x, xi)
        return (f.dz(vals) * hpg.evaluate(x, xi)).real

    def fn_l_im(x, xi):
        vals = closed.evaluate(x, xi)
        return (f.dz(vals) * hpg.evaluate(x, xi)).imag

    def fn_r_re(x, xi):
        vals = closed.evaluate(x, xi)
        w = -(0.25 * f.laplacian(vals)) * brc.evaluate(x, xi) * G.evaluate(x, xi)
        return w.real

    def fn_r_im(x, xi):
        vals = closed.evaluate(x, xi)
        w = -(0.25 * f.laplacian(vals)) * brc.evaluate(x, xi) * G.evaluate(x, xi)
        return w.imag

    lhs = complex(integrate(fn_l_re), integrate(fn_l_im))
    rhs = complex(integrate(fn_r_re), integrate(fn_r_im))
    return lhs, rhs
