"""Complex canonical flows and deformed symbols.

The deformation flow solves, in complex coordinates rho = (x, xi),

    dx/dt  =  i dG_t/dxi (x, xi)
    dxi/dt = -i dG_t/dx  (x, xi)

which is the real 4n-dimensional flow of the field i H_{G_t} plus its
conjugate.  The right-hand side is holomorphic, so the flow map is
holomorphic in the initial point and its complex 2n x 2n Jacobian is
integrated in tandem (variational equation).  The Jacobian of a
canonical map satisfies J^T Omega J = Omega with Omega the standard
complex symplectic matrix for sigma = sum dxi_j ^ dx_j; the deviation
from that is reported as the canonical defect.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .symbols import DimensionMismatchError, PhasePoint, SymbolExpr, load_symbol


class StepSizeUnderflowError(RuntimeError):
    """Adaptive integrator drove the step below the resolvable scale."""


def symplectic_matrix(n: int) -> np.ndarray:
    """Omega with sigma(U, V) = U^T Omega V for sigma = sum dxi_j ^ dx_j."""
    Z = np.zeros((n, n))
    I = np.eye(n)
    return np.block([[Z, -I], [I, Z]])


@dataclass(frozen=True)
class Deformation:
    """A flow generator G_t, polynomial in t with symbol coefficients.

    ``generators[m]`` is the coefficient of t^m; the common case is a
    single t-independent generator.  Tolerance applies to both the
    absolute and relative error control of the adaptive integrator.
    """

    generators: tuple
    t_max: float = 0.5
    tol: float = 1e-10
    step_hint: float = 0.1

    def __post_init__(self):
        gens = self.generators
        if isinstance(gens, SymbolExpr):
            gens = (gens,)
        gens = tuple(gens)
        if not gens:
            raise ValueError("deformation needs at least one generator")
        n = gens[0].n
        for g in gens:
            if g.n != n:
                raise DimensionMismatchError("generator family mixes dimensions")
        object.__setattr__(self, "generators", gens)

    @property
    def n(self) -> int:
        return self.generators[0].n

    @property
    def tube_radius(self) -> float:
        return min(g.tube_radius for g in self.generators)

    @cached_property
    def _grad_symbols(self):
        """Per t-degree: (dG/dxi list, dG/dx list)."""
        return [([g.dxi(j) for j in range(self.n)],
                 [g.dx(j) for j in range(self.n)]) for g in self.generators]

    @cached_property
    def _hess_symbols(self):
        """Per t-degree: the 2n x 2n grid of second derivative symbols of V."""
        out = []
        for gxi, gx in self._grad_symbols:
            n = self.n
            rows = []
            for j in range(n):  # x-rows: d(i G_xi_j)/d rho_k
                rows.append([gxi[j].dx(k) for k in range(n)]
                            + [gxi[j].dxi(k) for k in range(n)])
            for j in range(n):  # xi-rows: d(-i G_x_j)/d rho_k
                rows.append([gx[j].dx(k) for k in range(n)]
                            + [gx[j].dxi(k) for k in range(n)])
            out.append(rows)
        return out

    def velocity(self, t, x, xi):
        """(dx/dt, dxi/dt) at points of shape (..., n)."""
        n = self.n
        vx = np.zeros(x.shape, dtype=complex)
        vxi = np.zeros(xi.shape, dtype=complex)
        for m, (gxi, gx) in enumerate(self._grad_symbols):
            tm = t ** m
            for j in range(n):
                vx[..., j] += tm * gxi[j].evaluate(x, xi)
                vxi[..., j] += tm * gx[j].evaluate(x, xi)
        return 1j * vx, -1j * vxi

    def velocity_jacobian(self, t, x, xi):
        """Complex Jacobian A = dV/d(x,xi), shape (..., 2n, 2n)."""
        n = self.n
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        A = np.zeros(shape + (2 * n, 2 * n), dtype=complex)
        for m, rows in enumerate(self._hess_symbols):
            tm = t ** m
            for j in range(2 * n):
                sgn = 1j if j < n else -1j
                for k in range(2 * n):
                    sym = rows[j][k]
                    if sym.is_zero:
                        continue
                    A[..., j, k] += sgn * tm * sym.evaluate(x, xi)
        return A

    def is_polynomial_quadratic(self) -> bool:
        return all(not g.has_trig and g.total_degree <= 2 for g in self.generators)


@dataclass(frozen=True)
class FlowResult:
    endpoint: PhasePoint
    jacobian: np.ndarray
    canonical_defect: float
    certified: bool
    max_imag_excursion: float
    n_steps: int


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _rk45(rhs, t0, t1, y0, rtol, atol, h0):
    """Adaptive Dormand-Prince on a complex state array; deterministic."""
    span = t1 - t0
    if span == 0:
        return y0.copy(), 0
    direction = 1.0 if span > 0 else -1.0
    h = direction * min(abs(h0), abs(span))
    t, y = t0, y0.copy()
    n_steps = 0
    min_h = 1e-14 * max(abs(span), 1.0)
    while (t1 - t) * direction > 0:
        if abs(h) > abs(t1 - t):
            h = t1 - t
        ks = []
        for i in range(7):
            yi = y
            for a, k in zip(_DP_A[i], ks):
                yi = yi + (h * a) * k
            ks.append(rhs(t + _DP_C[i] * h, yi))
        y5 = y
        for b, k in zip(_DP_B5, ks):
            if b:
                y5 = y5 + (h * b) * k
        err = np.zeros_like(y)
        for b5, b4, k in zip(_DP_B5, _DP_B4, ks):
            err = err + (h * (b5 - b4)) * k
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        enorm = float(np.max(np.abs(err) / scale))
        if enorm <= 1.0:
            t = t + h
            y = y5
            n_steps += 1
        factor = 0.9 * (enorm + 1e-300) ** -0.2
        h = h * min(5.0, max(0.2, factor))
        if abs(h) < min_h:
            raise StepSizeUnderflowError(
                f"step size underflow at t={t:.6g} (stiff or escaping trajectory)")
    return y, n_steps


def flow_points(d: Deformation, t: float, x0, xi0, track_excursion=True):
    """Flow a batch of points (no Jacobian); x0, xi0 shaped (..., n)."""
    n = d.n
    x0 = np.asarray(x0, dtype=complex)
    xi0 = np.asarray(xi0, dtype=complex)
    shape = x0.shape[:-1]
    y0 = np.concatenate([x0.reshape(-1, n), xi0.reshape(-1, n)], axis=1)

    def rhs(tt, y):
        vx, vxi = d.velocity(tt, y[:, :n], y[:, n:])
        return np.concatenate([vx, vxi], axis=1)

    y, _ = _rk45(rhs, 0.0, t, y0, d.tol, d.tol, d.step_hint)
    exc = float(np.max(np.abs(y.imag))) if track_excursion and y.size else 0.0
    return (y[:, :n].reshape(shape + (n,)), y[:, n:].reshape(shape + (n,)), exc)


def integrate_flow(d: Deformation, t: float, rho: PhasePoint,
                   with_jacobian=True) -> FlowResult:
    """Integrate the deformation flow from rho to time t.

    The complex variational equation dJ/dt = A(kappa_t) J rides along so
    the canonical defect ||J^T Omega J - Omega|| is available at the
    integrator's accuracy.  Leaving the declared tube warns and marks
    the result non-certified instead of aborting.
    """
    if abs(t) > d.t_max:
        raise ValueError(f"|t| = {abs(t)} exceeds t_max = {d.t_max}")
    n = d.n
    if rho.n != n:
        raise DimensionMismatchError(f"point dim {rho.n} != generator dim {n}")
    dim = 2 * n
    if not with_jacobian:
        x, xi, exc = flow_points(d, t, rho.x[None, :], rho.xi[None, :])
        certified = exc <= d.tube_radius
        if not certified:
            warnings.warn("flow left the declared tube; result not certified",
                          RuntimeWarning, stacklevel=2)
        return FlowResult(PhasePoint(x[0], xi[0]), np.eye(dim, dtype=complex) * np.nan,
                          float("nan"), certified, exc, 0)

    y0 = np.concatenate([rho.x, rho.xi, np.eye(dim, dtype=complex).ravel()])[None, :]

    def rhs(tt, y):
        pt = y[:, :dim]
        x = pt[:, :n]
        xi = pt[:, n:]
        J = y[:, dim:].reshape(-1, dim, dim)
        vx, vxi = d.velocity(tt, x, xi)
        A = d.velocity_jacobian(tt, x, xi)
        dJ = A @ J
        return np.concatenate([vx, vxi, dJ.reshape(-1, dim * dim)], axis=1)

    y, n_steps = _rk45(rhs, 0.0, t, y0, d.tol, d.tol, d.step_hint)
    x_end, xi_end = y[0, :n], y[0, n:dim]
    J = y[0, dim:].reshape(dim, dim)
    Om = symplectic_matrix(n)
    defect = float(np.linalg.norm(J.T @ Om @ J - Om, 2))
    exc = float(np.max(np.abs(y[0, :dim].imag)))
    certified = exc <= d.tube_radius
    if not certified:
        warnings.warn("flow left the declared tube; result not certified",
                      RuntimeWarning, stacklevel=2)
    return FlowResult(PhasePoint(x_end, xi_end), J, defect, certified, exc, n_steps)


@dataclass(frozen=True)
class DeformedSymbol:
    """p_t = p o kappa_t, evaluated through the flow on demand."""

    base: SymbolExpr
    deformation: Deformation
    t: float

    def __post_init__(self):
        if self.base.n != self.deformation.n:
            raise DimensionMismatchError("base symbol and generator dimensions differ")
        if abs(self.t) > self.deformation.t_max:
            raise ValueError(f"|t| = {abs(self.t)} exceeds t_max")

    @property
    def n(self) -> int:
        return self.base.n

    def evaluate(self, x, xi):
        """Evaluate p_t on arrays of points shaped (..., n)."""
        if not self.t:
            return self.base.evaluate(x, xi)
        if self.is_quadratic:
            return self.as_quadratic().evaluate(x, xi)
        xe, xie, exc = flow_points(self.deformation, self.t,
                                   np.asarray(x, dtype=complex),
                                   np.asarray(xi, dtype=complex))
        if exc > min(self.base.tube_radius, self.deformation.tube_radius):
            warnings.warn("deformed evaluation left the declared tube",
                          RuntimeWarning, stacklevel=2)
        return self.base.evaluate(xe, xie)

    @property
    def is_quadratic(self) -> bool:
        return (not self.base.has_trig and self.base.total_degree <= 2
                and self.deformation.is_polynomial_quadratic())

    def as_quadratic(self) -> SymbolExpr:
        return deformed_quadratic(self)


def deformed_eval(ps: DeformedSymbol, rho: PhasePoint) -> complex:
    """p_t at a single phase point, via the flow endpoint."""
    if ps.n != rho.n:
        raise DimensionMismatchError(f"point dim {rho.n} != symbol dim {ps.n}")
    return complex(ps.evaluate(rho.x, rho.xi))


# ------------------------------------------------- quadratic fast path


def symbol_to_quadratic(sym: SymbolExpr):
    """Split a degree<=2 polynomial symbol as (Q, l, c) with p = rho'Q rho/2 + l.rho + c."""
    if sym.has_trig or sym.total_degree > 2:
        raise ValueError("symbol is not a polynomial of degree <= 2")
    n = sym.n
    dim = 2 * n
    Q = np.zeros((dim, dim), dtype=complex)
    l = np.zeros(dim, dtype=complex)
    c = 0j
    for t in sym.simplified().terms:
        pows = list(t.xpow) + list(t.xipow)
        deg = sum(pows)
        idx = [i for i, p in enumerate(pows) for _ in range(p)]
        if deg == 0:
            c += t.coeff
        elif deg == 1:
            l[idx[0]] += t.coeff
        else:
            i, j = idx
            if i == j:
                Q[i, i] += 2 * t.coeff
            else:
                Q[i, j] += t.coeff
                Q[j, i] += t.coeff
    return Q, l, c


def quadratic_to_symbol(Q, l, c, n, tube_radius=8.0) -> SymbolExpr:
    """Inverse of symbol_to_quadratic (Q symmetrized)."""
    from .symbols import SymbolExpr as SE
    dim = 2 * n
    Q = 0.5 * (np.asarray(Q, dtype=complex) + np.asarray(Q, dtype=complex).T)
    out = SE.constant(c, n, tube_radius) if c != 0 else SE.zero(n, tube_radius)

    def unit(i):
        xp = [0] * n
        xip = [0] * n
        if i < n:
            xp[i] = 1
        else:
            xip[i - n] = 1
        return xp, xip

    for i in range(dim):
        if l[i] != 0:
            xp, xip = unit(i)
            out = out + SE.monomial(l[i], xp, xip, n, tube_radius)
    for i in range(dim):
        for j in range(i, dim):
            coeff = Q[i, i] / 2 if i == j else Q[i, j]
            if coeff == 0:
                continue
            xpi, xipi = unit(i)
            xpj, xipj = unit(j)
            xp = [a + b for a, b in zip(xpi, xpj)]
            xip = [a + b for a, b in zip(xipi, xipj)]
            out = out + SE.monomial(coeff, xp, xip, n, tube_radius)
    return out.simplified()


def deformed_quadratic(ps: DeformedSymbol) -> SymbolExpr:
    """Closed-form quadratic for p_t when base and G are degree <= 2.

    The flow of a quadratic generator is affine, kappa_t(rho) = L rho + b;
    L and b come from one variational flow integration at the origin and
    the quadratic form of the base is conjugated through the affine map.
    """
    if not ps.is_quadratic:
        raise ValueError("deformed_quadratic needs polynomial base and G of degree <= 2")
    n = ps.n
    if not ps.t:
        return ps.base.simplified()
    res = integrate_flow(ps.deformation, ps.t, PhasePoint.zero(n))
    L = res.jacobian
    b = np.concatenate([res.endpoint.x, res.endpoint.xi])
    Q, l, c = symbol_to_quadratic(ps.base)
    Q2 = L.T @ Q @ L
    l2 = L.T @ (Q @ b + l)
    c2 = 0.5 * b @ Q @ b + l @ b + c
    return quadratic_to_symbol(Q2, l2, c2, n, ps.base.tube_radius)


def load_deformation(spec) -> Deformation:
    """Build a Deformation from JSON dict {"G": ..., "t_poly_degree", "tol", ...}.

    "G" is a symbol JSON (or builtin name), or a list of them when
    t_poly_degree > 0; optional "t_max" and "step_hint" are honored.
    """
    if isinstance(spec, Deformation):
        return spec
    if isinstance(spec, SymbolExpr):
        return Deformation((spec,))
    if not isinstance(spec, dict):
        raise ValueError("deformation spec must be a JSON object")
    known = {"G", "t_poly_degree", "tol", "t_max", "step_hint"}
    unknown = set(spec) - known
    if unknown:
        raise ValueError(f"unknown deformation fields: {sorted(unknown)}")
    raw = spec.get("G")
    if raw is None:
        raise ValueError("deformation needs a generator 'G'")
    gens = raw if isinstance(raw, list) else [raw]
    gens = tuple(load_symbol(g) for g in gens)
    deg = spec.get("t_poly_degree", len(gens) - 1)
    if deg != len(gens) - 1:
        raise ValueError(
            f"t_poly_degree = {deg} but {len(gens)} generator(s) were given")
    return Deformation(gens, t_max=float(spec.get("t_max", 0.5)),
                       tol=float(spec.get("tol", 1e-10)),
                       step_hint=float(spec.get("step_hint", 0.1)))
