import numpy as np
import pytest

from bsweyl.density import ComplexWindow, action_map_integrable, omega_density
from bsweyl.flow import Deformation, DeformedSymbol, deformed_quadratic
from bsweyl.quantize import (BasisSpec, BSLattice, EigensolveError,
                             OperatorMatrix, QuantizationError, bs_predict,
                             count_and_compare, gaussian_perturbation,
                             hamilton_matrix, perturb,
                             quadratic_exact_spectrum, quantize_quadratic,
                             quantize_torus, spectrum)
from bsweyl.symbols import SymbolExpr, cho, coupling_xx, torus_coupled, torus_linear

from oracles import eig2x2, harmonic_lattice


def osc_1d_in_2d():
    return (SymbolExpr.monomial(0.5, (2, 0), (0, 0))
            + SymbolExpr.monomial(0.5, (0, 0), (2, 0)))


class TestQuantizeQuadratic:
    def test_harmonic_oscillator_diagonal_ladder(self):
        h, N = 0.1, 10
        basis = BasisSpec("hermite-tensor", N, h, n=1)
        M = quantize_quadratic(
            SymbolExpr.monomial(0.5, (2,), (0,), n=1)
            + SymbolExpr.monomial(0.5, (0,), (2,), n=1), basis)
        # exactly diagonal with h(k+1/2), except the truncated top state
        off = M.matrix - np.diag(np.diag(M.matrix))
        assert np.max(np.abs(off)) == 0.0
        want = h * (np.arange(N) + 0.5)
        got = np.diag(M.matrix).real
        assert np.allclose(got[:-1], want[:-1], atol=1e-14)

    def test_cho_separable_lattice(self):
        h, N = 0.05, 12
        basis = BasisSpec("hermite-tensor", N, h)
        s = spectrum(quantize_quadratic(cho(1.0, 0.0), basis))
        lat = harmonic_lattice(h, N)
        # compare away from the corrupted top slices k = N-1
        safe = (lat.real < h * (N - 1)) & (lat.imag < h * (N - 1))
        lat_safe = np.sort_complex(lat[safe])
        dist = np.abs(lat_safe[:, None] - s.eigenvalues[None, :]).min(axis=1)
        assert np.max(dist) <= 1e-10

    def test_weyl_symmetrization_of_cross_term(self):
        h, N = 0.1, 8
        basis = BasisSpec("hermite-tensor", N, h, n=1)
        q = SymbolExpr.monomial(1.0, (1,), (1,), n=1)
        M = quantize_quadratic(q, basis).matrix
        from bsweyl.quantize import _axis_ops
        X, P = _axis_ops(N, h)
        want = 0.5 * (X @ P + P @ X)
        assert np.max(np.abs(M - want)) <= 1e-14

    def test_degree_cap(self):
        basis = BasisSpec("hermite-tensor", 6, 0.1)
        cubic = SymbolExpr.monomial(1.0, (3, 0), (0, 0))
        with pytest.raises(QuantizationError):
            quantize_quadratic(cubic, basis)

    def test_hermitian_branch(self):
        # real-on-reals symbol quantizes to a Hermitian matrix with real
        # eigenvalues at solver accuracy
        q = (osc_1d_in_2d()
             + SymbolExpr.monomial(0.5, (0, 2), (0, 0))
             + SymbolExpr.monomial(0.5, (0, 0), (0, 2))
             + SymbolExpr.monomial(0.3, (1, 1), (0, 0)))
        assert q.is_real_on_reals()
        basis = BasisSpec("hermite-tensor", 10, 0.1)
        M = quantize_quadratic(q, basis)
        assert M.is_hermitian
        s = spectrum(M)
        assert np.max(np.abs(s.eigenvalues.imag)) <= 1e-10


class TestQuantizeTorus:
    def test_linear_lattice(self):
        basis = BasisSpec("torus-fourier", 3, 0.1)
        M = quantize_torus(torus_linear(), basis)
        ks = np.arange(-3, 4)
        want = (0.1 * ks[:, None] + 0.1j * ks[None, :]).ravel()
        got = np.sort_complex(np.diag(M.matrix))
        assert np.allclose(got, np.sort_complex(want), atol=1e-15)

    def test_constant_symbol_scalar_matrix(self):
        basis = BasisSpec("torus-fourier", 2, 0.1)
        M = quantize_torus(SymbolExpr.constant(2.0 + 1.0j), basis)
        assert np.allclose(M.matrix, (2.0 + 1.0j) * np.eye(25))

    def test_rejects_angle_dependence(self):
        basis = BasisSpec("torus-fourier", 2, 0.1)
        with pytest.raises(QuantizationError):
            quantize_torus(SymbolExpr.monomial(1.0, (1, 0), (0, 0)), basis)

    def test_bs_consistency_exact(self):
        # spectrum(quantize_torus) and bs_predict are both ptilde(h k)
        h, K = 0.1, 3
        ptilde = torus_coupled(0.3)
        s = spectrum(quantize_torus(ptilde, BasisSpec("torus-fourier", K, h)))
        win = ComplexWindow.from_bounds(-0.33, 0.33, -0.33, 0.33, (8, 8))
        lat = BSLattice(action_map_integrable(ptilde), h, win, theta0=(0.0, 0.0))
        preds, unresolved = bs_predict(lat)
        assert not unresolved
        sw = s.in_window(win)
        sw = sw[np.lexsort((sw.imag, sw.real))]
        assert preds.size == sw.size
        assert np.max(np.abs(preds - sw)) <= 1e-10


class TestPerturb:
    def test_delta_zero_identity(self):
        basis = BasisSpec("hermite-tensor", 6, 0.1)
        P = quantize_quadratic(cho(1.0, 0.0), basis)
        assert perturb(P, 0.0, 3) is P

    def test_deterministic_given_seed(self):
        basis = BasisSpec("hermite-tensor", 6, 0.1)
        P = quantize_quadratic(cho(1.0, 0.0), basis)
        a = perturb(P, 1e-3, 42).matrix
        b = perturb(P, 1e-3, 42).matrix
        assert np.array_equal(a, b)
        c = perturb(P, 1e-3, 43).matrix
        assert not np.array_equal(a, c)

    def test_frobenius_concentration(self):
        # ||Q/sqrt(dim)||_F concentrates near 1 for dim >= 400
        dim = 400
        vals = []
        for seed in range(10):
            Q = gaussian_perturbation(dim, seed)
            vals.append(np.linalg.norm(Q, "fro") / np.sqrt(dim))
        vals = np.array(vals)
        assert np.all(np.abs(vals - 1.0) <= 0.05)

    def test_jordan_block_splitting_scale(self):
        # 2x2 nilpotent block: eigenvalues split like sqrt(delta)
        delta = 1e-6
        basis = BasisSpec("hermite-tensor", 2, 0.1, n=1)
        J = OperatorMatrix(np.array([[0, 1], [0, 0]], dtype=complex), basis)
        Pd = perturb(J, delta, 7)
        ev = np.linalg.eigvals(Pd.matrix)
        a, b, c, d = Pd.matrix[0, 0], Pd.matrix[0, 1], Pd.matrix[1, 0], Pd.matrix[1, 1]
        want = eig2x2(a, b, c, d)
        assert np.max(np.abs(np.sort_complex(ev)
                             - np.sort_complex(np.array(want)))) <= 1e-12
        split = np.max(np.abs(ev))
        assert 0.05 * np.sqrt(delta) <= split <= 20 * np.sqrt(delta)


class TestSpectrum:
    def test_diagonal_matrix(self):
        basis = BasisSpec("torus-fourier", 1, 0.1)
        d = np.array([1 + 1j, 2 - 1j, 0.5, -3j, 0, 1, 2, 3, 4], dtype=complex)
        M = OperatorMatrix(np.diag(d), basis)
        s = spectrum(M)
        assert np.allclose(np.sort_complex(s.eigenvalues), np.sort_complex(d),
                           atol=1e-12)

    def test_sorted_lexicographically(self):
        basis = BasisSpec("hermite-tensor", 4, 0.1)
        s = spectrum(quantize_quadratic(cho(1.0, 0.0), basis))
        ev = s.eigenvalues
        assert np.array_equal(ev, ev[np.lexsort((ev.imag, ev.real))])

    def test_dimension_cap(self):
        basis = BasisSpec("hermite-tensor", 70, 0.05)
        P = OperatorMatrix(np.eye(70 ** 2, dtype=complex), basis)
        with pytest.raises(EigensolveError):
            spectrum(P, dim_cap=4096)

    def test_perturbation_continuity(self):
        # eigenvalues of P_delta approach those of P as delta -> 0
        h, N = 0.1, 20
        basis = BasisSpec("hermite-tensor", N, h)
        P = quantize_quadratic(cho(1.0, 0.0), basis)
        s0 = spectrum(P)
        sd = spectrum(perturb(P, 1e-12, 5), delta=1e-12, seed=5)
        d1 = np.abs(s0.eigenvalues[:, None] - sd.eigenvalues[None, :]).min(axis=1).max()
        d2 = np.abs(sd.eigenvalues[:, None] - s0.eigenvalues[None, :]).min(axis=1).max()
        assert max(d1, d2) <= s0.residual_bound


class TestExactSpectrumOracle:
    def test_cho_hamilton_eigenvalues(self):
        mus_spec = quadratic_exact_spectrum(cho(1.0, 0.0), 0.1, 6)
        want = harmonic_lattice(0.1, 6)
        want = want[np.lexsort((want.imag, want.real))]
        assert np.max(np.abs(mus_spec - want)) <= 1e-12

    def test_invariance_under_linear_canonical_map(self):
        # q and q o kappa_t have similar Hamilton matrices: same spectrum
        q = cho(1.0, 0.0)
        qt = deformed_quadratic(
            DeformedSymbol(q, Deformation((coupling_xx(),)), 0.25))
        a = quadratic_exact_spectrum(q, 0.05, 8)
        b = quadratic_exact_spectrum(qt, 0.05, 8)
        hausdorff = max(np.abs(a[:, None] - b[None, :]).min(axis=1).max(),
                        np.abs(b[:, None] - a[None, :]).min(axis=1).max())
        assert hausdorff <= 1e-10

    def test_scaling_homogeneity(self):
        a = quadratic_exact_spectrum(cho(1.0, 0.0), 0.1, 5)
        b = quadratic_exact_spectrum(2.5 * cho(1.0, 0.0), 0.1, 5)
        assert np.max(np.abs(2.5 * a - b)) <= 1e-12

    def test_nonelliptic_rejected(self):
        q = SymbolExpr.monomial(1.0, (1, 0), (0, 0)) * \
            SymbolExpr.monomial(1.0, (0, 0), (1, 0))  # x1 xi1, vanishes widely
        with pytest.raises(QuantizationError):
            quadratic_exact_spectrum(q, 0.1, 4)

    def test_hamilton_matrix_oscillator(self):
        F = hamilton_matrix(osc_1d_in_2d())
        lam = np.sort_complex(np.linalg.eigvals(F))
        # factor-1 oscillator gives +-i; factor 2 is absent (zero block)
        assert np.allclose(sorted(lam, key=abs)[:2], [0, 0], atol=1e-12)


class TestBSPredict:
    def test_torus_linear_lattice(self):
        am = action_map_integrable(torus_linear())
        win = ComplexWindow.from_bounds(-0.26, 0.26, -0.26, 0.26, (8, 8))
        lat = BSLattice(am, 0.1, win, theta0=(0.0, 0.0))
        pts, unresolved = bs_predict(lat)
        assert not unresolved
        ks = np.arange(-2, 3)
        want = np.array([0.1 * a + 0.1j * b for a in ks for b in ks])
        want = want[np.lexsort((want.imag, want.real))]
        assert pts.size == want.size
        assert np.max(np.abs(pts - want)) <= 1e-12

    def test_cho_predictions_match_exact_spectrum(self):
        # theta0 = (1/2, 1/2) places predictions on h(k+1/2) + i h(k'+1/2)
        h = 0.05
        am = action_map_integrable(torus_linear())
        win = ComplexWindow.from_bounds(0.01, 0.51, 0.01, 0.51, (8, 8))
        lat = BSLattice(am, h, win, theta0=(0.5, 0.5))
        pts, unresolved = bs_predict(lat)
        assert not unresolved
        want = harmonic_lattice(h, 10)
        want = want[(want.real > 0.01) & (want.real < 0.51)
                    & (want.imag > 0.01) & (want.imag < 0.51)]
        want = want[np.lexsort((want.imag, want.real))]
        assert pts.size == want.size
        assert np.max(np.abs(pts - want)) <= 1e-10

    def test_half_h_quadruples_count(self):
        # boundary cells bias small windows; at this size the lattice
        # area term dominates and the ratio sits within 10% of 4
        am = action_map_integrable(torus_coupled(0.3))
        win = ComplexWindow.from_bounds(-0.7, 0.7, -0.7, 0.7, (8, 8))
        n_counts = {}
        for h in (0.1, 0.05):
            pts, _ = bs_predict(BSLattice(am, h, win, theta0=(0.0, 0.0)))
            n_counts[h] = pts.size
        ratio = n_counts[0.05] / n_counts[0.1]
        assert abs(ratio - 4.0) <= 0.4

    def test_lattice_invariant(self):
        # predicted points satisfy I(z)/(2 pi h) + theta in Z^2
        am = action_map_integrable(torus_coupled(0.3))
        win = ComplexWindow.from_bounds(-0.3, 0.3, -0.3, 0.3, (8, 8))
        lat = BSLattice(am, 0.07, win, theta0=(0.5, 0.5))
        pts, _ = bs_predict(lat)
        I, _ = am.actions_and_jacobian(pts)
        frac = I / (2 * np.pi * 0.07) + lat.theta()
        assert np.max(np.abs(frac - np.round(frac))) <= 1e-10


class TestCountAndCompare:
    def test_unperturbed_cho_count_matches_omega_exactly(self):
        # N = 24 keeps the corrupted top Hermite slice (at h(N-1)/2 =
        # 0.575) outside the count window
        h, N = 0.05, 24
        basis = BasisSpec("hermite-tensor", N, h)
        s = spectrum(quantize_quadratic(cho(1.0, 0.0), basis))
        # rectangle with edges on h-integers avoids the lattice and makes
        # the rounded omega integral exact
        win = ComplexWindow.from_bounds(0.2, 0.5, 0.25, 0.45, (4, 4))
        am = action_map_integrable(torus_linear())
        rep = count_and_compare(s, win, omega_grid=omega_density(am, win))
        assert rep.count == int(round(rep.omega_prediction))
        assert rep.count == 6 * 4
        assert not rep.flagged_unsafe

    def test_integrable_predictions_agree(self):
        h, K = 0.1, 4
        ptilde = torus_coupled(0.3)
        s = spectrum(quantize_torus(ptilde, BasisSpec("torus-fourier", K, h)))
        win = ComplexWindow.from_bounds(-0.3, 0.3, -0.3, 0.3, (16, 16))
        am = action_map_integrable(ptilde)
        o_grid = omega_density(am, win)
        from bsweyl.density import weyl_density_torus
        w_grid = weyl_density_torus(ptilde, win, ((-0.5, 0.5), (-0.5, 0.5)),
                                    samples=2_000_000, seed=8)
        rep = count_and_compare(s, win, omega_grid=o_grid, weyl_grid=w_grid)
        assert rep.omega_prediction == pytest.approx(rep.weyl_prediction, rel=0.02)

    def test_unsafe_window_flagged(self):
        h, N = 0.1, 10
        basis = BasisSpec("hermite-tensor", N, h)
        s = spectrum(quantize_quadratic(cho(1.0, 0.0), basis))
        win = ComplexWindow.from_bounds(0.0, 2.0, 0.0, 2.0, (4, 4))
        rep = count_and_compare(s, win)
        assert rep.flagged_unsafe

    def test_weyl_scaling_improves_with_h(self):
        # N(W;h) (2 pi h)^2 / int omega -> 1 through h = 0.1, 0.07, 0.05
        ptilde = torus_coupled(0.3)
        am = action_map_integrable(ptilde)
        win = ComplexWindow.from_bounds(-0.285, 0.285, -0.285, 0.285, (8, 8))
        o_grid = omega_density(am, win)
        devs = []
        for h in (0.1, 0.07, 0.05):
            K = int(np.ceil(0.45 / h))
            s = spectrum(quantize_torus(ptilde, BasisSpec("torus-fourier", K, h)))
            rep = count_and_compare(s, win, omega_grid=o_grid)
            devs.append(abs(rep.count * (2 * np.pi * h) ** 2
                            / o_grid.total_mass - 1.0))
        assert devs[0] >= devs[1] >= devs[2]


class TestSpectrumInvarianceUnderDeformation:
    def test_deformed_spectrum_matches_base_in_safe_region(self):
        h, N, t = 0.05, 40, 0.2
        basis = BasisSpec("hermite-tensor", N, h)
        p_t = deformed_quadratic(
            DeformedSymbol(cho(1.0, 0.0), Deformation((coupling_xx(),)), t))
        s_t = spectrum(quantize_quadratic(p_t, basis))
        region = (0.0, 0.85, 0.0, 0.85)
        ev = s_t.in_window(region)
        lat = harmonic_lattice(h, N)
        lat = lat[(lat.real < 0.85) & (lat.imag < 0.85)]
        assert ev.size == lat.size
        dist = np.abs(ev[:, None] - lat[None, :]).min(axis=1)
        assert np.max(dist) <= 1e-6
