import numpy as np
import pytest

from bsweyl.density import (ActionMap, ComplexWindow,
                            EmptyGridError, SingularActionMapError,
                            action_map_integrable, ellipticity_margin_check,
                            omega_density, preimage_volume, weyl_density,
                            weyl_density_torus)
from bsweyl.flow import Deformation, DeformedSymbol
from bsweyl.symbols import (DimensionMismatchError, SymbolExpr, cho,
                            coupling_xx, torus_coupled, torus_linear)
from bsweyl.variation import TestFunction

from oracles import bisection_invert_2d

TWO_PI_SQ = (2 * np.pi) ** 2


class TestWindow:
    def test_geometry(self):
        win = ComplexWindow.from_bounds(0.0, 1.0, -0.5, 0.5, (10, 20))
        assert win.center == pytest.approx(0.5 + 0j)
        assert win.area == pytest.approx(1.0)
        assert win.cell_area == pytest.approx(0.1 * 0.05)
        z = win.centers_complex()
        assert z.shape == (10, 20)
        assert np.all(win.contains(z))

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            ComplexWindow(0j, (0.0, 1.0))
        with pytest.raises(ValueError):
            ComplexWindow(0j, (1.0, 1.0), (1, 8))


class TestWeylDensity:
    def test_cho_pushforward_is_flat_two_pi_squared(self):
        # pushforward of dx dxi under the two harmonic actions is
        # (2 pi)^2 dr1 dr2, so w = (2 pi)^2 inside the image quadrant
        p = cho(1.0, complex(0.5, 0.5))
        win = ComplexWindow.from_bounds(0.0, 1.0, 0.0, 1.0, (16, 16))
        grid = weyl_density(p, win, box_radius=2.5, samples=4_000_000, seed=7)
        dev = np.abs(grid.values - TWO_PI_SQ)
        assert np.all(dev <= 3 * grid.stderr)
        assert grid.values.mean() == pytest.approx(TWO_PI_SQ, rel=0.01)

    def test_torus_linear_constant(self):
        win = ComplexWindow.from_bounds(-0.4, 0.4, -0.4, 0.4, (16, 16))
        grid = weyl_density_torus(torus_linear(), win,
                                  ((-0.6, 0.6), (-0.6, 0.6)),
                                  samples=2_000_000, seed=3)
        assert np.all(np.abs(grid.values - TWO_PI_SQ) <= 3 * grid.stderr)

    def test_identity_map_dimension_one(self):
        # p = xi + i x in one dimension pushes Lebesgue to Lebesgue: w = 1
        p = (SymbolExpr.monomial(1.0, (0,), (1,), n=1)
             + SymbolExpr.monomial(1j, (1,), (0,), n=1))
        win = ComplexWindow.from_bounds(-1.0, 1.0, -1.0, 1.0, (8, 8))
        grid = weyl_density(p, win, box_radius=2.0, samples=500_000, seed=1)
        assert np.all(np.abs(grid.values - 1.0) <= 3 * grid.stderr)

    def test_deformed_density_changes_near_image_edge(self):
        base = cho(1.0, 0.0)
        ps = DeformedSymbol(base, Deformation((coupling_xx(),)), 0.2)
        win = ComplexWindow.from_bounds(-0.15, 0.15, 0.6, 1.2, (6, 6))
        g0 = weyl_density(base, win, box_radius=3.0, samples=4_000_000, seed=4)
        gt = weyl_density(ps, win, box_radius=3.0, samples=4_000_000, seed=5)
        z = np.abs(gt.values - g0.values) / np.hypot(gt.stderr, g0.stderr)
        assert np.max(z) > 5.0

    def test_empty_window_raises(self):
        p = cho(1.0, 0.0)
        win = ComplexWindow.from_bounds(-9.0, -8.0, -9.0, -8.0, (4, 4))
        with pytest.raises(EmptyGridError):
            weyl_density(p, win, box_radius=2.0, samples=10_000, seed=0)

    def test_deterministic_given_seed(self):
        p = cho(1.0, complex(0.5, 0.5))
        win = ComplexWindow.from_bounds(0.0, 1.0, 0.0, 1.0, (8, 8))
        a = weyl_density(p, win, box_radius=2.5, samples=200_000, seed=11)
        b = weyl_density(p, win, box_radius=2.5, samples=200_000, seed=11)
        assert np.array_equal(a.values, b.values)

    def test_mass_bookkeeping(self):
        # integrating the grid approximates the preimage volume of the window
        p = cho(1.0, complex(0.5, 0.5))
        win = ComplexWindow.from_bounds(0.0, 0.5, 0.0, 0.5, (8, 8))
        grid = weyl_density(p, win, box_radius=2.5, samples=2_000_000, seed=2)
        vol, err = preimage_volume(p, win, box_radius=2.5, samples=2_000_000,
                                   seed=12)
        assert grid.total_mass == pytest.approx(vol, abs=6 * err + 1e-9)


class TestTorusQuadratureRoute:
    def test_mass_matches_jacobian_route(self):
        ptilde = torus_coupled(0.3)
        win = ComplexWindow.from_bounds(-0.3, 0.3, -0.3, 0.3, (8, 8))
        gq = weyl_density_torus(ptilde, win, ((-0.5, 0.5), (-0.5, 0.5)),
                                quadrature_order=1024)
        am = action_map_integrable(ptilde)
        go = omega_density(am, win)
        assert gq.method == "tensor-quadrature"
        assert np.all(gq.stderr == 0)
        assert gq.total_mass == pytest.approx(go.total_mass, rel=2e-3)

    def test_rejects_angle_dependence(self):
        bad = SymbolExpr.monomial(1.0, (1, 0), (0, 0))
        win = ComplexWindow.from_bounds(-0.3, 0.3, -0.3, 0.3, (8, 8))
        with pytest.raises(ValueError):
            weyl_density_torus(bad, win, ((-0.5, 0.5), (-0.5, 0.5)),
                               samples=1000)

    def test_sheared_model_matches_jacobian_formula(self):
        # ptilde = (eta1 + 0.1 eta2^2) + i eta2 is a shear: the Jacobian
        # determinant is 1, so w = (2 pi)^2 pointwise
        ptilde = (SymbolExpr.monomial(1.0, (0, 0), (1, 0))
                  + SymbolExpr.monomial(0.1, (0, 0), (0, 2))
                  + SymbolExpr.monomial(1j, (0, 0), (0, 1)))
        win = ComplexWindow.from_bounds(-0.3, 0.3, -0.3, 0.3, (8, 8))
        grid = weyl_density_torus(ptilde, win, ((-0.5, 0.5), (-0.5, 0.5)),
                                  samples=4_000_000, seed=6)
        am = action_map_integrable(ptilde)
        want = omega_density(am, win).values
        assert np.allclose(want, TWO_PI_SQ, rtol=1e-12)
        assert np.max(np.abs(grid.values - want) / want) <= 0.02


class TestActionMap:
    def test_linear_model_closed_form(self):
        am = action_map_integrable(torus_linear(), I0=(0.0, 0.0))
        z = np.array([0.3 - 0.2j, -0.1 + 0.05j])
        I, dI = am.actions_and_jacobian(z)
        assert np.allclose(I, 2 * np.pi * np.stack([z.real, z.imag], axis=-1))
        assert np.allclose(dI, 2 * np.pi * np.eye(2))

    def test_coupled_model_matches_bisection_oracle(self):
        c = 0.3
        ptilde = torus_coupled(c)
        am = action_map_integrable(ptilde)
        z = 0.1 + 0.05j

        def fn(e1, e2):
            return complex(e1 + 1j * e2 + c * e1 * e2)

        eta_oracle = bisection_invert_2d(fn, z)
        eta, ok = am.eta_of_z(np.array([z]))
        assert ok.all()
        assert np.max(np.abs(eta[0] - eta_oracle)) <= 1e-8

    def test_harmonic_action_map_reproduces_lattice(self):
        # cho(1,0) torus normal form is the linear model with I0=0; the
        # BS route built on it is checked against the exact spectrum in
        # the quantize tests -- here just the action values
        am = action_map_integrable(torus_linear())
        I, _ = am.actions_and_jacobian(np.array([0.35 + 0.15j]))
        assert I[0] == pytest.approx([2 * np.pi * 0.35, 2 * np.pi * 0.15])

    def test_constant_sign_check(self):
        am = action_map_integrable(torus_coupled(0.3))
        win = ComplexWindow.from_bounds(-0.4, 0.4, -0.4, 0.4, (8, 8))
        assert am.constant_sign_on(win)
        # fold model: eta1^2 changes orientation across eta1 = 0
        fold = (SymbolExpr.monomial(1.0, (0, 0), (2, 0))
                + SymbolExpr.monomial(1j, (0, 0), (0, 1)))
        am2 = action_map_integrable(fold)
        win2 = ComplexWindow.from_bounds(0.2, 0.6, -0.2, 0.2, (4, 4))
        # Newton from eta = (Re z, Im z) lands on the positive branch:
        # sign is constant there
        assert am2.constant_sign_on(win2)

    def test_singular_map_raises(self):
        # ptilde = eta1^2 + i eta2 has a fold at eta1 = 0: Newton from
        # points across the fold cannot converge for Re z < 0
        ptilde = (SymbolExpr.monomial(1.0, (0, 0), (2, 0))
                  + SymbolExpr.monomial(1j, (0, 0), (0, 1)))
        am = action_map_integrable(ptilde)
        with pytest.raises(SingularActionMapError):
            am.actions_and_jacobian(np.array([-0.5 + 0.1j]))


class TestOmegaDensity:
    def test_linear_model_flat(self):
        am = action_map_integrable(torus_linear())
        win = ComplexWindow.from_bounds(-0.4, 0.4, -0.4, 0.4, (16, 16))
        grid = omega_density(am, win)
        assert grid.method == "jacobian-formula"
        assert np.allclose(grid.values, TWO_PI_SQ, rtol=1e-12)
        assert np.all(grid.stderr == 0)

    def test_coupled_model_closed_form(self):
        c = 0.3
        am = action_map_integrable(torus_coupled(c))
        win = ComplexWindow.from_bounds(-0.4, 0.4, -0.4, 0.4, (8, 8))
        grid = omega_density(am, win)
        z = win.centers_complex()
        want = TWO_PI_SQ / np.abs(1 + c * z.imag)
        assert np.allclose(grid.values, want, rtol=1e-10)

    def test_positive_on_window(self):
        am = action_map_integrable(torus_coupled(0.3))
        win = ComplexWindow.from_bounds(-0.4, 0.4, -0.4, 0.4, (8, 8))
        assert np.all(omega_density(am, win).values > 0)

    def test_integrable_equality_cellwise(self):
        # the w = omega identity for the coupled model, at modest size
        ptilde = torus_coupled(0.3)
        win = ComplexWindow.from_bounds(-0.4, 0.4, -0.4, 0.4, (32, 32))
        w = weyl_density_torus(ptilde, win, ((-0.6, 0.6), (-0.6, 0.6)),
                               samples=2_000_000, seed=5)
        o = omega_density(action_map_integrable(ptilde), win)
        dev = np.abs(w.values - o.values)
        allow = np.maximum(3 * w.stderr, 0.03 * o.values)
        assert np.all(dev <= allow)

    def test_deformation_leaves_omega_unchanged(self):
        from bsweyl.density import omega_density_deformed
        base = cho(1.0, complex(0.5, 0.5))
        ps = DeformedSymbol(base, Deformation((coupling_xx(),)), 0.25)
        am = action_map_integrable(torus_linear())
        win = ComplexWindow.from_bounds(-0.2, 0.2, -0.2, 0.2, (8, 8))
        a = omega_density(am, win)
        b = omega_density_deformed(ps, am, win)
        assert np.array_equal(a.values, b.values)


class TestPreimageVolume:
    def test_cho_rectangle_volume(self):
        # vol(p^{-1}([0,a]x[0,b])) = (2 pi)^2 a b in shifted coordinates
        p = cho(1.0, complex(0.5, 0.5))
        a, b = 0.6, 0.4
        vol, err = preimage_volume(p, (0.0, a, 0.0, b), box_radius=2.5,
                                   samples=2_000_000, seed=3)
        assert abs(vol - TWO_PI_SQ * a * b) <= 3 * err

    def test_empty_window(self):
        p = cho(1.0, 0.0)
        vol, _ = preimage_volume(p, (-5.0, -4.0, -5.0, -4.0), box_radius=2.0,
                                 samples=100_000, seed=0)
        assert vol == 0.0

    def test_additivity(self):
        p = cho(1.0, complex(0.5, 0.5))
        kw = dict(box_radius=2.5, samples=1_000_000)
        v1, e1 = preimage_volume(p, (0.0, 0.3, 0.0, 0.5), seed=21, **kw)
        v2, e2 = preimage_volume(p, (0.3, 0.6, 0.0, 0.5), seed=22, **kw)
        v12, e12 = preimage_volume(p, (0.0, 0.6, 0.0, 0.5), seed=23, **kw)
        assert abs(v12 - (v1 + v2)) <= 3 * np.hypot(e12, np.hypot(e1, e2))


class TestDimensionHandling:
    def test_weyl_density_any_dimension(self):
        # n = 1 works (checked above); n = 3 separable oscillator too
        terms = []
        for j in range(3):
            xp = [0, 0, 0]
            xip = [0, 0, 0]
            xp[j] = 2
            xip[j] = 2
            coeff = [1.0, 1j, 0.5 + 0.5j][j]
            terms.append(SymbolExpr.monomial(0.5 * coeff, xp, (0, 0, 0), n=3)
                         + SymbolExpr.monomial(0.5 * coeff, (0, 0, 0), xip, n=3))
        p3 = terms[0] + terms[1] + terms[2]
        win = ComplexWindow.from_bounds(0.5, 1.5, 0.5, 1.5, (4, 4))
        grid = weyl_density(p3, win, box_radius=2.0, samples=200_000, seed=9)
        assert grid.meta["n"] == 3
        assert grid.values.shape == (4, 4)

    def test_omega_side_requires_n_2(self):
        p1 = SymbolExpr.monomial(1.0, (0,), (1,), n=1)
        with pytest.raises(DimensionMismatchError):
            action_map_integrable(p1)


class TestEllipticityMargin:
    def test_oscillator_box_is_clean(self):
        p = cho(1.0, complex(0.5, 0.5))
        win = ComplexWindow.from_bounds(0.0, 1.0, 0.0, 1.0, (8, 8))
        ok, margin = ellipticity_margin_check(p, win, box_radius=2.5)
        assert ok and margin > 0.2 * win.diameter

    def test_too_small_box_flagged(self):
        p = cho(1.0, complex(0.5, 0.5))
        win = ComplexWindow.from_bounds(0.0, 2.0, 0.0, 2.0, (8, 8))
        ok, _ = ellipticity_margin_check(p, win, box_radius=1.5)
        assert not ok


class TestPushforwardConsistency:
    def test_smooth_functional_agreement(self):
        # sum_cells f(z) w area  vs  MC average of f(p(rho)) * boxvol,
        # independent seeds, within 3 combined standard errors
        p = cho(1.0, complex(0.5, 0.5))
        win = ComplexWindow.from_bounds(0.0, 1.0, 0.0, 1.0, (32, 32))
        f = TestFunction(0.5 + 0.5j, 0.3)
        grid = weyl_density(p, win, box_radius=2.5, samples=2_000_000, seed=31)
        side_a = grid.integral(f.value)
        err_a = float(np.sqrt(np.sum((f.value(win.centers_complex())
                                      * grid.stderr * win.cell_area) ** 2)))
        rng = np.random.default_rng(32)
        m = 2_000_000
        pts = rng.uniform(-2.5, 2.5, (m, 4))
        vals = f.value(p.evaluate(pts[:, :2], pts[:, 2:]))
        boxvol = 5.0 ** 4
        side_b = boxvol * float(np.mean(vals))
        err_b = boxvol * float(np.std(vals)) / np.sqrt(m)
        assert abs(side_a - side_b) <= 3 * np.hypot(err_a, err_b)
