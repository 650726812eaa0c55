import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from hookelab.errors import AdmissibilityError
from hookelab.nonlinear import (
    GaussianBump,
    RandomBand,
    cofactor,
    elasticity_identity_residual,
    kinematics,
    kinematics_from_gradient,
    make_initial_data,
    nonlinear_force,
    piola_residual,
    pressure_terms,
    smallness_ratio,
)
from hookelab.params import SimParams
from hookelab.spectral import Grid, l2_norm_physical

from oracles import TrigField, exp_cos_field, reference_force


def constant_gradient(G0, shape=(2, 2, 2)):
    return np.broadcast_to(np.asarray(G0, float)[:, :, None, None, None], (3, 3) + shape).copy()


class TestKinematics:
    def test_rest_state(self):
        g = Grid(8)
        k = kinematics(np.zeros((3,) + g.shape), g)
        eye = np.eye(3)[:, :, None, None, None]
        assert np.all(k.J == 1) and np.all(k.r_eta == 0)
        assert np.array_equal(k.A, np.broadcast_to(eye, k.A.shape))
        assert not np.any(k.A_tilde)

    def test_single_stretch(self):
        eps = 0.07
        k = kinematics_from_gradient(constant_gradient(np.diag([eps, 0.0, 0.0])))
        assert np.allclose(k.J, 1 + eps, rtol=0, atol=1e-15)
        assert np.all(k.r_eta == 0)
        assert np.allclose(k.A[0, 0], 1 / (1 + eps), atol=1e-15)
        assert np.allclose(k.A[1, 1], 1.0) and np.allclose(k.A[0, 1], 0.0)

    def test_decomposition_against_determinant(self):
        g = Grid(32)
        eta = make_initial_data(RandomBand(seed=3, band=3, amplitude=0.02, velocity_amplitude=0.0), SimParams(), g).eta0
        k = kinematics(eta, g)
        assert np.abs(k.grad_eta).max() <= 0.1
        F = np.moveaxis(k.deformation, (0, 1), (-2, -1))
        det = np.linalg.det(F)
        div = k.grad_eta[0, 0] + k.grad_eta[1, 1] + k.grad_eta[2, 2]
        assert np.abs(1 + div + k.r_eta - det).max() <= 1e-12
        assert np.abs(k.J - det).max() <= 1e-12
        # A^T F = I pointwise
        AtF = np.einsum("ki...,kj...->ij...", k.A, k.deformation)
        assert np.abs(AtF - np.eye(3)[:, :, None, None, None]).max() <= 1e-12

    def test_cofactor_of_identity(self):
        I = constant_gradient(np.eye(3))
        assert np.array_equal(cofactor(I), I)

    def test_fold_rejected_with_location(self):
        G = constant_gradient(np.zeros((3, 3)), (4, 4, 4))
        G[0, 0, 1, 2, 3] = -0.8
        with pytest.raises(AdmissibilityError) as info:
            kinematics_from_gradient(G, time=1.5)
        assert info.value.min_j == pytest.approx(0.2)
        assert tuple(info.value.location) == (1, 2, 3)
        assert kinematics_from_gradient(G, check=False).min_j == pytest.approx(0.2)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-0.2, 0.2), min_size=9, max_size=9))
    def test_decomposition_property(self, entries):
        G = constant_gradient(np.reshape(entries, (3, 3)), (1, 1, 1))
        k = kinematics_from_gradient(G)
        det = np.linalg.det(np.eye(3) + np.reshape(entries, (3, 3)))
        assert abs(1 + np.trace(np.reshape(entries, (3, 3))) + k.r_eta.item() - det) <= 1e-14
        assert abs(k.J.item() - det) <= 1e-14


class TestPressureTerms:
    def test_unit_jacobian(self):
        p, rem = pressure_terms(np.ones(5), SimParams())
        assert np.all(rem == 0) and np.allclose(p, 1.0)

    def test_quadratic_law(self):
        params = SimParams(pressure_amp=1.0, pressure_exp=2.0)
        _, rem = pressure_terms(np.array([1 / 1.1]), params)
        assert rem[0] == pytest.approx(0.01, rel=1e-12)

    def test_against_quadrature(self):
        params = SimParams(pressure_amp=1.3, pressure_exp=1.4)
        g, a = params.pressure_exp, params.pressure_amp
        J = np.random.default_rng(4).uniform(0.6, 1.6, 40)
        _, rem = pressure_terms(J, params)
        for Jv, r in zip(J, rem):
            w = 1 / Jv - 1
            ref, _ = quad(lambda z: (w - z) * a * g * (g - 1) * (1 + z) ** (g - 2), 0, w, epsabs=1e-14, epsrel=1e-13)
            assert abs(r - ref) <= 1e-10

    def test_rejects_fold(self):
        with pytest.raises(AdmissibilityError):
            pressure_terms(np.array([0.4, 1.0]), SimParams())


def grid_eval(field, g):
    return field(g.points)


class TestNonlinearForce:
    def test_rest_kinematics(self):
        g = Grid(8)
        u = np.random.default_rng(5).normal(size=(3,) + g.shape)
        f = nonlinear_force(np.zeros_like(u), u, SimParams(), g)
        assert np.abs(f.n_total).max() <= 1e-12

    def test_affine_patch(self):
        g = Grid(8)
        z = np.zeros((3,) + g.shape)
        G0 = [[0.05, -0.02, 0.01], [0.03, -0.04, 0.0], [0.0, 0.02, 0.06]]
        f = nonlinear_force(z, z, SimParams(), g, background_gradient=G0)
        assert np.abs(f.n_u).max() <= 1e-12 and np.abs(f.n_p).max() <= 1e-12

    def test_total_is_sum(self):
        g = Grid(8)
        rng = np.random.default_rng(6)
        eta = 0.01 * grid_eval(TrigField(rng, band=1), g)
        u = 0.01 * grid_eval(TrigField(rng, band=1), g)
        f = nonlinear_force(eta, u, SimParams(), g)
        assert np.array_equal(f.n_total, f.n_p + f.n_u)

    def test_against_finite_differences(self):
        g = Grid(16)
        p = SimParams(mu=1.0, lam=0.5, kappa=100.0, pressure_amp=1.0, pressure_exp=1.4)
        rng = np.random.default_rng(7)
        eta_f = TrigField(rng, band=1).scaled(1e-2)
        u_f = TrigField(rng, band=1).scaled(1e-2)
        ref = reference_force(eta_f, u_f, p.mu, p.lam, p.p_prime_1, p.pressure)(g.points)
        got = nonlinear_force(eta_f(g.points), u_f(g.points), p, g).n_total
        err = l2_norm_physical(got - ref, g) / l2_norm_physical(ref, g)
        assert err <= 1e-3

    def test_quadratic_scaling(self):
        g = Grid(16)
        rng = np.random.default_rng(8)
        eta_f, u_f = TrigField(rng, band=1), TrigField(rng, band=1)
        ratios = []
        for eps in (1e-2, 5e-3, 1e-3, 1e-4):
            f = nonlinear_force(eps * eta_f(g.points), eps * u_f(g.points), SimParams(), g)
            ratios.append(l2_norm_physical(f.n_total, g) / eps**2)
        ratios = np.array(ratios)
        assert ratios.max() / ratios.min() - 1 < 0.1


class TestIdentities:
    def test_rest(self):
        g = Grid(8)
        z = np.zeros((3,) + g.shape)
        assert piola_residual(z, g) == 0.0
        assert elasticity_identity_residual(z, g) == 0.0

    def test_affine(self):
        g = Grid(8)
        z = np.zeros((3,) + g.shape)
        G0 = [[0.05, -0.02, 0.01], [0.03, -0.04, 0.0], [0.0, 0.02, 0.06]]
        assert piola_residual(z, g, background_gradient=G0) == 0.0
        assert elasticity_identity_residual(z, g, background_gradient=G0) <= 1e-15

    def test_piola_refinement(self):
        res = []
        for n in (32, 64):
            g = Grid(n)
            eta, grad = exp_cos_field(g.points, a=2.0)
            assert np.abs(grad).max() == pytest.approx(0.1)
            res.append(piola_residual(eta, g))
        assert res[0] <= 1e-8 and res[1] < res[0]

    def test_elasticity_refinement(self):
        res = []
        for n in (32, 64):
            g = Grid(n)
            eta, _ = exp_cos_field(g.points, a=1.2)
            res.append(elasticity_identity_residual(eta, g))
        assert res[0] <= 1e-8 and res[1] < res[0]

    def test_algebraic_form_is_roundoff(self):
        g = Grid(16)
        eta, _ = exp_cos_field(g.points, a=2.0)
        assert elasticity_identity_residual(eta, g, form="algebraic") <= 1e-12

    def test_unknown_form(self):
        g = Grid(8)
        with pytest.raises(ValueError):
            elasticity_identity_residual(np.zeros((3,) + g.shape), g, form="weak")


class TestInitialData:
    def test_zero_amplitude(self):
        g = Grid(8)
        d = make_initial_data(GaussianBump(0.0), SimParams(), g)
        assert not np.any(d.eta0) and not np.any(d.u0)
        assert d.energy0 == 0.0 and d.smallness_ratio == 0.0

    def test_small_bump_accepted(self):
        g = Grid(16)
        d = make_initial_data(GaussianBump(0.02), SimParams(), g)
        k = kinematics(d.eta0, g)
        assert np.abs(k.grad_eta).max() < 0.05
        assert 0.9 < d.min_j < 1.1

    def test_large_bump_rejected(self):
        g = Grid(16)
        with pytest.raises(AdmissibilityError):
            make_initial_data(GaussianBump(1.0, width=0.4), SimParams(), g)

    def test_unknown_spec(self):
        with pytest.raises(TypeError):
            make_initial_data(object(), SimParams(), Grid(8))

    def test_band_limits(self):
        with pytest.raises(ValueError):
            make_initial_data(RandomBand(seed=0, band=4), SimParams(), Grid(8))

    def test_iterable_and_ratio(self):
        g = Grid(8)
        d = make_initial_data(RandomBand(seed=1, band=2, amplitude=1e-3), SimParams(kappa=50.0), g)
        eta0, u0 = d
        assert eta0 is d.eta0 and u0 is d.u0
        assert d.smallness_ratio == pytest.approx(smallness_ratio(d.energy0, 50.0))

    def test_smallness_ratio_branches(self):
        assert smallness_ratio(0.02, 2.0) == pytest.approx(0.2 / 2.0)
        assert smallness_ratio(2.0, 2.0) == pytest.approx(16.0 / 2.0)
