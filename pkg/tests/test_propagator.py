import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hookelab.integrator import mode_oracle
from hookelab.params import SimParams
from hookelab.propagator import (
    CRITICAL,
    OVERDAMPED,
    UNDERDAMPED,
    LatticePropagator,
    PropagatorBlock,
    RadialProfile,
    assemble_green,
    block_propagator,
    char_roots,
    compressible_block,
    critical_wavenumber,
    duhamel_weights,
    linear_trajectory,
    mode_matrix,
    radial_decay_norm,
    radial_norms,
    root_asymptotics,
    solenoidal_block,
)
from hookelab.spectral import Grid, to_spectral

from oracles import expm_taylor

ENTRIES = ("g11", "g12", "g21", "g22")


def block_at(cv, cs, xi, t):
    return block_propagator(char_roots(xi, cv, cs), cv, cs, xi, t)


def rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


class TestCharRoots:
    def test_zero_wavenumber(self):
        r = char_roots(0.0, 1.0, 1.0)
        assert r.gamma_plus == 0 and r.gamma_minus == 0
        assert r.regime == UNDERDAMPED

    def test_double_root(self):
        r = char_roots(2.0, 1.0, 1.0)
        assert r.gamma_plus == pytest.approx(-2.0, abs=1e-12)
        assert r.gamma_minus == pytest.approx(-2.0, abs=1e-12)
        assert r.regime == CRITICAL

    def test_underdamped_unit(self):
        r = char_roots(1.0, 1.0, 1.0)
        roots = sorted([r.gamma_plus, r.gamma_minus], key=lambda z: z.imag)
        assert roots[0] == pytest.approx(-0.5 - 0.8660254037844386j, abs=1e-15)
        assert roots[1] == pytest.approx(-0.5 + 0.8660254037844386j, abs=1e-15)

    def test_overdamped_label(self):
        assert char_roots(3.0, 1.0, 1.0).regime == OVERDAMPED

    @pytest.mark.parametrize("cv, cs", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_rejects_nonpositive(self, cv, cs):
        with pytest.raises(ValueError):
            char_roots(1.0, cv, cs)

    def test_rejects_negative_wavenumber(self):
        with pytest.raises(ValueError):
            char_roots(-1.0, 1.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(0.05, 20.0),
        st.floats(0.05, 1e4),
        st.floats(0.0, 5.0),
    )
    def test_vieta_and_stability(self, cv, cs, frac):
        xi = frac * critical_wavenumber(cv, cs)
        r = char_roots(xi, cv, cs)
        # relative to the root size: the sum may be far smaller than either root
        big = max(abs(r.gamma_plus), abs(r.gamma_minus), 1e-300)
        assert abs(r.gamma_plus + r.gamma_minus + cv * xi * xi) <= 1e-12 * big
        prod = cs * xi * xi
        assert abs(r.gamma_plus * r.gamma_minus - prod) <= 1e-12 * max(prod, 1e-300)
        assert r.gamma_plus.real <= 0 and r.gamma_minus.real <= 0


class TestRootAsymptotics:
    def test_low_branch_richardson(self):
        cv, cs = 1.0, 1.0
        ratios = []
        for xi in 0.1 / 2.0 ** np.arange(6):
            exact = char_roots(xi, cv, cs)
            approx = root_asymptotics(xi, cv, cs, "low")
            err = max(abs(exact.gamma_plus - approx.gamma_plus), abs(exact.gamma_minus - approx.gamma_minus))
            err = min(err, max(abs(exact.gamma_plus - approx.gamma_minus), abs(exact.gamma_minus - approx.gamma_plus)))
            ratios.append(err / xi**3)
        assert max(ratios) < 1.0
        assert ratios[-1] <= 1.1 * ratios[0]

    def test_low_branch_real_part_exact(self):
        xi = np.array([0.1, 0.5, 1.5])
        a = root_asymptotics(xi, 1.3, 2.0, "low")
        assert np.array_equal(a.gamma_plus.real, -0.5 * 1.3 * xi * xi)
        assert np.allclose(char_roots(xi, 1.3, 2.0).gamma_plus.real, a.gamma_plus.real, rtol=1e-14)

    def test_high_branch(self):
        exact = char_roots(100.0, 1.0, 1.0)
        approx = root_asymptotics(100.0, 1.0, 1.0, "high")
        assert approx.gamma_plus.real == -1.0
        assert abs(exact.gamma_plus - approx.gamma_plus) < 2e-4
        assert abs(exact.gamma_plus - approx.gamma_plus) > 1e-6

    def test_wrong_branch(self):
        with pytest.raises(ValueError):
            root_asymptotics(5.0, 1.0, 1.0, "low")
        with pytest.raises(ValueError):
            root_asymptotics(0.5, 1.0, 1.0, "high")
        with pytest.raises(ValueError):
            root_asymptotics(0.5, 1.0, 1.0, "middle")


class TestBlock:
    def test_identity_at_zero_time(self):
        b = block_at(1.0, 1.0, np.array([0.0, 0.7, 2.0, 9.0]), 0.0)
        assert np.all(b.g11 == 1) and np.all(b.g22 == 1)
        assert np.all(b.g12 == 0) and np.all(b.g21 == 0)

    def test_double_root_values(self):
        b = block_at(1.0, 1.0, 2.0, 1.0)
        e2 = math.exp(-2.0)
        assert complex(b.g11) == pytest.approx(3 * e2, abs=1e-14)
        assert complex(b.g12) == pytest.approx(e2, abs=1e-14)
        assert complex(b.g21) == pytest.approx(-4 * e2, abs=1e-14)
        assert complex(b.g22) == pytest.approx(-e2, abs=1e-14)
        assert float(np.real(b.g11)) == pytest.approx(0.40600584970983811, rel=1e-14)

    def test_matches_rk4_oracle(self):
        rng = np.random.default_rng(0)
        n = 200
        cv, cs = rng.uniform(0.5, 3.0, n), rng.uniform(0.5, 10.0, n)
        xi = rng.uniform(0, 2.5, n) * critical_wavenumber(cv, cs)
        t = rng.uniform(0, 0.5, n)
        roots = char_roots(xi, cv, cs)
        b = block_propagator(roots, cv, cs, xi, t)
        steps = np.maximum(1, np.ceil(t * np.abs(roots.gamma_minus) / 0.01)).astype(int)
        v0 = np.array([1.0, -0.4])[:, None]
        ref = mode_oracle(xi, cv, cs, v0, t, steps)
        got = np.array(b.apply(1.0, -0.4))
        err = np.max(np.abs(got - ref), axis=0) / np.max(np.abs(ref), axis=0)
        assert err.max() <= 1e-6

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            block_at(1.0, 1.0, 1.0, -0.1)

    def test_continuous_across_critical(self):
        cv, cs = 2.0, 3.0
        crit = critical_wavenumber(cv, cs)
        at = block_at(cv, cs, crit, 0.7)
        for eps in (1e-9, -1e-9, 1e-7, -1e-7):
            near = block_at(cv, cs, crit * (1 + eps), 0.7)
            for k in ENTRIES:
                assert abs(getattr(near, k) - getattr(at, k)) < 1e-5 * max(abs(getattr(at, k)), 1e-3)

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(0.1, 5.0),
        st.floats(0.1, 200.0),
        st.one_of(st.floats(0.0, 4.0), st.floats(1 - 1e-6, 1 + 1e-6)),
        st.floats(0.0, 3.0),
        st.floats(0.0, 3.0),
    )
    def test_trace_det_semigroup(self, cv, cs, frac, t1, t2):
        xi = frac * critical_wavenumber(cv, cs)
        r = char_roots(xi, cv, cs)
        b1, b2 = block_at(cv, cs, xi, t1), block_at(cv, cs, xi, t2)
        tr = np.exp(r.gamma_plus * t1) + np.exp(r.gamma_minus * t1)
        assert abs(b1.trace - tr) <= 1e-10 * max(abs(tr), 1e-300) + 1e-300
        det = np.exp(-cv * xi * xi * t1)
        # g11 g22 - g12 g21 cancels when the determinant is tiny next to the entries
        det_scale = max(det, abs(b1.g11 * b1.g22), abs(b1.g12 * b1.g21))
        assert abs(b1.det - det) <= 1e-10 * det_scale + 1e-300
        both = block_at(cv, cs, xi, t1 + t2)
        comp = b2 @ b1
        scale = max(abs(getattr(both, k)) for k in ENTRIES)
        for k in ENTRIES:
            assert abs(getattr(comp, k) - getattr(both, k)) <= 1e-10 * max(scale, 1e-300)


class TestModeBounds:
    """Sub-critical envelope exp(-c |xi|^2 t/4) and super-critical exp(-R t)."""

    @staticmethod
    def envelope_constant(cv, cs, r_min, n_r=300, n_t=300):
        crit = critical_wavenumber(cv, cs)
        r = np.geomspace(r_min, crit * (1 - 1e-9), n_r)[:, None]
        t_max = 60.0 / (cv * r_min * r_min)
        t = np.concatenate([[0.0], np.geomspace(1e-3, t_max, n_t)])[None, :]
        b = block_at(cv, cs, r, t)
        log_env = -0.25 * cv * r * r * t
        scaled = {
            "g11": b.g11, "g21": b.g21 / np.maximum(r, 1.0), "g22": b.g22, "xi*g12": r * b.g12,
            "g12": b.g12,
        }
        with np.errstate(divide="ignore"):
            return {k: float(np.exp(np.max(np.log(np.abs(v)) - log_env))) for k, v in scaled.items()}

    @pytest.mark.parametrize("params", [SimParams(), SimParams(mu=0.3, lam=2.0, kappa=5.0)])
    def test_low_frequency_envelope(self, params):
        for cv, cs in (
            (params.visc_compressible, params.stiff_compressible),
            (params.visc_solenoidal, params.stiff_solenoidal),
        ):
            coarse = self.envelope_constant(cv, cs, 1e-2)
            fine = self.envelope_constant(cv, cs, 1e-3)
            for k in ("g11", "g21", "g22", "xi*g12"):
                assert np.isfinite(coarse[k])
                # one constant serves the whole sample set
                assert fine[k] <= 1.05 * coarse[k] + 1e-12, k

    def test_bare_displacement_velocity_entry_grows_at_low_frequency(self):
        # g12 ~ sin(sqrt(s)|xi|t)/(sqrt(s)|xi|): no uniform constant in |xi| -> 0
        coarse = self.envelope_constant(1.0, 1.0, 1e-2)["g12"]
        fine = self.envelope_constant(1.0, 1.0, 1e-3)["g12"]
        assert fine > 5 * coarse

    def test_high_frequency_envelope_fitted_rate(self):
        cv, cs = 2.0, 101.4
        crit = critical_wavenumber(cv, cs)
        r = np.geomspace(crit * (1 + 1e-9), 50 * crit, 400)[:, None]
        t = np.linspace(0, 5, 400)[None, :]
        rate = float(np.min(-char_roots(r, cv, cs).gamma_plus.real))
        assert rate > 0
        b = block_at(cv, cs, r, t)
        env = np.exp(-rate * t)
        for k in ("g11", "g12", "g22"):
            assert np.max(np.abs(getattr(b, k)) / env) < 10.0
        assert np.max(np.abs(b.g21) / env) < 10.0 * cs


class TestGreenMatrix:
    def test_parallel_mode_is_compressible(self):
        p = SimParams(kappa=3.0)
        xi = np.array([0.3, -0.4, 1.2])
        r = np.linalg.norm(xi)
        G = assemble_green(p, xi, 0.8)
        eta, u = G.apply(0.5 * xi, -1.5 * xi)
        c = compressible_block(p, r, 0.8)
        a, b = c.apply(0.5, -1.5)
        assert np.allclose(eta, complex(a) * xi, atol=1e-15)
        assert np.allclose(u, complex(b) * xi, atol=1e-15)

    def test_perpendicular_mode_is_solenoidal(self):
        p = SimParams(kappa=3.0)
        xi = np.array([0.3, -0.4, 1.2])
        v = np.cross(xi, [1.0, 0.0, 0.0])
        G = assemble_green(p, xi, 0.8)
        eta, u = G.apply(v, np.zeros(3))
        s = solenoidal_block(p, np.linalg.norm(xi), 0.8)
        assert np.allclose(eta, complex(s.g11) * v, atol=1e-15)
        assert np.allclose(u, complex(s.g21) * v, atol=1e-15)

    def test_against_taylor_exponential(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = SimParams(
                mu=rng.uniform(0.2, 2), lam=rng.uniform(0, 2), kappa=rng.uniform(0.5, 20),
                pressure_exp=rng.uniform(1.0, 2.0),
            )
            xi, t = rng.normal(size=3), rng.uniform(0, 1.5)
            ref = expm_taylor(mode_matrix(p, xi) * t)
            assert rel(assemble_green(p, xi, t).matrix, ref) <= 1e-8

    def test_zero_wavevector_affine_drift(self):
        G = assemble_green(SimParams(), np.zeros(3), 2.5).matrix
        want = np.eye(6)
        want[:3, 3:] = 2.5 * np.eye(3)
        assert np.array_equal(G, want)


class TestLinearTrajectory:
    @pytest.fixture
    def state(self):
        g = Grid(8)
        rng = np.random.default_rng(2)
        return g, to_spectral(rng.normal(size=(3,) + g.shape), g), to_spectral(rng.normal(size=(3,) + g.shape), g)

    def test_time_zero_is_initial(self, state):
        g, e, u = state
        (e0, u0), = linear_trajectory((e, u), [0.0], SimParams(), g)
        assert np.array_equal(e0, e) and np.array_equal(u0, u)

    def test_semigroup(self, state):
        g, e, u = state
        p = SimParams(kappa=7.0)
        two = linear_trajectory((e, u), [0.3, 0.75], p, g)[-1]
        one = LatticePropagator(p, g).apply(e, u, 0.75)
        assert rel(two[0], one[0]) <= 1e-10 and rel(two[1], one[1]) <= 1e-10

    def test_rejects_bad_times(self, state):
        g, e, u = state
        with pytest.raises(ValueError):
            linear_trajectory((e, u), [-1.0], SimParams(), g)
        with pytest.raises(ValueError):
            linear_trajectory((e, u), [1.0, 0.5], SimParams(), g)


class TestDuhamelWeights:
    @pytest.mark.parametrize("xi", [0.0, 1e-3, 0.4, 2.0, 11.0])
    def test_against_augmented_exponential(self, xi):
        cv, cs, h = 2.0, 101.4, 0.01
        w = duhamel_weights(cv, cs, np.array([xi]), h)
        B = np.array([[0.0, 1.0], [-cs * xi * xi, -cv * xi * xi]])
        # [[B, e2, 0], [0, 0, 1/h], [0, 0, 0]] yields both weights in its exponential
        M = np.zeros((4, 4))
        M[:2, :2] = B
        M[1, 2] = 1.0
        M[2, 3] = 1.0 / h
        E = expm_taylor(M * h, terms=60)
        assert w.w1_top[0] == pytest.approx(E[0, 2], rel=1e-10, abs=1e-18)
        assert w.w1_bot[0] == pytest.approx(E[1, 2], rel=1e-10, abs=1e-18)
        # E[:, 3] = (1/h) int (h - s) e^{sB} e2 ds
        assert w.w2_top[0] == pytest.approx(E[0, 3], rel=1e-10, abs=1e-18)
        assert w.w2_bot[0] == pytest.approx(E[1, 3], rel=1e-10, abs=1e-18)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            duhamel_weights(1.0, 1.0, np.array([1.0]), 0.0)


class TestRadial:
    def test_initial_gaussian_integral(self):
        prof = RadialProfile.gaussian("displacement")
        eta, u = radial_norms(SimParams(), prof, 0.0, kmax=0)
        assert eta[0] == pytest.approx(2 * math.pi**1.5, rel=1e-8)
        assert u[0] == 0.0

    def test_heat_kernel_scaling(self):
        def diffusion(r, t):
            g = np.exp(-r * r * t) + 0j
            z = np.zeros_like(g)
            return PropagatorBlock(g, z, z, g), PropagatorBlock(z, z, z, z)

        prof = RadialProfile.gaussian("displacement")
        times = np.array([1e3, 1e4, 1e5])
        vals = np.array([radial_decay_norm(SimParams(), prof, t, 0, blocks=diffusion) for t in times])
        exact = math.pi**1.5 * (1 + 2 * times) ** -1.5
        assert np.allclose(vals, exact, rtol=1e-8)
        slope = np.polyfit(np.log(times), np.log(vals), 1)[0]
        assert slope == pytest.approx(-1.5, abs=1e-3)

    def test_zeroth_order_decay(self):
        p = SimParams(kappa=1.0)
        prof = RadialProfile.gaussian("displacement")
        times = np.geomspace(100, 1e4, 8)
        vals = [radial_decay_norm(p, prof, t, 0) for t in times]
        slope = np.polyfit(np.log1p(times), np.log(vals), 1)[0]
        assert slope == pytest.approx(-1.5, abs=0.05)

    def test_non_decaying_profile_rejected(self):
        one = lambda r: np.ones_like(np.asarray(r, dtype=float))  # noqa: E731
        prof = RadialProfile(one, one, one, one, r_max=5.0)
        with pytest.raises(ValueError):
            radial_norms(SimParams(), prof, 1.0, kmax=0)

    def test_bad_arguments(self):
        prof = RadialProfile.gaussian()
        with pytest.raises(ValueError):
            radial_norms(SimParams(), prof, -1.0)
        with pytest.raises(ValueError):
            radial_decay_norm(SimParams(), prof, 1.0, -1)
        with pytest.raises(ValueError):
            RadialProfile.gaussian("pressure")
