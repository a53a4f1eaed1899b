import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpkp import gp_solver, kp_solver, transonic
from gpkp.spectral_core import ComplexField2, Grid2, RealField2, derivative, inv_d1
from gpkp.transonic import AmplitudeError, FixedPointNotConvergedError, SlowPair

from conftest import SQRT2, band_limited, mirror, random_liftable_pair

seeds = st.integers(0, 2**32 - 1)
SLOW = Grid2(64, 64, 20.0, 20.0)
eps_values = st.sampled_from([0.1, 0.25, 0.4, 0.6])


def zero_pair(grid=SLOW, eps=0.3):
    z = RealField2.zeros(grid)
    return SlowPair(z, z, eps)


class TestChangeOfVariables:
    def test_constant_state(self):
        g = transonic.fast_grid(SLOW, 0.3)
        sp = transonic.rescale(ComplexField2.ones(g), 0.3)
        assert np.all(sp.N.values == 0) and np.abs(sp.Theta.values).max() == 0

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds, eps=eps_values)
    def test_round_trip(self, seed, eps):
        sp = random_liftable_pair(SLOW, np.random.default_rng(seed), eps)
        back = transonic.rescale(transonic.unrescale(sp.N, sp.Theta, eps), eps)
        assert back.grid.shape == SLOW.shape
        assert (back.grid.L1, back.grid.L2) == pytest.approx((SLOW.L1, SLOW.L2), rel=1e-15)
        np.testing.assert_allclose(back.N.values, sp.N.values, atol=1e-12)
        np.testing.assert_allclose(back.Theta.values, sp.Theta.values, atol=1e-11)

    def test_unrescale_zero(self):
        u = transonic.unrescale(RealField2.zeros(SLOW), RealField2.zeros(SLOW), 0.3)
        assert np.all(u.values == 1.0)

    def test_unrescale_lump_liftable(self):
        N = kp_solver.lump(SLOW)
        u = transonic.unrescale(N, RealField2.zeros(SLOW), 0.3)
        assert np.abs(u.values).min() >= 0.5

    def test_unrescale_lump_amplitude_error(self):
        with pytest.raises(AmplitudeError):
            transonic.unrescale(kp_solver.lump(SLOW), RealField2.zeros(SLOW), 0.9)

    def test_fast_grid_box(self):
        g = transonic.fast_grid(SLOW, 0.2)
        assert g.L1 == pytest.approx(SLOW.L1 / 0.2) and g.L2 == pytest.approx(SQRT2 * SLOW.L2 / 0.04)
        assert transonic.slow_grid(g, 0.2).L2 == pytest.approx(SLOW.L2, rel=1e-15)

    @pytest.mark.parametrize("eps", [0.0, 1.5])
    def test_eps_range(self, eps):
        with pytest.raises(ValueError):
            zero_pair(eps=eps)


class TestExpansions:
    def test_zero_pair(self):
        assert transonic.energy_expansion(zero_pair()) == (0.0, 0.0, 0.0)
        assert transonic.momentum_slow(zero_pair()) == 0.0

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds, eps=eps_values)
    def test_energy_identity(self, seed, eps):
        sp = random_liftable_pair(SLOW, np.random.default_rng(seed), eps)
        E = gp_solver.gl_energy(transonic.unrescale(sp.N, sp.Theta, eps))
        E0, E2, E4 = transonic.energy_expansion(sp)
        assert E0 >= 0
        slow = SQRT2 * eps / 144.0 * (E0 + eps**2 * E2 + eps**4 * E4)
        assert abs(slow - E) <= 1e-8 * E

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds, eps=eps_values)
    def test_momentum_identity(self, seed, eps):
        sp = random_liftable_pair(SLOW, np.random.default_rng(seed), eps)
        p = gp_solver.momentum(transonic.unrescale(sp.N, sp.Theta, eps))
        assert abs(transonic.momentum_slow(sp) - p) <= 1e-10 * abs(p)

    def _derivative_pair(self, eps=0.3):
        f = RealField2(SLOW, band_limited(SLOW, np.random.default_rng(11), 3, 2.0))
        N = derivative(f, 1, 1)
        T = inv_d1(N).field
        return SlowPair(N, T, eps)

    def test_e2_is_kp_energy_when_n_is_d1_theta(self):
        sp = self._derivative_pair()
        np.testing.assert_allclose(sp.T1, sp.N.values, atol=1e-12)
        assert sp.E2 == pytest.approx(kp_solver.energy_kp(sp.N), rel=1e-12)

    def test_momentum_when_n_is_d1_theta(self):
        sp = self._derivative_pair(0.2)
        assert sp.momentum_slow == pytest.approx(0.2 / 72 * kp_solver.mass(sp.N), rel=1e-12)

    def test_e4_denominator_guard(self):
        N = RealField2(SLOW, np.full(SLOW.shape, 10.0))
        with pytest.raises(AmplitudeError):
            transonic.energy_expansion(SlowPair(N, RealField2.zeros(SLOW), 0.9))


class TestRemainders:
    def test_zero(self):
        rf = transonic.remainder_fields(zero_pair())
        for f in (rf.R20, rf.R11, rf.R02, rf.nu20, rf.nu02):
            assert np.all(f.values == 0)

    @settings(max_examples=15, deadline=None)
    @given(seed=seeds, eps=eps_values)
    def test_r11_pointwise_form(self, seed, eps):
        sp = random_liftable_pair(SLOW, np.random.default_rng(seed), eps)
        rf = transonic.remainder_fields(sp)
        s = math.sqrt(1 - eps**2 / 2)
        np.testing.assert_allclose(rf.R11.values, -s / 12.0 * sp.N.values * sp.T2, rtol=1e-14, atol=1e-15)
        for f in (rf.R20, rf.R11, rf.R02, rf.nu20, rf.nu02):
            assert np.all(np.isfinite(f.values))

    def test_l1_bounds_across_eps(self, fixed_point_sweep_pairs):
        eps = sorted(fixed_point_sweep_pairs)
        a, b = zip(*(transonic.remainder_l1(transonic.remainder_fields(fixed_point_sweep_pairs[e]))
                     for e in eps))
        assert max(a) / min(a) < 1.1
        K = [e * e * v for e, v in zip(eps, b)]
        assert all(k <= K[-1] * (1 + 1e-12) for k in K)


class TestResiduals:
    def test_random_pair_is_not_a_solution(self):
        sp = random_liftable_pair(SLOW, np.random.default_rng(3), 0.3)
        assert transonic.residual_slow1(sp) > 1e-1 and transonic.residual_slow2(sp) > 1e-1

    def test_gp_minimizer(self, gp_moderate):
        sp = transonic.rescale(gp_moderate.u, gp_moderate.eps)
        assert transonic.residual_slow1(sp, dealias=False) <= 1e-3
        assert transonic.residual_slow2(sp, dealias=False) <= 1e-3

    @pytest.mark.parametrize("eps", [0.2, 0.4, 0.6])
    def test_one_dimensional_section(self, eps):
        g = Grid2(512, 8, 40.0, 10.0)
        X1, _ = g.mesh
        N, dT = gp_solver.oracle_1d_exact(eps, X1)
        z = RealField2.zeros(g)
        sp = SlowPair(RealField2(g, N), z, eps, dTheta=(RealField2(g, dT), z))
        assert transonic.residual_slow1(sp) <= 1e-8


class TestFixedPoint:
    def test_twc_residual_of_unrescaled_field(self, fixed_point_fine):
        sp = fixed_point_fine.pair
        u = transonic.unrescale(sp.N, sp.Theta, sp.eps)
        assert gp_solver.twc_residual(u, math.sqrt(2 - sp.eps**2)) <= 10 * 1e-9

    def test_map_defect(self, fixed_point_fine):
        sp = fixed_point_fine.pair
        new = transonic.fixed_point_map(sp)
        assert np.linalg.norm(new.values - sp.N.values) / np.linalg.norm(sp.N.values) <= 1e-9

    def test_residuals_below_tol(self, fixed_point_fine):
        assert max(fixed_point_fine.residual1, fixed_point_fine.residual2) <= 1e-9

    def test_symmetry(self, fixed_point_fine):
        sp = fixed_point_fine.pair
        N, T = sp.N.values, sp.Theta.values
        nN, nT = np.abs(N).max(), np.abs(T).max()
        assert np.abs(N - mirror(N, 0)).max() < 1e-8 * nN
        assert np.abs(N - mirror(N, 1)).max() < 1e-8 * nN
        assert np.abs(T + mirror(T, 0)).max() < 1e-8 * nT
        assert np.abs(T - mirror(T, 1)).max() < 1e-8 * nT

    def test_iteration_cap(self):
        with pytest.raises(FixedPointNotConvergedError) as exc:
            transonic.fixed_point_solve(0.3, Grid2(64, 64, 30.0, 30.0), max_iter=2)
        assert exc.value.iterations == 2

    def test_amplitude_loss(self):
        with pytest.raises(AmplitudeError):
            transonic.fixed_point_solve(1.2, Grid2(64, 64, 30.0, 30.0))

    @pytest.mark.parametrize("kw", [{"tol": 0.0}, {"tau": 0.0}, {"tau": 1.5}])
    def test_invalid_arguments(self, kw):
        with pytest.raises(ValueError):
            transonic.fixed_point_solve(0.3, Grid2(64, 64, 30.0, 30.0), **kw)

    def test_restart_from_pair(self, fixed_point_fine):
        res = transonic.fixed_point_solve(0.2, fixed_point_fine.pair, tol=1e-9)
        assert res.iterations <= 3


class TestSigma:
    @settings(max_examples=15, deadline=None)
    @given(seed=seeds, eps=eps_values)
    def test_decomposition_random(self, seed, eps):
        sp = random_liftable_pair(SLOW, np.random.default_rng(seed), eps)
        u = transonic.unrescale(sp.N, sp.Theta, eps)
        gp = gp_solver.GPState(u=u, c=math.sqrt(2 - eps**2), p=gp_solver.momentum(u), E=gp_solver.gl_energy(u))
        rep = transonic.sigma_expansion_check(sp, gp)
        assert abs(rep.sigma_direct - rep.sigma_decomposed) <= 1e-8 * max(abs(gp.p), gp.E)

    def test_decomposition_solver_output(self, fixed_point_fine):
        sp = fixed_point_fine.pair
        gp = gp_solver.make_gp_state(transonic.unrescale(sp.N, sp.Theta, sp.eps), math.sqrt(2 - sp.eps**2))
        rep = transonic.sigma_expansion_check(sp, gp)
        assert rep.decomposition_defect <= 1e-8

    def test_trivial(self):
        sp = zero_pair()
        gp = gp_solver.trivial_state(transonic.fast_grid(SLOW, 0.3))
        rep = transonic.sigma_expansion_check(sp, gp)
        assert rep.sigma_direct == 0 and rep.sigma_decomposed == 0 and rep.leading == 0

    def test_ratio_at_smallest_eps(self, sweep_report):
        assert abs(sweep_report.row(0.10)["sigma_ratio"] - 1.0) <= 0.1


class TestKPBound:
    def test_lower_bound_over_sweep(self, sweep_report):
        assert all(r["kp_lower_holds"] for r in sweep_report.rows)

    def test_gap_shrinks_with_eps(self, sweep_report):
        gaps = [r["kp_gap"] for r in sorted(sweep_report.rows, key=lambda r: -r["eps"])]
        assert all(b <= a * 1.05 for a, b in zip(gaps, gaps[1:]))

    def test_ground_state_equality_case(self):
        # 1024^2 keeps the spacing of the L = 60 runs; the gap is a box effect ~ 1/L^2.
        g = Grid2(1024, 1024, 160.0, 160.0)
        st_ = kp_solver.petviashvili_solve(kp_solver.lump(g))
        s_kp = kp_solver.s_kp_estimate(st_).value
        rep = transonic.kp_bound_check(st_.w, s_kp)
        assert rep.lower_holds and abs(rep.gap) <= 1e-3


class TestSweep:
    def test_convergence_to_ground_state(self, sweep_report):
        rows = sorted(sweep_report.rows, key=lambda r: -r["eps"])
        d = [r["dist_N_N0"] for r in rows]
        assert all(b < a for a, b in zip(d, d[1:]))
        n0 = math.sqrt(sweep_report.mass_N0)
        assert sweep_report.row(0.10)["dist_N_N0"] <= 0.05 * n0

    def test_slope_n_minus_d1_theta(self, sweep_report):
        assert abs(sweep_report.slopes["dist_N_dTheta"]["slope"] - 2.0) <= 0.3

    def test_mass_and_energy_limits(self, sweep_report):
        s = sweep_report.s_kp
        r = sweep_report.row(0.10)
        assert abs(r["mass_dTheta"] - 3 * s) <= 0.05 * 3 * s
        assert abs(r["ekp_dTheta"] + s / 2) <= 0.05 * s / 2

    def test_failure_recorded(self):
        cfg = transonic.SweepConfig(n1=64, n2=64, L1=30.0, L2=30.0, tol=1e-6)
        rep = transonic.sweep([1.2, 0.3], cfg)
        assert 1.2 in rep.failures and "AmplitudeError" in rep.failures[1.2]
        assert [r["eps"] for r in rep.rows] == [0.3]

    def test_empty(self):
        with pytest.raises(ValueError):
            transonic.sweep([])

    def test_report_files(self, sweep_report, tmp_path):
        jp, cp = sweep_report.write(tmp_path)
        data = json.loads(jp.read_text())
        assert len(data["rows"]) == 4 and data["slopes"]["dist_N_dTheta"]["range"] == [0.1, 0.3]
        rows = list(csv.DictReader(open(cp)))
        assert [float(r["eps"]) for r in rows] == [0.3, 0.2, 0.15, 0.1]
        assert float(rows[0]["E0"]) == sweep_report.row(0.3)["E0"]
