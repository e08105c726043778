import math

import numpy as np
import pytest

from boltzlab.phase import (
    DistributionField,
    PhaseGrid,
    maxwellian_field,
    random_sandwiched_field,
    sandwich_check,
)
from boltzlab.collision import QuadratureScheme
from boltzlab.transport import (
    MildIntegratorConfig,
    evolve,
    g_transform,
    mild_step,
    roundtrip_discrepancy,
    sharp_transform,
    unsharp_transform,
)


class TestSharpTransforms:
    def test_identity_at_t0(self, medium_grid, params):
        f = random_sandwiched_field(medium_grid, params, seed=1)
        lab = DistributionField(f.values.copy(), frame="lab", time=0.0)
        sharp = sharp_transform(lab, medium_grid, params)
        np.testing.assert_array_equal(sharp.values, lab.values)
        back = unsharp_transform(sharp, medium_grid, params)
        np.testing.assert_array_equal(back.values, lab.values)

    def test_travelling_maxwellian_becomes_static(self, params):
        # lab frame M(x - t v, v) maps to the time-independent M(x, v); the
        # residual is the zero-extension loss at source points outside the
        # box, bounded by exp(-(x_extent - dx/2)^2 / 2) at t = 1 and
        # shrinking with the box size
        errs = {}
        for tol in (1e-10, 1e-14):
            grid = PhaseGrid.for_params(params, nx=12, nv=8, truncation_tol=tol)
            lab = maxwellian_field(grid, params, frame="lab", time=1.0)
            sharp = sharp_transform(lab, grid, params)
            expect = maxwellian_field(grid, params, frame="sharp", time=1.0)
            errs[tol] = np.abs(sharp.values - expect.values).max()
            shell = math.exp(-0.5 * (grid.x_extent - grid.dx / 2) ** 2)
            assert errs[tol] < shell
        assert errs[1e-14] < 0.1 * errs[1e-10]

    def test_travelling_maxwellian_short_time(self, params):
        grid = PhaseGrid.for_params(params, nx=12, nv=8, truncation_tol=1e-10)
        lab = maxwellian_field(grid, params, frame="lab", time=0.4)
        sharp = sharp_transform(lab, grid, params)
        expect = maxwellian_field(grid, params, frame="sharp", time=0.4)
        assert np.abs(sharp.values - expect.values).max() < 1e-9

    def test_zero_velocity_slice_unchanged(self, params):
        # odd nv puts a cell exactly at v = 0, where the shift vanishes
        grid = PhaseGrid.for_params(params, nx=6, nv=5, truncation_tol=1e-8)
        f = random_sandwiched_field(grid, params, seed=2)
        f.time = 1.3
        lab = unsharp_transform(f, grid, params)
        np.testing.assert_allclose(lab.values[:, :, :, 2, 2, 2],
                                   f.values[:, :, :, 2, 2, 2], rtol=1e-13)

    def test_roundtrip_reported_and_refines(self, params):
        discrepancies = []
        for nx in (8, 16):
            grid = PhaseGrid.for_params(params, nx=nx, nv=6, truncation_tol=1e-10)
            f = random_sandwiched_field(grid, params, seed=4)
            f.time = 1.0
            discrepancies.append(roundtrip_discrepancy(f, grid, params))
        assert discrepancies[1] < discrepancies[0]
        assert discrepancies[1] < 0.02

    def test_mass_leaving_box_warns(self, params):
        grid = PhaseGrid.for_params(params, nx=4, nv=4, truncation_tol=1e-6)
        f = random_sandwiched_field(grid, params, seed=5)
        f.time = 5.0
        with pytest.warns(UserWarning, match="left the box"):
            unsharp_transform(f, grid, params)

    def test_frame_gates(self, small_grid, params):
        f = random_sandwiched_field(small_grid, params, seed=6)
        with pytest.raises(ValueError, match="lab"):
            sharp_transform(f, small_grid, params)
        lab = unsharp_transform(f, small_grid, params)
        with pytest.raises(ValueError, match="sharp"):
            unsharp_transform(lab, small_grid, params)


class TestGTransform:
    def test_maxwellian_gives_constant(self, small_grid, params):
        f = maxwellian_field(small_grid, params, amplitude=0.8)
        g = g_transform(f, params, small_grid)
        np.testing.assert_allclose(g.values, 0.8, rtol=1e-12)

    def test_zero_field(self, small_grid, params):
        g = g_transform(DistributionField(np.zeros(small_grid.shape)),
                        params, small_grid)
        assert g.values.max() == 0.0

    def test_roundtrip_multiply_back(self, small_grid, params):
        from boltzlab.phase import envelope_log

        f = random_sandwiched_field(small_grid, params, seed=7)
        g = g_transform(f, params, small_grid)
        back = g.values * np.exp(envelope_log(small_grid, params))
        np.testing.assert_allclose(back, f.values, rtol=1e-12)

    def test_bounded_by_upper_amplitude(self, small_grid, params):
        f = random_sandwiched_field(small_grid, params, seed=8)
        g = g_transform(f, params, small_grid)
        assert g.values.max() <= params.a_M + 1e-12


class TestMildIntegratorConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            MildIntegratorConfig(dt=0.0, t_max=1.0)
        with pytest.raises(ValueError):
            MildIntegratorConfig(dt=0.1, t_max=1.0, scheme="rk4")
        with pytest.raises(ValueError):
            MildIntegratorConfig(dt=0.1, t_max=1.0, sandwich_mode="ignore")

    def test_stability_gate(self, params, small_grid, maxwell_kernel):
        cfg = MildIntegratorConfig(dt=0.2, t_max=1.0)
        with pytest.raises(ValueError, match="Lipschitz"):
            cfg.validate_stability(maxwell_kernel, params, small_grid)
        MildIntegratorConfig(dt=0.04, t_max=1.0).validate_stability(
            maxwell_kernel, params, small_grid)


class TestMildStep:
    def test_collisions_off_is_identity(self, small_grid, params, maxwell_kernel, sphere_quad):
        f = random_sandwiched_field(small_grid, params, seed=9)
        cfg = MildIntegratorConfig(dt=0.1, t_max=1.0)
        out, rep = mild_step(f, cfg, maxwell_kernel, sphere_quad, params,
                             small_grid, collisions=False)
        np.testing.assert_array_equal(out.values, f.values)
        assert out.time == pytest.approx(0.1)
        assert rep.clamped_mass == 0.0

    def test_maxwellian_stationary_quadrature(self, params, maxwell_kernel):
        grid = PhaseGrid.for_params(params, nx=4, nv=8, truncation_tol=1e-8)
        quad = QuadratureScheme.product_gauss(2)
        f = maxwellian_field(grid, params, amplitude=0.75)
        cfg = MildIntegratorConfig(dt=0.04, t_max=1.0)
        out, _ = mild_step(f, cfg, maxwell_kernel, quad, params, grid)
        drift = np.abs(out.values - f.values).max()
        assert drift < 1e-6 * f.values.max()

    def test_richardson_half_steps(self, params, maxwell_kernel):
        # two half-steps vs one full step differ at second order in dt
        grid = PhaseGrid.for_params(params, nx=3, nv=6, truncation_tol=1e-6)
        quad = QuadratureScheme.product_gauss(2)
        f0 = random_sandwiched_field(grid, params, seed=10)

        def gap(dt):
            cfg_full = MildIntegratorConfig(dt=dt, t_max=1.0)
            cfg_half = MildIntegratorConfig(dt=dt / 2, t_max=1.0)
            one, _ = mild_step(f0, cfg_full, maxwell_kernel, quad, params, grid)
            half, _ = mild_step(f0, cfg_half, maxwell_kernel, quad, params, grid)
            half, _ = mild_step(half, cfg_half, maxwell_kernel, quad, params, grid)
            return np.abs(one.values - half.values).max()

        g1, g2 = gap(0.04), gap(0.02)
        assert g2 < 0.5 * g1

    def test_negative_clamp_reported(self, small_grid, params, maxwell_kernel, sphere_quad):
        f = random_sandwiched_field(small_grid, params, seed=11)
        rep_cfg = MildIntegratorConfig(dt=0.04, t_max=1.0)
        _, rep = mild_step(f, rep_cfg, maxwell_kernel, sphere_quad, params,
                           small_grid, method="mc", seed=3)
        assert rep.clamped_mass >= 0.0

    def test_sandwich_clamp_mode_projects(self, small_grid, params, maxwell_kernel, sphere_quad):
        vals = maxwellian_field(small_grid, params, amplitude=params.a_M).values
        f = DistributionField(vals, frame="sharp", time=0.0)
        cfg = MildIntegratorConfig(dt=0.04, t_max=1.0, sandwich_mode="clamp")
        out, rep = mild_step(f, cfg, maxwell_kernel, sphere_quad, params,
                             small_grid, method="mc", seed=4)
        assert sandwich_check(out, params, small_grid).passed
        assert rep.projected_mass >= 0.0


class TestEvolve:
    def test_collision_off_preserves_all_norms(self, medium_grid, params,
                                               maxwell_kernel, sphere_quad):
        f0 = random_sandwiched_field(medium_grid, params, seed=12)
        cfg = MildIntegratorConfig(dt=0.1, t_max=1.0)
        res = evolve(f0, cfg, maxwell_kernel, sphere_quad, params, medium_grid,
                     p_list=(0.5, 1.0, 2.0, math.inf), output_interval=0.5,
                     collisions=False)
        for row in res.rows:
            for p, ratio in row.ratios.items():
                assert ratio == pytest.approx(1.0, abs=1e-14)

    def test_maxwellian_diagnostics_flat(self, params, maxwell_kernel):
        grid = PhaseGrid.for_params(params, nx=4, nv=8, truncation_tol=1e-8)
        quad = QuadratureScheme.product_gauss(2)
        f0 = maxwellian_field(grid, params, amplitude=0.75)
        cfg = MildIntegratorConfig(dt=0.04, t_max=0.2)
        res = evolve(f0, cfg, maxwell_kernel, quad, params, grid,
                     p_list=(1.0, 2.0), output_interval=0.1, method="quadrature")
        for row in res.rows:
            for ratio in row.ratios.values():
                assert ratio == pytest.approx(1.0, abs=1e-5)
            assert row.sandwich_margin >= -1e-12

    def test_requires_sandwiched_initial(self, small_grid, params, maxwell_kernel, sphere_quad):
        f = maxwellian_field(small_grid, params, amplitude=2 * params.a_M)
        cfg = MildIntegratorConfig(dt=0.04, t_max=0.1)
        with pytest.raises(ValueError, match="sandwich"):
            evolve(f, cfg, maxwell_kernel, sphere_quad, params, small_grid)

    def test_monitor_mode_records_violations(self, small_grid, params,
                                             maxwell_kernel, sphere_quad):
        f = maxwellian_field(small_grid, params, amplitude=2 * params.a_M)
        cfg = MildIntegratorConfig(dt=0.04, t_max=0.08)
        res = evolve(f, cfg, maxwell_kernel, sphere_quad, params, small_grid,
                     p_list=(2.0,), method="mc", seed=5, require_sandwich=False)
        assert res.rows[0].sandwich_margin < 0

    def test_snapshots_kept(self, small_grid, params, maxwell_kernel, sphere_quad):
        f0 = random_sandwiched_field(small_grid, params, seed=13)
        cfg = MildIntegratorConfig(dt=0.05, t_max=0.2)
        res = evolve(f0, cfg, maxwell_kernel, sphere_quad, params, small_grid,
                     p_list=(2.0,), output_interval=0.1, collisions=False,
                     keep_snapshots=True)
        assert [round(s.time, 10) for s in res.snapshots] == [0.0, 0.1, 0.2]
