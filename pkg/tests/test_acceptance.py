"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass lines and timings.  The suite seed is fixed; Monte Carlo margins are
checked against the recorded error estimates (margin >= -3 sigma).
"""

import math
import time

import numpy as np
import pytest

from boltzlab.phase import (
    MaxwellianParams,
    PhaseGrid,
    constant_kernel,
    maxwellian_field,
    random_sandwiched_field,
)
from boltzlab.collision import (
    QuadratureScheme,
    collide_velocities,
    q_full,
    q_loss,
)
from boltzlab.estimates import (
    ExponentPlan,
    FieldTrajectory,
    compute_constants,
    exponent_plan,
    g_infinity,
    verify_difference_stability,
    verify_kernel_maxwellian_decay,
    verify_gain_functional_bound,
    verify_sup_functional_bound,
    verify_ray_gaussian_bound,
)
from boltzlab.transport import MildIntegratorConfig, evolve

SEED = 20240811


def report(number, name, detail):
    print(f"\nACCEPTANCE {number} ({name}): PASS  [{detail}]")


def test_acceptance_01_collision_transform_invariants():
    t0 = time.monotonic()
    rng = np.random.default_rng([SEED, 1])
    n = 100_000
    v = rng.normal(size=(n, 3))
    v_star = rng.normal(size=(n, 3))
    om = rng.normal(size=(n, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)

    vp, vsp = collide_velocities(v, v_star, om)
    mom = np.linalg.norm((vp + vsp) - (v + v_star), axis=1)
    mom_scale = 1.0 + np.linalg.norm(v + v_star, axis=1)
    energy = np.abs((vp ** 2 + vsp ** 2).sum(1) - (v ** 2 + v_star ** 2).sum(1))
    energy_scale = (v ** 2 + v_star ** 2).sum(1)
    back_v, back_vs = collide_velocities(vp, vsp, om)
    inv = np.linalg.norm(back_v - v, axis=1) + np.linalg.norm(back_vs - v_star, axis=1)
    inv_scale = 1.0 + np.linalg.norm(v, axis=1) + np.linalg.norm(v_star, axis=1)

    worst = max((mom / mom_scale).max(), (energy / energy_scale).max(),
                (inv / inv_scale).max())
    elapsed = time.monotonic() - t0
    assert worst <= 1e-12
    assert elapsed < 5.0
    report(1, "collision transform invariants",
           f"worst relative error {worst:.2e} over {n} triples, {elapsed:.1f}s")


def test_acceptance_02_ray_gaussian_suite():
    t0 = time.monotonic()
    rng = np.random.default_rng([SEED, 2])
    n = 10_000
    worst_margin_sigma = math.inf
    for _ in range(n):
        x = rng.normal(scale=2.0, size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        speed = math.exp(rng.uniform(math.log(1e-2), math.log(1e2)))
        a = math.exp(rng.uniform(math.log(1e-2), math.log(1e2)))
        rec = verify_ray_gaussian_bound(x, speed * direction, a)
        assert rec.margin >= -3.0 * rec.lhs_error, (x, speed, a, rec)
        if rec.lhs_error > 0:
            worst_margin_sigma = min(worst_margin_sigma,
                                     rec.margin / rec.lhs_error)
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0
    report(2, "ray-Gaussian time-integral bound",
           f"{n} samples, min margin {worst_margin_sigma:.1f} sigma, {elapsed:.1f}s")


def test_acceptance_03_kernel_maxwellian_decay():
    t0 = time.monotonic()
    pars = MaxwellianParams(alpha=1.0, beta=1.0)
    rng = np.random.default_rng([SEED, 3])
    points = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(10)]
    checked = 0
    min_margin = math.inf
    for gamma in (-1.0, 0.0):
        spec = constant_kernel(gamma, 1.0)
        for i, (x, v) in enumerate(points):
            for t in (0.0, 1.0, 2.0, 5.0, 10.0, 20.0):
                rec = verify_kernel_maxwellian_decay(
                    x, v, t, spec, pars, 20000, seed=SEED + 100 * i + int(t))
                assert rec.margin >= -3.0 * rec.lhs_error, \
                    (gamma, i, t, rec.lhs, rec.rhs)
                min_margin = min(min_margin, rec.margin)
                checked += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    report(3, "kernel-weighted Maxwellian decay",
           f"{checked} checks, min margin {min_margin:.2e}, {elapsed:.1f}s")


def test_acceptance_04_travelling_maxwellian_annihilation():
    t0 = time.monotonic()
    params = MaxwellianParams(alpha=1.0, beta=1.0, a_m=0.5, a_M=1.0)
    spec = constant_kernel(0.0, 1.0)
    quad = QuadratureScheme.product_gauss(4)
    rng = np.random.default_rng([SEED, 4])
    # physical probe points in the populated bulk; at corner cells the loss
    # itself is velocity-box-truncation dominated and the ratio cannot refine
    probes = [(rng.uniform(-1.8, 1.8, 3), rng.uniform(-2.0, 2.0, 3))
              for _ in range(20)]

    def worst_ratio(nv, tol):
        grid = PhaseGrid.for_params(params, nx=5, nv=nv, truncation_tol=tol)
        field = maxwellian_field(grid, params, frame="lab", time=0.5)
        worst = 0.0
        for x_pt, v_pt in probes:
            ix = tuple(np.clip(((x_pt + grid.x_extent) / grid.dx).astype(int),
                               0, grid.nx - 1))
            iv = tuple(np.clip(((v_pt + grid.v_extent) / grid.dv).astype(int),
                               0, grid.nv - 1))
            qf = q_full(field, (ix, iv), spec, quad, params, grid)
            ql = q_loss(field, (ix, iv), spec, quad, params, grid)
            worst = max(worst, abs(qf.value) / ql.value)
        return worst

    # one grid refinement of the R^6 discretization: double the velocity
    # resolution and square the truncation tolerance (wider box)
    base = worst_ratio(12, 1e-10)
    fine = worst_ratio(24, 1e-20)
    elapsed = time.monotonic() - t0
    assert base <= 1e-3
    assert fine <= base / 4.0
    assert elapsed < 120.0
    report(4, "travelling-Maxwellian annihilation",
           f"worst |Q|/loss {base:.2e} -> {fine:.2e} "
           f"(tightening x{base / fine:.0f}), {elapsed:.1f}s")


def test_acceptance_05_free_transport_norm_preservation():
    t0 = time.monotonic()
    params = MaxwellianParams(alpha=1.0, beta=1.0, a_m=0.5, a_M=1.0)
    spec = constant_kernel(0.0, 1.0)
    quad = QuadratureScheme.product_gauss(2)
    p_list = (0.5, 1.0, 2.0, math.inf)

    def worst_dev(n):
        grid = PhaseGrid.for_params(params, nx=n, nv=n, truncation_tol=1e-12)
        f0 = random_sandwiched_field(grid, params, seed=SEED)
        cfg = MildIntegratorConfig(dt=0.125, t_max=1.0)
        res = evolve(f0, cfg, spec, quad, params, grid, p_list=p_list,
                     output_interval=0.25, collisions=False)
        return max(abs(row.ratios[p] - 1.0)
                   for row in res.rows for p in p_list)

    dev16 = worst_dev(16)
    dev18 = worst_dev(18)
    elapsed = time.monotonic() - t0
    assert dev16 <= 1e-2
    assert dev18 <= dev16 + 1e-15
    assert elapsed < 120.0
    report(5, "free-transport norm preservation",
           f"worst |ratio-1| {dev16:.2e} at 16^3, {dev18:.2e} at 18^3, "
           f"{elapsed:.1f}s")


def test_acceptance_06_theorem_norm_bound_desk_scale():
    t0 = time.monotonic()
    params = MaxwellianParams(alpha=1.0, beta=1.0, a_m=0.5, a_M=1.0)
    spec = constant_kernel(0.0, 1.0, kappa=1.0)
    grid = PhaseGrid.for_params(params, nx=16, nv=16, truncation_tol=1e-12)
    quad = QuadratureScheme.product_gauss(2, mc_samples=16)
    p_list = (0.5, 1.0, 2.0, math.inf)

    bounds = {}
    for p in p_list:
        if math.isinf(p):
            bounds[p], _, _ = g_infinity(spec, params)
        else:
            bounds[p] = compute_constants(exponent_plan(p), spec, params).growth_factor

    f0 = random_sandwiched_field(grid, params, seed=SEED)
    cfg = MildIntegratorConfig(dt=1.0 / 23.0, t_max=1.0)
    res = evolve(f0, cfg, spec, quad, params, grid, p_list=p_list,
                 output_interval=0.25, method="mc", seed=SEED)
    assert not res.failed
    worst = {}
    for row in res.rows:
        for p in p_list:
            assert row.ratios[p] <= bounds[p], (row.t, p, row.ratios[p])
            worst[p] = max(worst.get(p, 0.0), row.ratios[p])
    # nonnegativity clamping must stay below 1e-6 of the total mass
    assert res.rows[-1].clamped_mass <= 1e-6 * res.rows[0].norms[1.0]
    elapsed = time.monotonic() - t0
    assert elapsed < 600.0
    detail = ", ".join(f"p={p:g}: max ratio {worst[p]:.4f} <= G={bounds[p]:.3g}"
                       for p in p_list)
    report(6, "time-uniform norm bound at desk scale", detail + f", {elapsed:.0f}s")


def test_acceptance_07_n1_n2_bound_suites():
    t0 = time.monotonic()
    params = MaxwellianParams(alpha=1.0, beta=1.0, a_m=0.5, a_M=1.0)
    grid = PhaseGrid.for_params(params, nx=6, nv=10, truncation_tol=1e-10)
    plan = exponent_plan(2.0)
    margins = []

    spec0 = constant_kernel(0.0, 1.0)
    for i in range(5):
        field = random_sandwiched_field(grid, params, seed=SEED + i)
        rec = verify_gain_functional_bound(field, 0.5, plan, spec0, params, grid,
                              n_samples=30000, seed=SEED + 50 + i, rel_cap=0.1)
        assert rec.status == "pass" and rec.margin > 0, (i, rec.lhs, rec.rhs)
        margins.append(rec.margin / rec.rhs)

    for gamma in (0.0, 1.0):
        spec = constant_kernel(gamma, 1.0)
        for i in range(5):
            field = random_sandwiched_field(grid, params, seed=SEED + 10 + i)
            traj = FieldTrajectory([field], grid, params)
            rec = verify_sup_functional_bound(traj, plan, spec, params, grid,
                                  n_outer=192, n_inner=384,
                                  seed=SEED + 100 + i, rel_cap=0.1)
            assert rec.status == "pass" and rec.margin > 0, \
                (gamma, i, rec.lhs, rec.rhs)
            margins.append(rec.margin / rec.rhs)
    elapsed = time.monotonic() - t0
    assert elapsed < 600.0
    report(7, "N1/N2 Monte Carlo suites",
           f"15 fields, min relative margin {min(margins):.2f}, {elapsed:.0f}s")


def test_acceptance_08_difference_stability():
    t0 = time.monotonic()
    params = MaxwellianParams(alpha=1.0, beta=1.0, a_m=0.5, a_M=1.0)
    spec = constant_kernel(0.0, 1.0)
    grid = PhaseGrid.for_params(params, nx=8, nv=8, truncation_tol=1e-10)
    quad = QuadratureScheme.product_gauss(2, mc_samples=32)
    cfg = MildIntegratorConfig(dt=1.0 / 24.0, t_max=0.5)

    f0 = random_sandwiched_field(grid, params, seed=SEED + 1)
    fbar0 = maxwellian_field(grid, params, amplitude=0.75)
    res_f = evolve(f0, cfg, spec, quad, params, grid, p_list=(2.0,),
                   output_interval=0.125, method="mc", seed=SEED + 2,
                   keep_snapshots=True)
    res_fbar = evolve(fbar0, cfg, spec, quad, params, grid, p_list=(2.0,),
                      output_interval=0.125, method="mc", seed=SEED + 3,
                      keep_snapshots=True)
    records = verify_difference_stability(res_f.snapshots, res_fbar.snapshots,
                                          spec, params, grid, p_list=(1.0, 2.0),
                                          n_nodes=12, n_mc=1000, seed=SEED + 4)
    ratio_recs = [r for r in records if r.lemma.startswith("difference_ratio")]
    assert len(ratio_recs) == 2
    for rec in ratio_recs:
        assert rec.passed, (rec.lemma, rec.lhs, rec.rhs)
    elapsed = time.monotonic() - t0
    assert elapsed < 600.0
    detail = ", ".join(f"{r.lemma}: ratio {r.lhs:.4f} <= {r.rhs:.3g}"
                       for r in ratio_recs)
    report(8, "difference stability in weighted norms", detail + f", {elapsed:.0f}s")


def test_acceptance_09_constant_transcription():
    # independent re-transcription of every estimate constant, typed afresh
    t0 = time.monotonic()
    B = 1.7
    a_m, a_M = 0.6, 1.2
    alpha, beta = 1.3, 0.7
    checked = 0
    for gamma in (-1.5, -1.0, -0.5):
        spec = constant_kernel(gamma, B)
        pars = MaxwellianParams(alpha=alpha, beta=beta, a_m=a_m, a_M=a_M)
        for mu in (0.25, 0.5, 0.75):
            for p in (1.5, 2.0, 4.0):
                cst = compute_constants(ExponentPlan(P=mu * p, mu=mu, p=p,
                                                     case="table"), spec, pars)
                c22 = B * (2 * math.pi / (gamma + 3)
                           + (math.pi / alpha) ** 1.5 + (math.pi / beta) ** 1.5)
                n1a = (2 * math.pi / (gamma + 3)
                       + (math.pi * (p - 1) / (alpha * (1 - mu) * p)) ** 1.5
                       + (math.pi * (p - 1) / (beta * (1 - mu) * p)) ** 1.5)
                n1b = (2 * math.pi / (gamma + 3)
                       + (math.pi / (alpha * p * mu)) ** 1.5
                       + (math.pi / (beta * p * mu)) ** 1.5)
                gain_constant = a_M ** mu * n1a ** (p / (p - 1)) * n1b ** (1 / p) * B
                d = a_M ** mu * gain_constant * B * (a_M ** 2 / a_m) ** (1 - mu)
                n2a = math.sqrt(math.pi * (p - 1) / (alpha * p * (1 - mu))) * (
                    2 * math.pi / (gamma + 2)
                    + ((p - 1) / (beta * p * (1 - mu))) ** 1.5)
                sup_constant = a_M ** mu * n2a ** ((p - 1) / p) * (
                    math.sqrt(math.pi / (alpha * mu * p))
                    * (2 * math.pi / (gamma + 2)
                       + (1 / (beta * p * mu)) ** 1.5)) ** (1 / p)
                bar_c = mu * (a_M ** 2 / a_m) ** (1 - mu) * sup_constant

                assert cst.decay_constant_value == pytest.approx(c22, rel=1e-14)
                assert cst.gain_split_a == pytest.approx(n1a, rel=1e-14)
                assert cst.gain_split_b == pytest.approx(n1b, rel=1e-14)
                assert cst.gain_constant == pytest.approx(gain_constant, rel=1e-14)
                assert cst.growth_exponent == pytest.approx(d, rel=1e-14)
                if d > 709.78:
                    assert cst.growth_factor == math.inf
                else:
                    assert cst.growth_factor == pytest.approx(math.exp(d), rel=1e-12)
                assert cst.sup_split_a == pytest.approx(n2a, rel=1e-14)
                assert cst.sup_constant == pytest.approx(sup_constant, rel=1e-14)
                assert cst.contraction_factor == pytest.approx(bar_c, rel=1e-14)
                checked += 1
    elapsed = time.monotonic() - t0
    report(9, "constant transcription",
           f"{checked} parameter triples, all to 1e-14 relative, {elapsed:.1f}s")


def test_acceptance_10_byte_determinism(tmp_path):
    import json

    from boltzlab.cli import load_config, run_constants, run_simulate, run_verify

    t0 = time.monotonic()
    payload = {
        "grid": {"nx": 4, "nv": 6, "truncation_tol": 1e-8},
        "integrator": {"dt": 0.04, "t_max": 0.12},
        "diagnostics": {"p_list": [0.5, 1.0, 2.0, "inf"],
                        "output_interval": 0.04},
        "simulate": {"mc_samples": 8},
        "verify": {
            "lemmas": ["ray_integral", "kernel_decay", "gain_functional", "sup_functional", "norm_growth",
                       "difference"],
            "ray_integral": {"samples": 5},
            "kernel_decay": {"points": 2, "times": [0.0, 5.0], "mc_samples": 2000},
            "gain_functional": {"fields": 1, "mc_samples": 4000},
            "sup_functional": {"fields": 1, "outer": 48, "inner": 96},
            "difference": {"nodes": 4, "mc_samples": 400},
        },
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(payload))

    blobs = {"series.csv": [], "records.json": [], "constants.json": []}
    for run in ("a", "b"):
        cfg = load_config(str(cfg_path))
        sim_dir = tmp_path / f"sim_{run}"
        ver_dir = tmp_path / f"ver_{run}"
        con_dir = tmp_path / f"con_{run}"
        run_simulate(cfg, str(sim_dir))
        run_verify(cfg, str(ver_dir))
        run_constants(cfg, str(con_dir))
        blobs["series.csv"].append((sim_dir / "series.csv").read_bytes())
        blobs["records.json"].append((ver_dir / "records.json").read_bytes())
        blobs["constants.json"].append((con_dir / "constants.json").read_bytes())
    for name, (first, second) in blobs.items():
        assert first == second, f"{name} differs between identical runs"
    elapsed = time.monotonic() - t0
    report(10, "byte determinism",
           f"series.csv, records.json, constants.json identical, {elapsed:.0f}s")
