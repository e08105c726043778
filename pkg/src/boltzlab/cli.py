"""Configuration ingestion, run orchestration and report emission.

Subcommands: ``simulate`` (time series CSV), ``verify`` (JSON array of bound
check records), ``constants`` (JSON table of the estimate constants).  All
outputs land under ``--out`` with fixed names (series.csv, records.json,
constants.json, manifest.json); identical config + seed in sequential mode
reproduces identical bytes.  The manifest echoes every effective parameter,
including applied defaults, so a run is reproducible from the manifest alone.

Exit status: 0 all pass, 2 any fail, 3 no fails but inconclusive or
unavailable records, 1 operational error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .collision import HAVE_NUMBA, QuadratureScheme
from .estimates import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    UNAVAILABLE,
    FieldTrajectory,
    compute_constants,
    exponent_plan,
    g_infinity,
    verify_difference_stability,
    verify_gronwall,
    verify_kernel_maxwellian_decay,
    verify_gain_functional_bound,
    verify_sup_functional_bound,
    verify_ray_gaussian_bound,
)
from .phase import (
    MaxwellianParams,
    PhaseGrid,
    constant_kernel,
    cos_power_kernel,
    maxwellian_field,
    random_sandwiched_field,
)
from .transport import MildIntegratorConfig, evolve

ALL_LEMMAS = ("ray_integral", "kernel_decay", "gain_functional",
              "sup_functional", "norm_growth", "difference")

DEFAULTS = {
    "kernel": {"gamma": 0.0, "b_form": "constant", "B_gamma": 1.0, "kappa": 1.0},
    "maxwellian": {"alpha": 1.0, "beta": 1.0, "a_m": 0.5, "a_M": 1.0},
    "grid": {"nx": 8, "nv": 8, "truncation_tol": 1e-12,
             "x_extent": None, "v_extent": None},
    "integrator": {"dt": 0.04, "t_max": 1.0, "scheme": "explicit-euler",
                   "sandwich_mode": "monitor"},
    "diagnostics": {"p_list": [0.5, 1.0, 2.0, "inf"], "output_interval": 0.25},
    "simulate": {"initial": "sandwiched-random", "initial_seed": 7,
                 "collisions": True, "backend": "mc", "mc_samples": 16,
                 "sphere_polar": 4},
    "verify": {
        "lemmas": ["ray_integral", "kernel_decay", "gain_functional",
                   "sup_functional", "norm_growth", "difference"],
        "seed": 20240811,
        "rel_error_cap": 0.1,
        "ray_integral": {"samples": 200, "speed_range": [1e-2, 1e2],
                         "rate_range": [1e-2, 1e2]},
        "kernel_decay": {"points": 4, "times": [0.0, 1.0, 2.0, 5.0],
                         "mc_samples": 20000},
        "gain_functional": {"fields": 2, "mc_samples": 30000, "time": 0.5,
                            "target_exponent": 2.0},
        "sup_functional": {"fields": 2, "outer": 160, "inner": 320,
                           "target_exponent": 2.0},
        "norm_growth": {"routes": ["soft", "sup"]},
        "difference": {"p_list": [1.0, 2.0], "nodes": 16, "mc_samples": 2000},
    },
    "constants": {"gamma_values": [-1.0, -0.5, 0.0], "mu_values": [0.25, 0.5, 0.75],
                  "p_values": [1.5, 2.0, 4.0], "alpha_values": None,
                  "beta_values": None, "g_infinity": False},
}


class ConfigError(ValueError):
    """Configuration parse or validation failure."""


def _merge_defaults(user, defaults, path, applied):
    out = {}
    for key, dval in defaults.items():
        here = f"{path}.{key}" if path else key
        if isinstance(user, dict) and key in user:
            uval = user[key]
            if isinstance(dval, dict) and isinstance(uval, dict):
                out[key] = _merge_defaults(uval, dval, here, applied)
            else:
                out[key] = copy.deepcopy(uval)
        elif isinstance(dval, dict):
            out[key] = _merge_defaults(None, dval, here, applied)
        else:
            out[key] = copy.deepcopy(dval)
            applied.append(here)
    if isinstance(user, dict):
        unknown = set(user) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config key(s) at {path or 'top level'}: "
                              + ", ".join(sorted(unknown)))
    return out


def _parse_p(p):
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"bad Lebesgue exponent {p!r} (use a number or 'inf')")
    p = float(p)
    if not p > 0:
        raise ConfigError(f"Lebesgue exponent must be positive, got {p}")
    return p


def _format_p(p):
    return "inf" if math.isinf(p) else repr(float(p))


@dataclass
class RunConfig:
    """Fully validated effective configuration plus constructed domain objects."""

    effective: dict
    defaults_applied: list
    kernel: object
    params: object
    grid: object
    integrator: object
    p_list: list
    quad: object


def load_config(path):
    """Load, default-fill and validate a JSON run configuration."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse failure at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    applied = []
    cfg = _merge_defaults(raw, DEFAULTS, "", applied)

    kb = cfg["kernel"]
    try:
        if kb["b_form"] == "constant":
            kernel = constant_kernel(kb["gamma"], kb["B_gamma"], kb["kappa"])
        elif str(kb["b_form"]).startswith("cos^"):
            kernel = cos_power_kernel(kb["gamma"], int(str(kb["b_form"])[4:]),
                                      kb["B_gamma"], kb["kappa"])
        else:
            raise ConfigError(f"unknown b_form {kb['b_form']!r} "
                              "(use 'constant' or 'cos^<k>')")
        params = MaxwellianParams(alpha=cfg["maxwellian"]["alpha"],
                                  beta=cfg["maxwellian"]["beta"],
                                  a_m=cfg["maxwellian"]["a_m"],
                                  a_M=cfg["maxwellian"]["a_M"])
        gb = cfg["grid"]
        if gb["x_extent"] is None or gb["v_extent"] is None:
            grid = PhaseGrid.for_params(params, nx=gb["nx"], nv=gb["nv"],
                                        truncation_tol=gb["truncation_tol"])
        else:
            grid = PhaseGrid(x_extent=gb["x_extent"], v_extent=gb["v_extent"],
                             nx=gb["nx"], nv=gb["nv"])
            grid.validate_truncation(params, gb["truncation_tol"])
        ib = cfg["integrator"]
        # the dt * Lipschitz stability invariant is contextual (it needs the
        # kernel, envelope and on/off state of collisions) and is enforced
        # by evolve whenever stepping actually happens
        integrator = MildIntegratorConfig(dt=ib["dt"], t_max=ib["t_max"],
                                          scheme=ib["scheme"],
                                          sandwich_mode=ib["sandwich_mode"])
        p_list = [_parse_p(p) for p in cfg["diagnostics"]["p_list"]]
        quad = QuadratureScheme.product_gauss(
            n_polar=cfg["simulate"]["sphere_polar"],
            mc_samples=cfg["simulate"]["mc_samples"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    _validate_lemma_ranges(cfg, kernel)
    # echo derived grid extents back into the effective config
    cfg["grid"]["x_extent"] = grid.x_extent
    cfg["grid"]["v_extent"] = grid.v_extent
    return RunConfig(effective=cfg, defaults_applied=applied, kernel=kernel,
                     params=params, grid=grid, integrator=integrator,
                     p_list=p_list, quad=quad)


def _validate_lemma_ranges(cfg, kernel):
    lemmas = cfg["verify"]["lemmas"]
    unknown = set(lemmas) - set(ALL_LEMMAS)
    if unknown:
        raise ConfigError(f"unknown verify lemmas: {sorted(unknown)}")
    g = kernel.gamma
    needs_any = {"gain_functional", "sup_functional", "norm_growth", "difference"} & set(lemmas)
    if needs_any and not (-2.0 < g <= 1.0):
        raise ConfigError(
            f"gamma = {g} outside the supported estimate range (-2, 1] "
            f"for requested verification {sorted(needs_any)}")
    soft_only = {"gain_functional"} & set(lemmas)
    if soft_only and not (-2.0 < g <= 0.0):
        raise ConfigError(
            f"gamma = {g} outside the gain-functional route range (-2, 0]")
    if "kernel_decay" in lemmas and not (-3.0 < g <= 0.0):
        raise ConfigError(f"gamma = {g} outside the decay-lemma range (-3, 0]")


def _manifest(cfg, command, out_dir, seed_override=None, extra=None):
    man = {
        "package": "boltzlab",
        "version": __version__,
        "command": command,
        "config": cfg.effective,
        "defaults_applied": cfg.defaults_applied,
        "seed_override": seed_override,
        "threads": os.environ.get("BOLTZLAB_THREADS"),
        "numba": HAVE_NUMBA,
        "p_inf_semantics": "grid-sup",
    }
    if extra:
        man.update(extra)
    return man


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _initial_field(cfg, grid, params):
    sim = cfg.effective["simulate"]
    if sim["initial"] == "maxwellian":
        amp = 0.5 * (params.a_m + params.a_M)
        return maxwellian_field(grid, params, frame="sharp", amplitude=amp)
    if sim["initial"] == "sandwiched-random":
        return random_sandwiched_field(grid, params, seed=sim["initial_seed"])
    raise ConfigError(f"unknown initial condition {sim['initial']!r}")


def _g_bounds(cfg, p_list):
    """G_p bound per requested exponent (None when the constants are unavailable)."""
    out = {}
    for p in p_list:
        try:
            if math.isinf(p):
                g_val, _, _ = g_infinity(cfg.kernel, cfg.params)
            else:
                cst = compute_constants(exponent_plan(p), cfg.kernel, cfg.params)
                g_val = cst.growth_factor
        except ValueError:
            g_val = None
        out[p] = g_val
    return out


def run_simulate(cfg, out_dir, seed_override=None):
    """Evolve the configured initial data and emit the diagnostic time series."""
    os.makedirs(out_dir, exist_ok=True)
    sim = cfg.effective["simulate"]
    seed = seed_override if seed_override is not None else cfg.effective["verify"]["seed"]
    initial = _initial_field(cfg, cfg.grid, cfg.params)
    result = evolve(initial, cfg.integrator, cfg.kernel, cfg.quad, cfg.params,
                    cfg.grid, p_list=cfg.p_list,
                    output_interval=cfg.effective["diagnostics"]["output_interval"],
                    method=sim["backend"], seed=seed,
                    collisions=sim["collisions"])
    bounds = _g_bounds(cfg, cfg.p_list)

    rows_written = 0
    with open(os.path.join(out_dir, "series.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "p", "lp_norm", "ratio_to_initial", "G_p_bound",
                         "sandwich_min_margin", "clamped_mass"])
        for row in result.rows:
            for p in cfg.p_list:
                bound = bounds[p]
                writer.writerow([
                    repr(float(row.t)), _format_p(p), repr(row.norms[p]),
                    repr(row.ratios[p]),
                    "" if bound is None else repr(float(bound)),
                    repr(row.sandwich_margin), repr(row.clamped_mass),
                ])
                rows_written += 1

    status = "failed" if result.failed else "ok"
    _write_json(os.path.join(out_dir, "manifest.json"),
                _manifest(cfg, "simulate", out_dir, seed_override,
                          {"status": status, "rows": rows_written,
                           "seed": seed}))
    return 1 if result.failed else 0


def _lemma_seed(base_seed, lemma):
    return np.random.SeedSequence([base_seed, ALL_LEMMAS.index(lemma)])


def _check_ray_integral(cfg, seed_seq):
    block = cfg.effective["verify"]["ray_integral"]
    rng = np.random.default_rng(seed_seq)
    lo_v, hi_v = block["speed_range"]
    lo_a, hi_a = block["rate_range"]
    records = []
    for i in range(block["samples"]):
        x = rng.normal(scale=2.0, size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        speed = math.exp(rng.uniform(math.log(lo_v), math.log(hi_v)))
        a = math.exp(rng.uniform(math.log(lo_a), math.log(hi_a)))
        rec = verify_ray_gaussian_bound(x, speed * direction, a)
        rec.inputs["sample"] = i
        records.append(rec)
    return records


def _check_kernel_decay(cfg, seed_seq):
    block = cfg.effective["verify"]["kernel_decay"]
    cap = cfg.effective["verify"]["rel_error_cap"]
    ss = seed_seq.spawn(block["points"])
    records = []
    for i in range(block["points"]):
        rng = np.random.default_rng(ss[i])
        x = rng.normal(scale=1.0, size=3)
        v = rng.normal(scale=1.0, size=3)
        for t in block["times"]:
            rec = verify_kernel_maxwellian_decay(
                x, v, float(t), cfg.kernel, cfg.params,
                n_samples=block["mc_samples"],
                seed=int(rng.integers(2 ** 63)), rel_cap=cap)
            rec.inputs["sample"] = i
            records.append(rec)
    return records


def _check_gain_functional(cfg, seed_seq):
    block = cfg.effective["verify"]["gain_functional"]
    cap = cfg.effective["verify"]["rel_error_cap"]
    plan = exponent_plan(_parse_p(block["target_exponent"]))
    ss = seed_seq.spawn(block["fields"])
    records = []
    for i in range(block["fields"]):
        child = ss[i].generate_state(2)
        field = random_sandwiched_field(cfg.grid, cfg.params, seed=int(child[0]))
        rec = verify_gain_functional_bound(field, block["time"], plan, cfg.kernel, cfg.params,
                              cfg.grid, n_samples=block["mc_samples"],
                              seed=int(child[1]), rel_cap=cap)
        rec.inputs["field"] = i
        records.append(rec)
    return records


def _check_sup_functional(cfg, seed_seq):
    block = cfg.effective["verify"]["sup_functional"]
    cap = cfg.effective["verify"]["rel_error_cap"]
    plan = exponent_plan(_parse_p(block["target_exponent"]))
    ss = seed_seq.spawn(block["fields"])
    records = []
    for i in range(block["fields"]):
        child = ss[i].generate_state(2)
        field = random_sandwiched_field(cfg.grid, cfg.params, seed=int(child[0]))
        traj = FieldTrajectory([field], cfg.grid, cfg.params)
        rec = verify_sup_functional_bound(traj, plan, cfg.kernel, cfg.params, cfg.grid,
                              n_outer=block["outer"], n_inner=block["inner"],
                              seed=int(child[1]), rel_cap=cap)
        rec.inputs["field"] = i
        records.append(rec)
    return records


def _run_trajectory(cfg, seed, initial=None, keep_snapshots=False):
    sim = cfg.effective["simulate"]
    if initial is None:
        initial = _initial_field(cfg, cfg.grid, cfg.params)
    return evolve(initial, cfg.integrator, cfg.kernel, cfg.quad, cfg.params,
                  cfg.grid, p_list=cfg.p_list,
                  output_interval=cfg.effective["diagnostics"]["output_interval"],
                  method=sim["backend"], seed=seed, collisions=sim["collisions"],
                  keep_snapshots=keep_snapshots)


def _check_norm_growth(cfg, seed_seq):
    routes = cfg.effective["verify"]["norm_growth"]["routes"]
    seed = int(seed_seq.generate_state(1)[0])
    result = _run_trajectory(cfg, seed)
    times = [row.t for row in result.rows]
    records = []
    for p in cfg.p_list:
        series = [row.norms[p] for row in result.rows]
        for route in routes:
            if route == "soft" and cfg.kernel.gamma > 0:
                continue
            if route == "sup" and math.isinf(p):
                continue
            rec = verify_gronwall(times, series, p, cfg.kernel, cfg.params,
                                  route=route)
            rec.seed = seed
            records.append(rec)
    return records


def _check_difference(cfg, seed_seq):
    block = cfg.effective["verify"]["difference"]
    seeds = seed_seq.generate_state(3)
    amp = 0.5 * (cfg.params.a_m + cfg.params.a_M)
    f0 = random_sandwiched_field(cfg.grid, cfg.params, seed=int(seeds[0]))
    fbar0 = maxwellian_field(cfg.grid, cfg.params, frame="sharp", amplitude=amp)
    res_f = _run_trajectory(cfg, int(seeds[1]), initial=f0, keep_snapshots=True)
    res_fbar = _run_trajectory(cfg, int(seeds[2]), initial=fbar0, keep_snapshots=True)
    p_list = [_parse_p(p) for p in block["p_list"]]
    return verify_difference_stability(
        res_f.snapshots, res_fbar.snapshots, cfg.kernel, cfg.params, cfg.grid,
        p_list=p_list, n_nodes=block["nodes"], n_mc=block["mc_samples"],
        seed=int(seeds[0]))


def run_verify(cfg, out_dir, seed_override=None, lemmas=None):
    """Run the selected verification batches and emit records.json."""
    os.makedirs(out_dir, exist_ok=True)
    seed = seed_override if seed_override is not None else cfg.effective["verify"]["seed"]
    selected = lemmas or cfg.effective["verify"]["lemmas"]
    unknown = set(selected) - set(ALL_LEMMAS)
    if unknown:
        raise ConfigError(f"unknown lemmas requested: {sorted(unknown)}")

    runners = {
        "ray_integral": _check_ray_integral,
        "kernel_decay": _check_kernel_decay,
        "gain_functional": _check_gain_functional,
        "sup_functional": _check_sup_functional,
        "norm_growth": _check_norm_growth,
        "difference": _check_difference,
    }
    records = []
    for lemma in ALL_LEMMAS:
        if lemma not in selected:
            continue
        records.extend(runners[lemma](cfg, _lemma_seed(seed, lemma)))

    counts = {PASS: 0, FAIL: 0, INCONCLUSIVE: 0, UNAVAILABLE: 0}
    for rec in records:
        counts[rec.status] += 1
    summary = {"pass": counts[PASS], "fail": counts[FAIL],
               "inconclusive": counts[INCONCLUSIVE],
               "unavailable": counts[UNAVAILABLE]}
    payload = {"summary": summary, "records": [r.to_dict() for r in records]}
    _write_json(os.path.join(out_dir, "records.json"), payload)
    _write_json(os.path.join(out_dir, "manifest.json"),
                _manifest(cfg, "verify", out_dir, seed_override,
                          {"seed": seed, "lemmas": list(selected),
                           "summary": summary}))
    print(f"verify: pass={summary['pass']} fail={summary['fail']} "
          f"inconclusive={summary['inconclusive']} "
          f"unavailable={summary['unavailable']}")
    if counts[FAIL]:
        return 2
    if counts[INCONCLUSIVE] or counts[UNAVAILABLE]:
        return 3
    return 0


def run_constants(cfg, out_dir):
    """Tabulate the estimate constants over the configured parameter grid."""
    os.makedirs(out_dir, exist_ok=True)
    block = cfg.effective["constants"]
    alphas = block["alpha_values"] or [cfg.params.alpha]
    betas = block["beta_values"] or [cfg.params.beta]
    rows = []
    for g in block["gamma_values"]:
        for mu in block["mu_values"]:
            for p in block["p_values"]:
                for al in alphas:
                    for be in betas:
                        row = {"gamma": g, "mu": mu, "p": p,
                               "alpha": al, "beta": be}
                        try:
                            from .estimates import ExponentPlan

                            plan = ExponentPlan(P=mu * p, mu=mu, p=p, case="table")
                            spec = constant_kernel(g, cfg.kernel.B_gamma,
                                                   cfg.kernel.kappa)
                            pars = MaxwellianParams(alpha=al, beta=be,
                                                    a_m=cfg.params.a_m,
                                                    a_M=cfg.params.a_M)
                            row.update(compute_constants(plan, spec, pars).to_dict())
                        except ValueError as exc:
                            row["unavailable"] = {"all": str(exc)}
                        rows.append(row)
    payload = {"rows": rows}
    if block["g_infinity"]:
        g_inf = []
        for al in alphas:
            for be in betas:
                pars = MaxwellianParams(alpha=al, beta=be, a_m=cfg.params.a_m,
                                        a_M=cfg.params.a_M)
                try:
                    val, d_inf, resid = g_infinity(cfg.kernel, pars)
                    g_inf.append({"alpha": al, "beta": be, "g_infinity": val,
                                  "d_infinity": d_inf, "residual": resid})
                except ValueError as exc:
                    g_inf.append({"alpha": al, "beta": be,
                                  "unavailable": str(exc)})
        payload["g_infinity"] = g_inf
    _write_json(os.path.join(out_dir, "constants.json"), payload)
    _write_json(os.path.join(out_dir, "manifest.json"),
                _manifest(cfg, "constants", out_dir, None,
                          {"rows": len(rows)}))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="boltzlab",
        description="Desk-scale numerical laboratory for the cutoff Boltzmann "
                    "equation near a travelling local Maxwellian.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify", "constants"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        if name != "constants":
            sp.add_argument("--seed", type=int, default=None)
        if name == "verify":
            sp.add_argument("--lemma", action="append", default=None)
    args = parser.parse_args(argv)

    threads = os.environ.get("BOLTZLAB_THREADS")
    if threads and HAVE_NUMBA:
        import numba

        numba.set_num_threads(max(1, int(threads)))

    try:
        cfg = load_config(args.config)
        if args.command == "simulate":
            return run_simulate(cfg, args.out, seed_override=args.seed)
        if args.command == "verify":
            return run_verify(cfg, args.out, seed_override=args.seed,
                              lemmas=args.lemma)
        return run_constants(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
