"""Command-line experiment runner.

Thread caps must land in the environment before the numerical stack loads,
so all heavy imports happen inside main() after the flag/env resolution.
"""
from __future__ import annotations

import argparse
import os
import sys

THREAD_ENV_VAR = "MEMOPLATE_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "NUMEXPR_NUM_THREADS")

COMMANDS = ("simulate", "decay", "limit-sweep", "pruss-scan", "kernel-check")


def _parse(argv):
    parser = argparse.ArgumentParser(
        prog="memoplate",
        description="Thermoviscoelastic plate with hereditary memory: "
                    "simulation, decay measurement, singular limits and "
                    "resolvent probes.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="INI config applied over the preset/defaults")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--preset", help="named preset config to start from")
    parser.add_argument("--threads", type=int, default=0,
                        help="cap BLAS/OpenMP threads (0 keeps the environment)")
    return parser.parse_args(argv)


def _apply_threads(count: int) -> None:
    if count > 0:
        for var in _BLAS_VARS:
            os.environ[var] = str(count)


def main(argv=None) -> int:
    args = _parse(argv)
    threads = args.threads
    if threads <= 0:
        try:
            threads = int(os.environ.get(THREAD_ENV_VAR, "0") or "0")
        except ValueError:
            print(f"error: {THREAD_ENV_VAR} must be an integer", file=sys.stderr)
            return 2
    _apply_threads(threads)

    from .errors import ConfigError, MemoplateError
    from . import config as cfgmod

    try:
        cfg = cfgmod.preset(args.preset) if args.preset else cfgmod.default_config()
        if args.config:
            cfg = cfgmod.load_config(args.config, cfg)
        if args.out:
            cfg.raw["output"]["directory"] = args.out
        out_dir = cfg.out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    manifest = cfgmod.Manifest(args.command, cfg, args.config)
    handler = {
        "simulate": _cmd_simulate,
        "decay": _cmd_decay,
        "limit-sweep": _cmd_limit_sweep,
        "pruss-scan": _cmd_pruss_scan,
        "kernel-check": _cmd_kernel_check,
    }[args.command]

    code = 0
    try:
        code = handler(cfg, manifest, out_dir)
        if cfg.emit_plots_flag:
            for script in cfgmod.emit_plots(manifest.data, out_dir):
                manifest.output(script)
    except ConfigError as exc:
        manifest.step(args.command, "failed", str(exc))
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    except MemoplateError as exc:
        manifest.step(args.command, "failed", str(exc))
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = 3
    finally:
        manifest.write(out_dir)
    return code


# --- shared builders -------------------------------------------------

def _build_space(cfg, sigma: float, tau: float, eps: float):
    from .modes import Params, build_phase_space, dirichlet_eigenvalues
    modes = dirichlet_eigenvalues(cfg.domain(), cfg.mode_count)
    params = Params(sigma, tau, eps, cfg.scalar_model())
    return build_phase_space(modes, params, grid_size=cfg.grid_size,
                             base_mu=cfg.base_mu(), base_beta=cfg.base_beta(),
                             ratio=cfg.grid_ratio, tail=cfg.tail,
                             weight_policy=cfg.weight_policy)


def _initial(cfg, space):
    from .modes import initial_data_preset
    return initial_data_preset(cfg.initial_preset, space, cfg.order,
                               with_history=cfg.with_history)


# --- commands --------------------------------------------------------

def _cmd_kernel_check(cfg, manifest, out_dir) -> int:
    import numpy as np
    from . import config as cfgmod
    from .kernels import build_kernel_family, CONCAVE_AFFINE_EXP, validate_assumptions

    sigma, tau, eps = cfg.parameter_grid()[0]
    named = [("mu_base", cfg.base_mu()), ("beta_base", cfg.base_beta())]
    if eps > 0:
        named.append(("mu_scaled", build_kernel_family(cfg.base_mu().family,
                                                       cfg.base_mu(), eps)))
    if sigma > 0:
        named.append(("beta_scaled", build_kernel_family(cfg.base_beta().family,
                                                         cfg.base_beta(), sigma)))
    if tau > 0:
        named.append(("thermal", build_kernel_family(CONCAVE_AFFINE_EXP,
                                                     cfg.scalar_model(), tau)))
    rows = []
    all_pass = True
    for name, kernel in named:
        bound = cfg.check_bound if cfg.check_bound is not None else kernel.decay
        grid = np.geomspace(1e-3, kernel.tail_cutoff(cfg.tail), 200)
        report = validate_assumptions(kernel, bound, grid)
        all_pass &= report.all_pass
        for condition, margin, passed in report.rows():
            rows.append((f"{name}.{condition}", margin, passed))
    path = cfgmod.write_csv(out_dir / "kernel_check.csv",
                            ["condition", "margin", "passed"], rows)
    manifest.output(path)
    manifest.step("kernel-check", "ok" if all_pass else "failed",
                  f"{len(rows)} conditions, all_pass={all_pass}")
    print(f"kernel-check: {len(rows)} conditions, all_pass={all_pass}")
    return 0 if all_pass else 3


def _cmd_simulate(cfg, manifest, out_dir) -> int:
    import numpy as np
    from . import config as cfgmod
    from .dynamics import evolve

    sigma, tau, eps = cfg.parameter_grid()[0]
    space = _build_space(cfg, sigma, tau, eps)
    z0 = _initial(cfg, space)
    dt = cfg.dt_for(sigma, tau, eps)
    traj = evolve(space, z0, dt, cfg.horizon, store_stride=cfg.stride)
    manifest.step("evolve", "ok",
                  f"sigma={sigma} tau={tau} eps={eps} dt={dt} steps={traj.step_energy.size - 1}")

    modal = traj.modal_energy()
    eta_n = np.sqrt(traj.he_mu + traj.he_nu)
    xi_n = np.sqrt(traj.hx)
    rows = []
    for k, t in enumerate(traj.times):
        for i in range(space.modes.count):
            rows.append((t, i, traj.u[i, k], traj.v[i, k], traj.theta[i, k],
                         eta_n[i, k], xi_n[i, k], modal[i, k]))
    path = cfgmod.write_csv(out_dir / "trajectory.csv",
                            ["t", "mode", "u", "v", "theta", "eta_norm",
                             "xi_norm", "modal_energy"], rows)
    manifest.output(path)

    e = traj.step_energy
    increase = np.max((e[1:] - e[:-1]) / np.maximum(e[:-1], 1e-300))
    manifest.step("energy-monotone", "ok" if increase <= 1e-12 else "failed",
                  f"max relative step increase {increase:.3e}")
    print(f"simulate: {space.modes.count} modes, {e.size - 1} steps, "
          f"max relative energy increase {increase:.3e}")
    return 0


def _cmd_decay(cfg, manifest, out_dir) -> int:
    from . import config as cfgmod
    from .decay import (FunctionalConfig, check_differential_inequalities,
                        fit_decay_rate)
    from .dynamics import evolve

    fc = FunctionalConfig(cfg.rho_flat, cfg.rho_sharp, cfg.functional_scale)
    window = cfg.fit_window
    rows = []
    for idx, (sigma, tau, eps) in enumerate(cfg.parameter_grid()):
        space = _build_space(cfg, sigma, tau, eps)
        z0 = _initial(cfg, space)
        dt = cfg.dt_for(sigma, tau, eps)
        traj = evolve(space, z0, dt, cfg.horizon, store_stride=cfg.stride)
        fit = fit_decay_rate(traj.times, traj.total_energy(), window)
        ineq = check_differential_inequalities(traj, fc, window)
        rows.append((sigma, tau, eps, cfg.order, fit.rate, fit.prefactor,
                     ineq.lambda_hat, ineq.d0_hat, ineq.residual, fit.r_squared))
        manifest.step(f"decay[{idx}]", "ok",
                      f"tau={tau} rate={fit.rate:.6g} d0={ineq.d0_hat:.6g}")
        epath = cfgmod.write_csv(out_dir / f"energy_{idx}.csv", ["t", "energy"],
                                 zip(traj.times, traj.total_energy()))
        manifest.output(epath)
        print(f"decay: sigma={sigma} tau={tau} eps={eps} -> rate {fit.rate:.6g} "
              f"(R^2 {fit.r_squared:.4f}), d0 {ineq.d0_hat:.4g}, "
              f"lambda {ineq.lambda_hat:.4g}")
    path = cfgmod.write_csv(out_dir / "decay.csv",
                            ["sigma", "tau", "eps", "order", "rate", "prefactor",
                             "lambda_hat", "d0_hat", "residual", "r_squared"], rows)
    manifest.output(path)
    return 0


def _cmd_limit_sweep(cfg, manifest, out_dir) -> int:
    from . import config as cfgmod
    from .limits import compare_trajectories, fit_limit_constants, history_envelopes

    points = []
    grid = cfg.parameter_grid()
    for idx, (sigma, tau, eps) in enumerate(grid):
        space = _build_space(cfg, sigma, tau, eps)
        z0 = _initial(cfg, space)
        dt = cfg.dt_for(sigma, tau, eps)
        comp = compare_trajectories(space, z0, dt, cfg.horizon, t0=cfg.sweep_t0)
        points.append(comp)
        manifest.step(f"compare[{idx}]", "ok",
                      f"sigma={sigma} tau={tau} eps={eps} dt={dt} "
                      f"supD={comp.sup_distance:.6g}")
        if cfg.with_history:
            env = history_envelopes(comp)
            manifest.step(f"envelope[{idx}]", "ok",
                          f"k_eta={env.k_eta:.6g} k_xi={env.k_xi:.6g} "
                          f"eta_margin={env.eta_margin:.3e} xi_margin={env.xi_margin:.3e}")
    fits = fit_limit_constants(points)
    rows = []
    for comp, k_row, q_row in zip(points, fits["k_hat_rows"], fits["q_hat"]):
        p = comp.space.params
        rows.append((p.sigma, p.tau, p.eps, comp.order, comp.t0, comp.sup_distance,
                     comp.upsilon_at_t0, comp.pi_flat, comp.pi_sharp, k_row, q_row))
    path = cfgmod.write_csv(out_dir / "sweep.csv",
                            ["sigma", "tau", "eps", "order", "t0", "sup_distance",
                             "upsilon_t0", "pi_flat", "pi_sharp", "k_hat", "q_hat"],
                            rows)
    manifest.output(path)
    manifest.step("fit", "ok", f"k_hat_global={fits['k_hat']:.6g}")
    print(f"limit-sweep: {len(points)} points, shared quarter-power constant "
          f"{fits['k_hat']:.6g}")
    return 0


def _cmd_pruss_scan(cfg, manifest, out_dir) -> int:
    import numpy as np
    from . import config as cfgmod
    from .probe import admissibility_report, residual_check, resolvent_scan

    ap = cfg.probe_params()
    report = admissibility_report(ap)
    for condition, margin, passed in report.rows():
        manifest.step(f"admissibility.{condition}", "ok" if passed else "failed",
                      f"margin={margin:.6g}")
    scan = resolvent_scan(ap, cfg.probe_gammas())

    residuals = [residual_check(ap, float(g), cfg.residual_size).residual
                 for g in scan.gammas]
    rows = [(g, l, zn, zt, rt, qr, dr) for (g, l, zn, zt, rt, qr), dr
            in zip(scan.rows(), residuals)]
    path = cfgmod.write_csv(out_dir / "scan.csv",
                            ["gamma", "lam", "z_norm", "z_tilde_norm", "ratio",
                             "quartic_residual", "discrete_residual"], rows)
    manifest.output(path)

    fine = residual_check(ap, cfg.residual_gamma, 2 * cfg.residual_size)
    coarse = residual_check(ap, cfg.residual_gamma, cfg.residual_size)
    manifest.step("residual-halving", "ok",
                  f"M={cfg.residual_size}: {coarse.residual:.6g}, "
                  f"2M: {fine.residual:.6g}, ratio {coarse.residual / fine.residual:.3f}")

    logg = np.log(scan.gammas)
    for label, values in (("z_norm", scan.z_norm),
                          ("gamma_lam", scan.gamma_lam if ap.with_shear else None)):
        if values is None:
            continue
        coef, cov = np.polyfit(logg, np.log(values), 1, cov=True)
        half = 1.96 * float(np.sqrt(cov[0, 0]))
        print(f"pruss-scan: log-log slope of {label} = {coef[0]:.4f} +/- {half:.4f} (95%)")
        manifest.step(f"slope.{label}", "ok", f"{coef[0]:.6f} +/- {half:.6f}")
    print(f"pruss-scan: ratio decreasing = {scan.ratio_decreasing}, "
          f"max quartic residual {np.max(scan.quartic_residual):.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
