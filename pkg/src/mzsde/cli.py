"""Command-line entry point: spectrum | emz | gle | mc | validate.

Each command reads one config file, runs its slice of the pipeline and
writes a deterministic JSON report plus CSV series (and figures) into the
output directory.  Exit codes: 0 all checks passed, 1 at least one check
failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import contextlib
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .basis import build_hermite_basis, gauss_quadrature
from .config import ExperimentConfig, config_hash, parse_config, resolve_observables
from .emz import emz_decomposition, second_fdt_diagnostic, solve_gle
from .errors import ConfigError, MzsdeError
from .montecarlo import (
    McConfig,
    cross_validate,
    simulate_langevin_baoab,
    simulate_ou_exact,
    stationary_autocorrelation,
)
from .operator import (
    GeneralDiffusion1D,
    Langevin1D,
    OrnsteinUhlenbeck,
    assemble_general_generator,
    build_langevin_workspace,
    build_ou_workspace,
)
from .projection import build_mori_projection, orthogonal_dynamics
from .report import RunReport, write_csv, write_timings
from .spectral import cusp_diagnostic, eigen_decompose, envelope_constant, semigroup_decay

CONTRACTION_SLACK = 1e-8
T0_CONSISTENCY_TOL = 1e-8
OU_GLE_TOL = 1e-6


def _threads_context(n: int):
    if n <= 0:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=n)
    except ImportError:
        return contextlib.nullcontext()


def _build_workspace(cfg: ExperimentConfig) -> SimpleNamespace:
    model = cfg.build_model()
    if isinstance(model, OrnsteinUhlenbeck):
        basis, quad, gen = build_ou_workspace(model, cfg.basis.n)
        proj_basis, proj_quad = basis, quad
    elif isinstance(model, Langevin1D):
        ws = build_langevin_workspace(
            model, cfg.basis.n_q, cfg.basis.n_p,
            support_hint=(cfg.basis.support_lo, cfg.basis.support_hi),
        )
        basis, gen = ws.basis, ws.generator
        proj_basis, proj_quad = ws.basis, (ws.quad_q, ws.quad_p)
    else:
        basis = build_hermite_basis(cfg.model.weight_scale, cfg.basis.n)
        quad = gauss_quadrature(basis, 2 * cfg.basis.n)
        gen = assemble_general_generator(model, basis, quad)
        proj_basis, proj_quad = basis, quad

    observables = resolve_observables(cfg)
    proj = og = None
    if observables:
        proj = build_mori_projection(
            [fn for _, fn, _ in observables], proj_basis, proj_quad
        )
        og = orthogonal_dynamics(gen, proj, tol=cfg.tolerances.kernel_svd_tol)
    return SimpleNamespace(
        model=model, basis=basis, gen=gen, proj=proj, og=og,
        observables=observables, proj_quad=proj_quad,
    )


def _stationary_projector(size: int) -> np.ndarray:
    pi0 = np.zeros((size, size))
    pi0[0, 0] = 1.0
    return pi0


def _spectrum_stage(cfg, ws, report, rng):
    tol = cfg.tolerances
    results = {}

    targets = [("K", ws.gen.as_accretive(), _stationary_projector(ws.gen.size))]
    if ws.og is not None:
        targets.append(("QKQ", ws.og.qkq, ws.og.pi0q))

    for label, matrix, projector in targets:
        eigs = eigen_decompose(matrix)
        diag = cusp_diagnostic(eigs, re_tol=tol.re_tol, im_tol=tol.im_tol)
        u0 = rng.standard_normal(matrix.shape[0])
        # decay horizon spans the full fit window (~30/gap puts the residual
        # past the 1e-10 lower bound and averages out oscillatory envelopes)
        gap = diag.spectral_gap
        horizon = 30.0 / gap if gap is not None and gap > 0 else cfg.time.stop
        decay_grid = np.linspace(0.0, horizon, 801)
        decay = semigroup_decay(
            matrix, projector, u0, decay_grid,
            window=(tol.fit_window_lo, tol.fit_window_hi),
        )
        diag.decay_fit = decay.fit
        results[label] = SimpleNamespace(diagnostic=diag, decay=decay)

        report.add_check(
            f"{label}.accretive", diag.min_real_part >= -tol.re_tol,
            measured=diag.min_real_part, tolerance=-tol.re_tol,
            detail="min Re(lambda)",
        )
        report.add_check(
            f"{label}.imaginary_axis_clear", diag.imaginary_axis_violations.size == 0,
            measured=int(diag.imaginary_axis_violations.size), tolerance=0,
            detail="eigenvalues with Re <= re_tol and |Im| > im_tol",
        )
        gap_ok = diag.spectral_gap is not None and diag.spectral_gap > 0
        report.add_check(
            f"{label}.positive_gap", gap_ok,
            measured=diag.spectral_gap, tolerance=0.0,
        )
        contraction = float((decay.norms / max(decay.norms[0], 1e-300)).max())
        report.add_check(
            f"{label}.contraction", contraction <= 1 + CONTRACTION_SLACK,
            measured=contraction, tolerance=1 + CONTRACTION_SLACK,
        )
        if decay.fit.degenerate or diag.spectral_gap is None:
            report.add_check(
                f"{label}.decay_rate_vs_gap", True, measured=None,
                detail="degenerate decay (initial state in kernel); fit skipped",
            )
        else:
            ok = decay.fit.rate >= 0.9 * diag.spectral_gap
            report.add_check(
                f"{label}.decay_rate_vs_gap", ok, measured=decay.fit.rate,
                tolerance=0.9 * diag.spectral_gap,
                detail="fitted semigroup decay rate vs 0.9 x spectral gap",
            )
        report.payload.setdefault("spectrum", {})[label] = {
            "spectral_gap": diag.spectral_gap,
            "zero_multiplicity": diag.zero_multiplicity,
            "min_real_part": diag.min_real_part,
            "n_imaginary_axis_violations": int(diag.imaginary_axis_violations.size),
            "cusp_envelope_exponent": diag.cusp_envelope_exponent,
            "envelope_fit_residual": diag.envelope_residual,
            "decay_fit": decay.fit,
        }
    if ws.og is not None:
        report.payload["spectrum"]["QKQ"]["kernel_dimension"] = ws.og.kernel_dim
        report.payload["spectrum"]["QKQ"]["expected_kernel_dimension"] = ws.og.expected_kernel_dim
    return results


def _emz_stage(cfg, ws, report):
    if ws.proj is None:
        raise ConfigError("projection.observables: required for the emz pipeline")
    tol = cfg.tolerances
    grid = cfg.time_grid()
    dec = emz_decomposition(
        ws.gen, ws.proj, ws.og, grid,
        fit_window=(tol.fit_window_lo, tol.fit_window_hi),
    )

    k_gen = ws.gen.as_generator()
    q = ws.proj.complement()
    u = q @ (k_gen @ ws.proj.observables)
    w = q @ (k_gen.T @ ws.proj.observables)
    direct_t0 = (w.T @ u).T @ ws.proj.gram_inverse()
    scale = max(np.abs(direct_t0).max(), 1.0)
    t0_err = float(np.abs(dec.kernel_series[0] - direct_t0).max())
    report.add_check(
        "emz.t0_consistency", t0_err <= T0_CONSISTENCY_TOL * scale,
        measured=t0_err, tolerance=T0_CONSISTENCY_TOL * scale,
        detail="kernel at t=0 vs direct Galerkin quadratic form",
    )

    if ws.og.expected_kernel_dim is not None:
        report.add_check(
            "emz.kernel_dimension", ws.og.kernel_dim == ws.og.expected_kernel_dim,
            measured=ws.og.kernel_dim, tolerance=ws.og.expected_kernel_dim,
            detail="SVD kernel dimension vs 2m+1 prediction",
        )
    else:
        report.add_check(
            "emz.kernel_dimension", True, measured=ws.og.kernel_dim,
            detail="no conjugate set; dimension reported without prediction",
        )

    qkq_eigs = eigen_decompose(ws.og.qkq)
    gap = None
    nonzero = qkq_eigs[np.abs(qkq_eigs) > tol.re_tol]
    if nonzero.size:
        gap = float(nonzero.real.min())
    fit = dec.kernel_fit
    if fit.degenerate:
        report.add_check(
            "emz.kernel_rate_vs_gap", True, measured=None,
            detail="kernel already at equilibrium for all t; no transient to fit",
        )
    else:
        ok = gap is not None and abs(fit.rate - gap) <= tol.rate_match_rtol * gap
        report.add_check(
            "emz.kernel_rate_vs_gap", ok, measured=fit.rate,
            tolerance=f"within {tol.rate_match_rtol:.0%} of gap {gap}",
            detail="fitted kernel relaxation rate vs min Re sigma(QKQ)\\{0}",
        )
        resid = dec.kernel_residuals
        past = grid >= fit.window[1]
        if past.any():
            c_env = envelope_constant(grid, resid, fit)
            envelope = 1.1 * c_env * np.exp(-fit.rate * grid[past])
            # propagator roundoff accumulates ~linearly in the step count
            floor = 16 * np.finfo(float).eps * grid.size * max(
                np.abs(dec.kernel_series[0]).max(), np.abs(dec.kernel_equilibrium).max(), 1.0
            )
            worst = float((resid[past] - np.maximum(envelope, floor)).max())
            report.add_check(
                "emz.kernel_envelope_bound", worst <= 0.0,
                measured=worst, tolerance=0.0,
                detail="residual below 1.1 * C_env exp(-rate t) past the fit window "
                       "(envelope-lifted constant, floored at the roundoff level)",
            )

    fdt = second_fdt_diagnostic(dec, ws.gen, ws.proj)
    report.payload["emz"] = {
        "omega": dec.omega,
        "kernel_equilibrium": dec.kernel_equilibrium,
        "fluct_equilibrium_norms": np.linalg.norm(dec.fluct_equilibrium, axis=1),
        "kernel_fit": dec.kernel_fit,
        "fluct_fit": dec.fluct_fit,
        "qkq_spectral_gap": gap,
        "kernel_dimension": ws.og.kernel_dim,
        "expected_kernel_dimension": ws.og.expected_kernel_dim,
        "conjugate_residuals": ws.og.conjugate_residuals,
        "conjugates_adjoint_consistent": ws.og.adjoint_consistent,
        "second_fdt_max_discrepancy": float(fdt.max()),
    }
    return dec


def _gle_stage(cfg, ws, dec, report):
    grid = dec.time_grid
    initial = ws.proj.gram[:, 0]
    traj = solve_gle(dec.omega, grid, dec.kernel_series, initial)
    reference = None
    if isinstance(ws.model, OrnsteinUhlenbeck):
        reference = initial[0] * np.exp(-ws.model.theta * grid)
        resid = float(np.abs(traj[:, 0] - reference).max())
        report.add_check(
            "gle.ou_closed_form", resid <= OU_GLE_TOL,
            measured=resid, tolerance=OU_GLE_TOL,
            detail="projected GLE vs exact exponential relaxation",
        )
    report.payload["gle"] = {
        "initial": initial,
        "final": traj[-1],
        "max_norm": float(np.abs(traj).max()),
    }
    return grid, traj, reference


def _mc_model(cfg, ws):
    factor = cfg.validate.negative_control_theta_factor
    model = ws.model
    if factor != 1.0:
        if isinstance(model, OrnsteinUhlenbeck):
            model = OrnsteinUhlenbeck(theta=model.theta * factor, sigma=model.sigma)
        elif isinstance(model, Langevin1D):
            model = Langevin1D(
                mu=model.mu, gamma=model.gamma * factor,
                beta=model.beta, potential=model.potential,
            )
    return model


def _mc_stage(cfg, ws, report):
    if not ws.observables:
        raise ConfigError("projection.observables: required for the mc pipeline")
    mc = cfg.mc
    integrator = mc.integrator
    if integrator == "auto":
        integrator = "ou-exact" if isinstance(ws.model, OrnsteinUhlenbeck) else "baoab"
    model = _mc_model(cfg, ws)
    mc_cfg = McConfig(
        n_paths=mc.n_paths, dt=mc.dt, horizon=mc.horizon, seed=mc.seed,
        integrator=integrator, burn_in=mc.burn_in, record_stride=mc.record_stride,
    )
    delta = mc.initial == "delta"
    if isinstance(model, OrnsteinUhlenbeck):
        x0 = float(mc.x0[0]) if delta else None
        ens = simulate_ou_exact(model.theta, model.sigma, mc_cfg, x0=x0)
    elif isinstance(model, Langevin1D):
        x0 = (float(mc.x0[0]), float(mc.x0[1])) if delta else None
        ens = simulate_langevin_baoab(model, mc_cfg, x0=x0)
    else:
        raise ConfigError("mc: general diffusion models need delta initial data; "
                          "use the library API (simulate_general_euler)")

    name, _, series_fn = ws.observables[0]
    estimate = stationary_autocorrelation(ens, series_fn)
    if not estimate.degenerate:
        expected_c0 = float(ws.proj.gram[0, 0])
        z0 = abs(estimate.values[0] - expected_c0) / estimate.standard_errors[0]
        report.add_check(
            "mc.variance_vs_galerkin", z0 <= 3.0, measured=float(z0), tolerance=3.0,
            detail=f"C(0) of {name!r} vs weighted-space Gram entry, in s.e. units",
        )
    report.payload["mc"] = {
        "observable": name,
        "integrator": integrator,
        "n_samples": estimate.n_samples,
        "degenerate": estimate.degenerate,
        "c0": float(estimate.values[0]),
        "seed": mc.seed,
    }
    return ens, estimate


def _cross_stage(cfg, ws, dec, ens, report):
    name, _, series_fn = ws.observables[0]
    grid = dec.time_grid
    max_lag = min(grid[-1], ens.times[-1] / 2)
    est_norm = stationary_autocorrelation(ens, series_fn, max_lag=max_lag, normalize=True)
    initial = ws.proj.gram[:, 0]
    traj = solve_gle(dec.omega, grid, dec.kernel_series, initial)
    normalized = traj[:, 0] / initial[0]
    cv = cross_validate(grid, normalized, est_norm, threshold=cfg.tolerances.zscore_max)
    report.add_check(
        "validate.cross_validation", cv.passed,
        measured=cv.max_abs_z, tolerance=cv.threshold,
        detail=f"normalized {name!r} autocorrelation: Monte Carlo vs projected GLE",
    )
    report.payload["cross_validation"] = {
        "observable": name,
        "max_abs_z": cv.max_abs_z,
        "threshold": cv.threshold,
        "n_lags": int(cv.lags.size),
    }
    return cv


def _write_spectrum_outputs(cfg, out, results, report):
    if cfg.output.write_csv:
        for label, res in results.items():
            eigs = res.diagnostic.eigenvalues
            write_csv(
                out / f"eigenvalues_{label}.csv", ["re", "im"],
                zip(eigs.real, eigs.imag), __version__, report.config_hash,
            )
    if cfg.output.write_plots:
        from . import plots

        plots.plot_spectrum(
            {k: v.diagnostic for k, v in results.items()}, out / "spectrum.png"
        )


def _write_emz_outputs(cfg, out, dec, report):
    m = dec.omega.shape[0]
    if cfg.output.write_csv:
        cols = ["t"]
        cols += [f"K_{i}{j}" for i in range(m) for j in range(m)]
        cols += [f"fnorm_{j}" for j in range(m)]
        cols += ["kernel_residual"]
        fn = np.linalg.norm(dec.fluct_series, axis=2)
        resid = dec.kernel_residuals
        rows = (
            [t] + list(dec.kernel_series[k].ravel()) + list(fn[k]) + [resid[k]]
            for k, t in enumerate(dec.time_grid)
        )
        write_csv(out / "emz.csv", cols, rows, __version__, report.config_hash)
    if cfg.output.write_plots:
        from . import plots

        plots.plot_kernel_decay(dec, out / "emz_kernel.png")


def _write_gle_outputs(cfg, out, grid, traj, reference, report):
    if cfg.output.write_csv:
        m = traj.shape[1]
        cols = ["t"] + [f"q_{j}" for j in range(m)]
        if reference is not None:
            cols.append("closed_form_residual")
            rows = (
                [t] + list(traj[k]) + [abs(traj[k, 0] - reference[k])]
                for k, t in enumerate(grid)
            )
        else:
            rows = ([t] + list(traj[k]) for k, t in enumerate(grid))
        write_csv(out / "gle_trajectory.csv", cols, rows, __version__, report.config_hash)
    if cfg.output.write_plots:
        from . import plots

        plots.plot_gle(grid, traj, out / "gle.png", reference=reference)


def _write_mc_outputs(cfg, out, estimate, report, reference=None):
    if cfg.output.write_csv:
        rows = zip(estimate.lags, estimate.values, estimate.standard_errors)
        write_csv(
            out / "mc_correlation.csv", ["lag", "value", "stderr"],
            rows, __version__, report.config_hash,
        )
    if cfg.output.write_plots:
        from . import plots

        plots.plot_correlation(estimate, out / "mc_correlation.png", reference=reference)


def _write_cross_outputs(cfg, out, cv, report):
    if cfg.output.write_csv:
        rows = zip(cv.lags, cv.estimate, cv.reference, cv.z_scores)
        write_csv(
            out / "cross_validation.csv", ["lag", "mc", "gle", "z"],
            rows, __version__, report.config_hash,
        )
    if cfg.output.write_plots:
        from . import plots

        plots.plot_cross_validation(cv, out / "cross_validation.png")


def _run_command(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.mc.seed = args.seed
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)
    report = RunReport(
        command=args.command, version=__version__, seed=cfg.mc.seed,
        config_hash=cfg_hash, config=cfg.as_flat_dict(),
    )
    stages: dict[str, float] = {}

    def timed(name, fn, *a, **kw):
        t0 = time.perf_counter()
        result = fn(*a, **kw)
        stages[name] = time.perf_counter() - t0
        return result

    with _threads_context(args.threads):
        ws = timed("workspace", _build_workspace, cfg)
        rng = np.random.default_rng(cfg.mc.seed)

        if args.command == "spectrum":
            results = timed("spectrum", _spectrum_stage, cfg, ws, report, rng)
            _write_spectrum_outputs(cfg, out, results, report)
        elif args.command == "emz":
            dec = timed("emz", _emz_stage, cfg, ws, report)
            _write_emz_outputs(cfg, out, dec, report)
        elif args.command == "gle":
            dec = timed("emz", _emz_stage, cfg, ws, report)
            grid, traj, reference = timed("gle", _gle_stage, cfg, ws, dec, report)
            _write_emz_outputs(cfg, out, dec, report)
            _write_gle_outputs(cfg, out, grid, traj, reference, report)
        elif args.command == "mc":
            ens, estimate = timed("mc", _mc_stage, cfg, ws, report)
            _write_mc_outputs(cfg, out, estimate, report)
        elif args.command == "validate":
            results = timed("spectrum", _spectrum_stage, cfg, ws, report, rng)
            dec = timed("emz", _emz_stage, cfg, ws, report)
            grid, traj, reference = timed("gle", _gle_stage, cfg, ws, dec, report)
            ens, estimate = timed("mc", _mc_stage, cfg, ws, report)
            cv = timed("cross_validate", _cross_stage, cfg, ws, dec, ens, report)
            _write_spectrum_outputs(cfg, out, results, report)
            _write_emz_outputs(cfg, out, dec, report)
            _write_gle_outputs(cfg, out, grid, traj, reference, report)
            _write_mc_outputs(cfg, out, estimate, report)
            _write_cross_outputs(cfg, out, cv, report)

    if cfg.output.write_json:
        report.write_json(out / f"report_{args.command}.json")
    write_timings(out / f"timings_{args.command}.json", args.command, stages)

    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: measured={check.measured} tolerance={check.tolerance}")
    return 0 if report.all_passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mzsde",
        description="Mori-Zwanzig decomposition toolkit for SDEs",
    )
    parser.add_argument("--version", action="version", version=f"mzsde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("spectrum", "eigen-analysis and semigroup decay of K and QKQ"),
        ("emz", "streaming matrix, memory kernel and fluctuation term"),
        ("gle", "solve the projected generalized Langevin equation"),
        ("mc", "Monte Carlo simulation and stationary autocorrelation"),
        ("validate", "full pipeline with Monte Carlo cross-validation"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=0, help="BLAS thread cap (0 = auto)")

    args = parser.parse_args(argv)
    try:
        return _run_command(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MzsdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
