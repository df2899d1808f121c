"""Command-line entry point: ``reglap <verb> --config <path> [--out <dir>]``.

Exit codes: 0 success, 2 configuration, 3 solver, 4 failed checks,
5 output I/O.  Every failure prints one line ``reglap: error[<kind>]: ...``
on stderr.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, config_hash, parse_config, write_config
from .geometry import BoundaryLayer, CutoffXi, default_delta
from .green import GreenTestFunction, green_refinement_study, normal_deriv_constant
from .model import data_bounds
from .operator import (FractionalOrder, apply_regional_laplacian, assemble_weights,
                       dump_weights_csv, duality_pairing, gagliardo_form, normalization_constant)
from .solver import SolverError, raw_bounds, run_viscous, vanishing_viscosity_sweep, worker_count
from . import verification as V

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY, EXIT_IO = 0, 2, 3, 4, 5
VERBS = ("assemble", "solve", "sweep", "verify", "green", "constants")


def _fail(kind: str, message: str, code: int) -> int:
    first = " ".join(str(message).split())
    print(f"reglap: error[{kind}]: {first}", file=sys.stderr)
    return code


def _out_dir(cfg: RunConfig, override) -> Path:
    return Path(override) if override else Path(cfg.output.directory)


def _finish(out: Path, verb: str, cfg: RunConfig, files) -> None:
    files = list(files)
    io.write_manifest(out, verb, config_hash(cfg), write_config(cfg), files)


def cmd_assemble(cfg: RunConfig, out: Path) -> int:
    sc = cfg.solver_config()
    kw = assemble_weights(sc.grid, sc.order, cfg.problem.convention)
    path = out / "weights.csv"
    out.mkdir(parents=True, exist_ok=True)
    try:
        dump_weights_csv(kw, path)
    except OSError as exc:
        raise io.OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    _finish(out, "assemble", cfg, [path])
    print(f"wrote {path}")
    return EXIT_OK


def _trajectory_files(traj, out: Path, stem: str, formats) -> list:
    files = []
    if "csv" in formats:
        files.append(io.write_trajectory_csv(traj, out / f"{stem}.csv"))
        files.append(io.write_diagnostics_csv(traj, out / f"{stem}_diagnostics.csv"))
    if "gnuplot" in formats:
        files.extend(io.write_profiles(traj, out / f"{stem}_profiles"))
    return files


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    traj = run_viscous(cfg.solver_config(), cfg.problem_data())
    files = _trajectory_files(traj, out, "trajectory", cfg.output.formats)
    _finish(out, "solve", cfg, files)
    its = [r.picard_iterations for r in traj.reports]
    print(f"steps = {len(traj.reports)}  dt = {io.fmt(traj.dt)}  picard max = {max(its, default=0)}")
    print(f"min = {io.fmt(traj.states.min())}  max = {io.fmt(traj.states.max())}")
    return EXIT_OK


def _eps_list(cfg: RunConfig):
    if cfg.sweep_mode:
        return list(cfg.solver.eps_list)
    e = cfg.solver.eps
    return [e, e / 2, e / 4, e / 8]


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    eps_list = _eps_list(cfg)
    sweep = vanishing_viscosity_sweep(cfg.solver_config(eps_list[0]), cfg.problem_data(), eps_list)
    files = [io.write_cauchy_csv(sweep.cauchy, out / "cauchy.csv")]
    for k, traj in enumerate(sweep.trajectories):
        if not isinstance(traj, Exception):
            files.extend(_trajectory_files(traj, out, f"trajectory_eps{k}", cfg.output.formats))
    _finish(out, "sweep", cfg, files)
    for row in sweep.cauchy:
        print(f"{row[0]:g} -> {row[1]:g}: l1_diff = {io.fmt(row[2])}")
    print(f"monotone = {str(sweep.monotone).lower()}")
    if sweep.failures:
        for e, msg in sweep.failures.items():
            print(f"eps = {e:g}: FAILED: {msg}")
        raise SolverError(f"{len(sweep.failures)} run(s) of the sweep failed")
    return EXIT_OK


def build_report(cfg: RunConfig) -> V.VerificationReport:
    """Run every configured check; deterministic for a given configuration."""
    checks = set(cfg.verify.checks)
    vf = cfg.verify
    sc = cfg.solver_config()
    grid = sc.grid
    delta = vf.delta if vf.delta > 0 else default_delta(grid)
    data = cfg.problem_data()
    flux, deg = data.flux, data.deg
    kw = assemble_weights(grid, sc.order, cfg.problem.convention)
    rng = np.random.default_rng(vf.seed)
    report = V.VerificationReport()

    traj = run_viscous(sc, data, kw)
    if vf.inject == "expansion_shock":
        traj = V.expansion_shock_trajectory(traj)

    if "operator" in checks:
        report.add(_operator_checks(kw, rng, vf.random_pairs))
    if "maximum_principle" in checks:
        report.add(V.check_maximum_principle(traj))

    pair_jobs = {}
    if "comparison" in checks or "l1_contraction" in checks:
        upper = cfg.problem_data(shift=vf.shift)
        moved = cfg.problem_data(jump_offset=vf.shift)
        bounds = raw_bounds(sc, data, upper, moved)
        with ThreadPoolExecutor(max_workers=min(3, worker_count())) as pool:
            futs = {name: pool.submit(run_viscous, sc, d, kw, True, bounds)
                    for name, d in (("base", data), ("upper", upper), ("moved", moved))}
            pair_jobs = {name: f.result() for name, f in futs.items()}
    if "comparison" in checks:
        report.add(V.check_comparison(pair_jobs["base"], pair_jobs["upper"]))
    if "l1_contraction" in checks:
        report.add(V.check_l1_contraction(pair_jobs["base"], pair_jobs["moved"], "equal_boundary"))
        report.add(V.check_l1_contraction(pair_jobs["base"], pair_jobs["upper"], "full"))

    if "entropy" in checks or "negative_control" in checks:
        tf = V.default_test_functions(sc.domain, sc.t_end, delta, traj.bounds.a, traj.bounds.b)
        if "entropy" in checks:
            report.add(V.entropy_residual(traj, tf, flux, deg, kw, vf.entropy_rel_tol))
        if "negative_control" in checks:
            if flux.name == "burgers":
                fake = V.expansion_shock_trajectory(traj)
                tf_fake = V.default_test_functions(sc.domain, sc.t_end, delta, fake.bounds.a, fake.bounds.b)
                report.add(V.entropy_residual(fake, tf_fake, flux, deg, kw, vf.entropy_rel_tol,
                                              expect_violation=True))
            else:
                report.add(V.CheckRecord("entropy_negative_control",
                                         "entropy inequality against semi-entropy pairs",
                                         float("nan"), -vf.entropy_rel_tol, None))

    if "sweep" in checks:
        eps_list = _eps_list(cfg)
        sweep = vanishing_viscosity_sweep(cfg.solver_config(eps_list[0]), data, eps_list)
        report.add(V.check_cauchy(sweep))
        report.add(V.check_bv_uniformity(sweep, flux, deg, vf.bv_ratio))
        report.add(V.check_gagliardo_energy(sweep, deg))

    if "decomposition" in checks:
        layer = BoundaryLayer(sc.domain, delta)
        cut = CutoffXi(sc.eps, max(traj.bounds.L_f, 1.0), layer)
        psis = [rng.random(grid.n_cells) for _ in range(vf.random_pairs)]
        phis = [rng.random(grid.n_cells) for _ in range(vf.random_pairs)]
        report.add(V.check_layer_decomposition(kw, layer, psis, phis, cut))

    if "cutoff" in checks:
        cdelta = 0.25 * sc.domain.length
        layer = BoundaryLayer(sc.domain, cdelta)
        lf = max(traj.bounds.L_f, 1.0)
        report.add(V.check_cutoff_inequality(CutoffXi(0.1, lf, layer), V.default_profiles(sc.domain)))
        report.add(V.check_cutoff_limits(sc.domain, lf, cdelta))

    if "vector_field" in checks:
        us = [rng.uniform(traj.bounds.a, traj.bounds.b, grid.n_cells) for _ in range(vf.random_pairs)]
        ws = [rng.standard_normal(grid.n_cells) for _ in range(vf.random_pairs)]
        ws = [np.where(w == 0, 1.0, w) for w in ws]
        report.add(V.check_vector_field_positivity(kw, deg, us, ws))

    if "boundary_flux" in checks:
        lo, length = sc.domain.x_lo, sc.domain.length
        psi = lambda x: 1.0 + np.sin(2.0 * (x - lo) / length)
        dpsi = lambda x: 2.0 / length * np.cos(2.0 * (x - lo) / length)
        report.add(V.check_boundary_flux_limit(psi, dpsi, sc.domain, sc.order, 0.25 * length,
                                               levels=6, convention=cfg.problem.convention))

    if "commutator" in checks:
        lo, length = sc.domain.x_lo, sc.domain.length
        u = lambda x: np.sin(2.0 * (x - lo) / length) + ((x - lo) / length) ** 2
        du = lambda x: 2.0 / length * np.cos(2.0 * (x - lo) / length) + 2.0 * (x - lo) / length ** 2
        report.add(V.check_commutator(u, du, sc.order, domain=sc.domain, convention=cfg.problem.convention))
    return report


def _operator_checks(kw, rng, pairs: int) -> V.CheckRecord:
    """Constant annihilation (bit-exact) and discrete duality on random pairs."""
    worst_const = max(float(np.max(np.abs(apply_regional_laplacian(kw, np.full(kw.n, c)))))
                      for c in (-1.0, 0.0, 3.7))
    worst_dual = 0.0
    for _ in range(pairs):
        u = rng.standard_normal(kw.n)
        v = rng.standard_normal(kw.n)
        lhs = duality_pairing(kw, u, v) / kw.grid.spacing
        rhs = 0.5 * kw.c_ns * gagliardo_form(kw, u, v) / kw.grid.spacing
        worst_dual = max(worst_dual, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v)))
    ok = worst_const == 0.0 and worst_dual <= 1e-12
    return V.CheckRecord("operator_structure", "constants in the kernel and symmetric duality",
                         max(worst_const, worst_dual), 1e-12, bool(ok),
                         details={"constant": worst_const, "duality": worst_dual})


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    report = build_report(cfg)
    path = io.write_text(report.to_json(timing=cfg.verify.record_timing), out / "report.json")
    _finish(out, "verify", cfg, [path])
    for rec in report.records:
        flag = {True: "PASS", False: "FAIL", None: "N/A "}[rec.passed]
        soft = "" if rec.hard else " (reported)"
        print(f"{flag} {rec.name}: value = {rec.value:.6g} threshold = {rec.threshold:.6g}{soft}")
    if not report.passed:
        names = ", ".join(r.name for r in report.failures())
        return _fail("verify", f"{len(report.failures())} check(s) failed: {names}", EXIT_VERIFY)
    return EXIT_OK


def cmd_green(cfg: RunConfig, out: Path) -> int:
    order = FractionalOrder(cfg.problem.s)
    order.require_trace()
    dom = cfg.domain
    u = GreenTestFunction(lambda x: 1.0, lambda x: 0.0, order, dom)
    v = lambda x: 1.0
    rows, rate = green_refinement_study(u, v, cfg.verify.green_sizes, cfg.problem.convention)
    table = [(r.n_cells, r.volume, r.energy, r.boundary, r.residual, r.fitted_constant) for r in rows]
    path = io.write_table_csv(("n_cells", "volume", "energy", "boundary", "residual", "fitted_constant"),
                              table, out / "green.csv")
    _finish(out, "green", cfg, [path])
    for r in rows:
        print(f"N = {r.n_cells}: residual = {io.fmt(r.residual)}  fitted N_sigma = {io.fmt(r.fitted_constant)}")
    print(f"rate = {io.fmt(rate)}")
    return EXIT_OK


def cmd_constants(cfg: RunConfig, out: Path) -> int:
    p = cfg.problem
    sc = cfg.solver_config()
    data = cfg.problem_data()
    bounds = data_bounds(data.u0, data.ub.samples(np.linspace(0.0, sc.t_end, 65)), data.flux, data.deg)
    print(f"C_1,s = {io.fmt(normalization_constant(1, p.s, p.convention))}")
    order = FractionalOrder(p.s)
    if order.has_trace:
        print(f"N_sigma = {io.fmt(normal_deriv_constant(order.sigma, convention=p.convention))}")
    else:
        print("N_sigma = n/a (needs s > 1/2)")
    print(f"a = {io.fmt(bounds.a)}")
    print(f"b = {io.fmt(bounds.b)}")
    print(f"L_f = {bounds.L_f:g}")
    print(f"L_A = {bounds.L_A:g}")
    return EXIT_OK


COMMANDS = {"assemble": cmd_assemble, "solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify,
            "green": cmd_green, "constants": cmd_constants}


def run_command(verb: str, cfg: RunConfig, out=None) -> int:
    if verb not in COMMANDS:
        return _fail("usage", f"unknown verb {verb!r}", EXIT_CONFIG)
    try:
        return COMMANDS[verb](cfg, _out_dir(cfg, out))
    except SolverError as exc:
        return _fail("solver", exc, EXIT_SOLVER)
    except (io.OutputError, OSError) as exc:
        return _fail("io", exc, EXIT_IO)
    except ValueError as exc:
        # domain errors raised while building models from a validated config
        return _fail("config", exc, EXIT_CONFIG)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="reglap", description=__doc__.splitlines()[0])
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        more = len(exc.errors) - 1
        code = _fail("config", exc.errors[0] + (f" (+{more} more)" if more else ""), EXIT_CONFIG)
        for err in exc.errors[1:]:
            print(f"  {err}", file=sys.stderr)
        return code
    return run_command(args.verb, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
