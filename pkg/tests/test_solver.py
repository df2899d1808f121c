from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from reglap.geometry import Domain, Grid
from reglap.model import (DataBounds, burgers, degenerate_threshold, linear_advection, linear_degeneracy,
                          porous_medium, zero_degeneracy)
from reglap.solver import (BoundaryData, ImexStepper, ProblemData, SolverConfig, SolverError, StepSizeError,
                           Trajectory, local_laplacian, local_laplacian_boundary, mollify_cells, raw_bounds,
                           regularize_data, run_viscous, rusanov_flux, space_bv, time_bv,
                           triangular_weights, vanishing_viscosity_sweep, worker_count)

unit = st.floats(0.0, 1.0, allow_nan=False)


def riemann(cfg, left=1.0, right=0.0, flux=None, deg=None):
    x = cfg.grid.centers
    return ProblemData(np.where(x < 0.5, left, right), BoundaryData.constant(left, right),
                       flux or burgers(), deg or degenerate_threshold(0.5))


def test_config_validation():
    for bad in (dict(eps=0.0), dict(s=1.0), dict(cfl=1.0), dict(t_end=0.0), dict(picard_max=0),
                dict(flux_speed="upwind"), dict(scheme="rk4")):
        with pytest.raises(ValueError):
            SolverConfig(**{"eps": 0.01, "s": 0.5, **bad})


def test_rusanov_hand_values():
    f = burgers()
    # (f(1) + f(0))/2 + alpha/2 with alpha = max |u| on [0, 1] = 1
    assert rusanov_flux(f, 1.0, 0.0) == pytest.approx(0.75)
    bounds = DataBounds(-2.0, 2.0, 2.0, 0.0)
    assert rusanov_flux(f, 1.0, 0.0, bounds, "global") == pytest.approx(1.25)
    with pytest.raises(ValueError):
        rusanov_flux(f, 1.0, 0.0, None, "global")


@given(st.floats(-5, 5), st.sampled_from(["local", "global"]))
def test_rusanov_consistency(u, speed):
    bounds = DataBounds(-5.0, 5.0, 5.0, 0.0)
    for f in (burgers(), linear_advection(-1.3)):
        assert rusanov_flux(f, u, u, bounds, speed) == pytest.approx(float(f.f(u)))


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 0.5))
def test_global_rusanov_is_monotone(ul, ur, h):
    bounds = DataBounds(-1.5, 1.5, 1.5, 0.0)
    f = burgers()
    base = rusanov_flux(f, ul, ur, bounds, "global")
    assert rusanov_flux(f, ul + h, ur, bounds, "global") >= base - 1e-15
    assert rusanov_flux(f, ul, ur + h, bounds, "global") <= base + 1e-15


@given(st.floats(0.0, 20.0))
def test_triangular_weights_normalised_and_symmetric(half):
    w = triangular_weights(half)
    assert w.sum() == pytest.approx(1.0)
    assert np.allclose(w, w[::-1])
    assert np.all(w >= 0)


@given(arrays(float, 40, elements=st.floats(-3, 3)), st.floats(0.0, 8.0))
def test_mollifier_keeps_range(u, half):
    out = mollify_cells(u, triangular_weights(half))
    assert out.min() >= u.min() and out.max() <= u.max()


@given(st.floats(-3, 3), st.floats(0.0, 8.0))
def test_mollifier_reproduces_constants_exactly(c, half):
    u = np.full(30, c)
    assert np.array_equal(mollify_cells(u, triangular_weights(half)), u)


def test_initial_smoothing_error_halves_with_eps():
    # a unit jump smoothed by a hat of half-width h differs from itself by h/3 in L1
    grid = Grid(Domain(), 2048)
    x = grid.centers
    u0 = np.where(x < 0.5, 1.0, 0.0)
    data = ProblemData(u0, BoundaryData.constant(1.0, 0.0), burgers(), zero_degeneracy())
    errs = []
    for eps in (0.08, 0.04, 0.02):
        sm = regularize_data(data, eps, grid).u0
        errs.append(grid.spacing * np.sum(np.abs(sm - u0)))
        assert errs[-1] == pytest.approx(eps / 3, rel=0.05)
    assert all(b / a == pytest.approx(0.5, abs=0.05) for a, b in zip(errs, errs[1:]))


def test_boundary_smoothing_in_time():
    jump = BoundaryData(lambda t: 1.0 if t >= 0.1 else 0.0, lambda t: 2.0)
    data = ProblemData(np.zeros(8), jump, burgers(), zero_degeneracy())
    sm = regularize_data(data, 0.02, Grid(Domain(), 8)).ub
    assert sm(0.1)[1] == 2.0
    assert sm(0.0)[0] == 0.0 and sm(0.2)[0] == 1.0
    assert 0.0 < sm(0.1)[0] < 1.0
    with pytest.raises(ValueError):
        regularize_data(data, 0.0, Grid(Domain(), 8))


def test_local_laplacian_exact_on_linear_field():
    # ghost elimination places the boundary value on the face, so a linear profile is exact
    n, dx = 16, 1 / 16
    x = (np.arange(n) + 0.5) * dx
    u = 2.0 - 3.0 * x
    resid = local_laplacian(n, dx) @ u - local_laplacian_boundary(n, dx, np.array([2.0, -1.0]))
    assert np.max(np.abs(resid)) <= 1e-9


def test_time_step_divides_horizon_and_respects_cfl():
    cfg = SolverConfig(eps=0.01, s=0.75, n_cells=64, t_end=0.3)
    data = riemann(cfg, 2.0, 0.0)
    st_ = ImexStepper(cfg, data, raw_bounds(cfg, data))
    dt, n = st_.time_step()
    assert n * dt == pytest.approx(0.3, rel=1e-15)
    assert dt <= cfg.cfl * cfg.grid.spacing / 2.0 + 1e-15


def test_constant_state_is_preserved():
    cfg = SolverConfig(eps=0.02, s=0.6, n_cells=32, t_end=0.05)
    data = ProblemData(np.full(32, 0.7), BoundaryData.constant(0.7, 0.7), burgers(), porous_medium())
    traj = run_viscous(cfg, data)
    assert np.max(np.abs(traj.states - 0.7)) <= 1e-14


@given(arrays(float, 24, elements=unit), unit, unit, st.sampled_from([0.3, 0.75]),
       st.sampled_from(["local", "global"]))
def test_discrete_maximum_principle_random_data(u0, left, right, s, speed):
    cfg = SolverConfig(eps=0.02, s=s, n_cells=24, t_end=0.03, flux_speed=speed)
    data = ProblemData(u0, BoundaryData.constant(left, right), burgers(), porous_medium())
    traj = run_viscous(cfg, data)
    lo = min(u0.min(), left, right)
    hi = max(u0.max(), left, right)
    assert traj.states.min() >= lo - 1e-12 and traj.states.max() <= hi + 1e-12


def test_mass_bookkeeping_closes_every_step():
    cfg = SolverConfig(eps=0.01, s=0.75, n_cells=64, t_end=0.1)
    traj = run_viscous(cfg, riemann(cfg))
    assert max(abs(r.mass_defect) for r in traj.reports) <= 1e-13


def test_linear_degeneracy_converges_in_one_picard_iteration():
    cfg = SolverConfig(eps=0.01, s=0.75, n_cells=32, t_end=0.05)
    traj = run_viscous(cfg, riemann(cfg, deg=linear_degeneracy(0.5)))
    assert all(r.picard_iterations == 1 for r in traj.reports)


def test_picard_iterations_do_not_grow_as_dt_shrinks():
    base = SolverConfig(eps=0.01, s=0.75, n_cells=64, t_end=0.05)
    counts = []
    for max_dt in (None, 2e-3, 5e-4):
        cfg = replace(base, max_dt=max_dt)
        traj = run_viscous(cfg, riemann(cfg, deg=porous_medium()))
        counts.append(max(r.picard_iterations for r in traj.reports))
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_picard_failure_raises_solver_error():
    cfg = SolverConfig(eps=0.01, s=0.75, n_cells=32, t_end=0.05, picard_max=1, picard_tol=1e-15)
    with pytest.raises(SolverError):
        run_viscous(cfg, riemann(cfg, deg=porous_medium()))


def test_explicit_step_rejects_oversized_dt():
    cfg = SolverConfig(eps=0.01, s=0.75, n_cells=32)
    data = riemann(cfg, 1.0, 0.0)
    st_ = ImexStepper(cfg, data, raw_bounds(cfg, data))
    with pytest.raises(StepSizeError):
        st_.explicit(data.u0, 0.0, 2.0 * cfg.grid.spacing)


def test_time_convergence_is_first_order():
    base = SolverConfig(eps=0.05, s=0.75, n_cells=32, t_end=0.1, picard_tol=1e-13)
    x = base.grid.centers
    data = ProblemData(0.5 + 0.3 * np.sin(np.pi * x), BoundaryData.constant(0.5, 0.5), burgers(),
                       porous_medium())
    def final(dt):
        return run_viscous(replace(base, max_dt=dt), data).final
    ref = final(0.1 / 1024)
    errs = [np.max(np.abs(final(0.1 / n) - ref)) for n in (32, 64, 128)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(1.6 < r < 2.6 for r in ratios), ratios


def test_joint_bounds_give_paired_runs_the_same_step():
    cfg = SolverConfig(eps=0.01, s=0.75, n_cells=32, t_end=0.05)
    a = riemann(cfg, 1.0, 0.0)
    b = riemann(cfg, 1.5, 0.2)
    bounds = raw_bounds(cfg, a, b)
    ta = run_viscous(cfg, a, bounds=bounds)
    tb = run_viscous(cfg, b, bounds=bounds)
    assert ta.dt == tb.dt and np.array_equal(ta.times, tb.times)


def test_shape_mismatch_rejected():
    cfg = SolverConfig(eps=0.01, s=0.75, n_cells=32)
    bad = ProblemData(np.zeros(31), BoundaryData.constant(0, 0), burgers(), porous_medium())
    with pytest.raises(ValueError):
        run_viscous(cfg, bad)


def test_bv_functionals_hand_values():
    cfg = SolverConfig(eps=0.01, s=0.5, n_cells=4, t_end=1.0)
    states = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0]])
    traj = Trajectory(np.array([0.0, 0.5]), states, np.zeros((2, 2)), cfg,
                      DataBounds(0, 1, 1, 1), 0.5)
    assert list(space_bv(traj)) == [2.0, 2.0]
    # one cell changed by 1: dx * 1 / dt = 0.25 / 0.5
    assert time_bv(traj)[0] == pytest.approx(0.5)


def test_sweep_rows_and_validation():
    cfg = SolverConfig(eps=0.05, s=0.75, n_cells=32, t_end=0.05)
    data = riemann(cfg)
    sw = vanishing_viscosity_sweep(cfg, data, [0.05, 0.025, 0.0125], workers=2)
    assert [r[:2] for r in sw.cauchy] == [(0.05, 0.025), (0.025, 0.0125)]
    assert not sw.failures
    serial = vanishing_viscosity_sweep(cfg, data, [0.05, 0.025, 0.0125], workers=1)
    assert [r[2] for r in serial.cauchy] == [r[2] for r in sw.cauchy]
    with pytest.raises(ValueError):
        vanishing_viscosity_sweep(cfg, data, [0.05, 0.025])
    with pytest.raises(ValueError):
        vanishing_viscosity_sweep(cfg, data, [0.01, 0.02, 0.03])


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("REGLAP_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("REGLAP_THREADS", "zero")
    assert worker_count() >= 1
