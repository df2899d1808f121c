"""Vanishing-viscosity solver for u_t + f(u)_x + (-Delta)^s_Omega A(u) = 0.

One step of size dt:

1. explicit Rusanov update of the flux term, boundary states from u_b(t);
2. implicit solve of (I + dt eps L_loc + dt L_frac o A_eps) u_new = u*,
   with the nonlinear nonlocal term frozen by secant slopes and iterated
   (Picard) to a fixed point.

The implicit matrix is an M-matrix with row sums at least one, so every
linear solve is a convex combination of u* and the boundary values.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .geometry import Domain, Grid
from .model import (DataBounds, DegeneracyModel, FluxModel, data_bounds,
                    regularized_degeneracy, secant_slope)
from .operator import FractionalOrder, KernelWeights, assemble_weights

SPEED_FLOOR = 1e-12


class SolverError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class StepSizeError(SolverError):
    pass


def worker_count() -> int:
    env = os.environ.get("REGLAP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SolverConfig:
    eps: float
    s: float
    n_cells: int = 128
    t_end: float = 0.3
    cfl: float = 0.45
    picard_tol: float = 1e-12
    picard_max: int = 100
    save_every: int = 1
    domain: Domain = field(default_factory=Domain)
    mollify_width: float = 1.0   # kernel half-width in units of eps
    flux_speed: str = "local"     # Rusanov speed: "local" pair maximum or "global" L_f
    convention: str = "two_pi"
    max_dt: float | None = None
    scheme: str = "imex_euler"

    def __post_init__(self):
        if self.scheme != "imex_euler":
            raise ValueError("only the first-order IMEX Euler scheme is available")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.picard_tol > 0 or self.picard_max < 1:
            raise ValueError("picard_tol must be positive and picard_max >= 1")
        if self.flux_speed not in ("local", "global"):
            raise ValueError("flux_speed must be 'local' or 'global'")

    @property
    def grid(self) -> Grid:
        return Grid(self.domain, self.n_cells)

    @property
    def order(self) -> FractionalOrder:
        return FractionalOrder(self.s)


class BoundaryData:
    """Dirichlet values at (x_lo, x_hi) as functions of time."""

    def __init__(self, left: Callable[[float], float], right: Callable[[float], float]):
        self.left = left
        self.right = right

    @classmethod
    def constant(cls, left: float, right: float) -> "BoundaryData":
        lv, rv = float(left), float(right)
        return cls(lambda t: lv, lambda t: rv)

    def __call__(self, t: float) -> np.ndarray:
        return np.array([self.left(t), self.right(t)], dtype=float)

    def samples(self, times) -> np.ndarray:
        return np.array([self(t) for t in times])


@dataclass(frozen=True)
class ProblemData:
    u0: np.ndarray
    ub: BoundaryData
    flux: FluxModel
    deg: DegeneracyModel


def triangular_weights(half_width_cells: float) -> np.ndarray:
    """Normalised hat weights at integer offsets -M..M; [1.0] when narrower than a cell."""
    m = int(math.floor(half_width_cells))
    if m < 1:
        return np.array([1.0])
    offsets = np.arange(-m, m + 1, dtype=float)
    w = 1.0 - np.abs(offsets) / half_width_cells
    w = np.maximum(w, 0.0)
    return w / w.sum()


def mollify_cells(u: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Discrete convolution with edge padding, in difference form so that
    constants are reproduced exactly, then clipped to the original range."""
    u = np.asarray(u, dtype=float)
    m = (weights.size - 1) // 2
    if m == 0:
        return u.copy()
    padded = np.pad(u, m, mode="edge")
    out = u.copy()
    for j, w in enumerate(weights):
        out += w * (padded[j: j + u.size] - u)
    return np.clip(out, u.min(), u.max())


def regularize_data(data: ProblemData, eps: float, grid: Grid, width: float = 1.0,
                    n_time_nodes: int = 21) -> ProblemData:
    """Triangular-kernel smoothing of u0 in space and u_b in time.

    The kernel half-width is ``width * eps`` in both variables.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    half = width * eps
    u0 = mollify_cells(data.u0, triangular_weights(half / grid.spacing))
    nodes = np.linspace(-half, half, n_time_nodes)
    kern = np.maximum(1.0 - np.abs(nodes) / half, 0.0) if half > 0 else np.ones(1)
    kern = kern / kern.sum()
    raw = data.ub

    def smooth(side: Callable[[float], float]) -> Callable[[float], float]:
        def value(t: float) -> float:
            centre = side(t)
            acc = centre
            for tau, w in zip(nodes, kern):
                acc += w * (side(max(t - tau, 0.0)) - centre)
            return acc
        return value

    return replace(data, u0=u0, ub=BoundaryData(smooth(raw.left), smooth(raw.right)))


def wave_speed(flux: FluxModel, u_left, u_right, n_inner: int = 3):
    """max |f'| over [min, max] of each pair, sampled at the ends and inside."""
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    lo = np.minimum(u_left, u_right)
    hi = np.maximum(u_left, u_right)
    speed = np.maximum(np.abs(flux.f_prime(lo)), np.abs(flux.f_prime(hi)))
    for frac in np.linspace(0.0, 1.0, n_inner + 2)[1:-1]:
        speed = np.maximum(speed, np.abs(flux.f_prime(lo + frac * (hi - lo))))
    return speed


def rusanov_flux(flux: FluxModel, u_left, u_right, bounds: DataBounds | None = None,
                 speed: str = "local"):
    """F = (f(u_l) + f(u_r))/2 - alpha (u_r - u_l)/2.

    ``speed="local"`` takes alpha as the largest |f'| between the two
    states; ``"global"`` uses L_f from ``bounds``.
    """
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    if speed == "global":
        if bounds is None:
            raise ValueError("global speed needs data bounds")
        alpha = bounds.L_f
    else:
        alpha = wave_speed(flux, u_left, u_right)
    out = 0.5 * (flux.f(u_left) + flux.f(u_right)) - 0.5 * alpha * (u_right - u_left)
    return out if np.ndim(out) else float(out)


def face_fluxes(flux: FluxModel, u: np.ndarray, boundary: np.ndarray, bounds: DataBounds,
                speed: str) -> np.ndarray:
    """Numerical flux at all N+1 faces, boundary states on the outer faces."""
    left_states = np.concatenate(([boundary[0]], u))
    right_states = np.concatenate((u, [boundary[1]]))
    return rusanov_flux(flux, left_states, right_states, bounds, speed)


def local_laplacian(n: int, dx: float) -> np.ndarray:
    """Dense three-point -d2/dx2 with Dirichlet values on the outer faces
    eliminated (the boundary face sits half a cell from the first centre)."""
    lap = np.zeros((n, n))
    idx = np.arange(n)
    lap[idx, idx] = 2.0
    lap[idx[:-1], idx[:-1] + 1] = -1.0
    lap[idx[1:], idx[1:] - 1] = -1.0
    lap[0, 0] = 3.0
    lap[-1, -1] = 3.0
    return lap / dx ** 2


def local_laplacian_boundary(n: int, dx: float, boundary: np.ndarray) -> np.ndarray:
    """Right-hand-side contribution of the Dirichlet face values."""
    rhs = np.zeros(n)
    rhs[0] = 2.0 * boundary[0] / dx ** 2
    rhs[-1] += 2.0 * boundary[1] / dx ** 2
    return rhs


@dataclass
class StepReport:
    picard_iterations: int
    picard_residual: float
    max_principle_slack: float
    mass_defect: float


class ImexStepper:
    """Holds the pieces of one discretisation that do not change between steps."""

    def __init__(self, cfg: SolverConfig, data: ProblemData, bounds: DataBounds,
                 weights: KernelWeights | None = None):
        self.cfg = cfg
        self.data = data
        self.bounds = bounds
        self.grid = cfg.grid
        self.kw = weights if weights is not None else assemble_weights(self.grid, cfg.order, cfg.convention)
        if self.kw.n != self.grid.n_cells:
            raise ValueError("weights do not match the grid")
        self.deg_eps = regularized_degeneracy(data.deg, cfg.eps)
        n = self.grid.n_cells
        self.lap = local_laplacian(n, self.grid.spacing)
        self.cw = self.kw.c_ns * self.kw.weights

    def time_step(self) -> tuple[float, int]:
        dx = self.grid.spacing
        dt_max = self.cfg.cfl * dx / max(self.bounds.L_f, SPEED_FLOOR)
        if self.cfg.max_dt is not None:
            dt_max = min(dt_max, self.cfg.max_dt)
        n_steps = max(1, int(math.ceil(self.cfg.t_end / dt_max - 1e-12)))
        return self.cfg.t_end / n_steps, n_steps

    def explicit(self, u: np.ndarray, t: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
        dx = self.grid.spacing
        speed = self.cfg.flux_speed
        if speed == "local":
            lam = dt / dx * float(np.max(wave_speed(self.data.flux, u, u), initial=0.0))
        else:
            lam = dt / dx * self.bounds.L_f
        if lam > 1.0 + 1e-12:
            raise StepSizeError(f"CFL number {lam:.3g} exceeds 1 at t={t:.6g}")
        F = face_fluxes(self.data.flux, u, self.data.ub(t), self.bounds, speed)
        return u - dt / dx * np.diff(F), F

    def nonlocal_apply(self, w: np.ndarray) -> np.ndarray:
        Aw = self.deg_eps.A(w)
        return np.einsum("ij,ij->i", self.cw, Aw[:, None] - Aw[None, :])

    def implicit_residual(self, w, rhs, dt):
        eps = self.cfg.eps
        return w + dt * eps * (self.lap @ w) + dt * self.nonlocal_apply(w) - rhs

    def picard_solve(self, rhs_state: np.ndarray, guess: np.ndarray, t_new: float,
                     dt: float) -> tuple[np.ndarray, int, float]:
        """Fixed point of the secant-frozen linear problem.

        The stopping test uses the nonlinear residual r of the new iterate:
        the next update solves M dw = -r with an M-matrix of row sums >= 1,
        so ||dw||_inf <= ||r||_inf and ||r|| <= tol certifies the increment
        criterion without spending one more solve.
        """
        n = self.grid.n_cells
        eps = self.cfg.eps
        boundary = self.data.ub(t_new)
        rhs = rhs_state + dt * eps * local_laplacian_boundary(n, self.grid.spacing, boundary)
        base = np.eye(n) + dt * eps * self.lap
        w = np.asarray(guess, dtype=float).copy()
        trace = []
        for it in range(1, self.cfg.picard_max + 1):
            F = secant_slope(self.deg_eps, w[:, None], w[None, :])
            coupling = dt * self.cw * F
            mat = base - coupling
            mat[np.diag_indices(n)] += coupling.sum(axis=1)
            w_new = linalg.solve(mat, rhs, assume_a="gen", check_finite=False)
            res = float(np.max(np.abs(self.implicit_residual(w_new, rhs, dt))))
            step = float(np.max(np.abs(w_new - w)))
            trace.append((it, step, res))
            w = w_new
            if res <= self.cfg.picard_tol or step <= self.cfg.picard_tol:
                return w, it, res
        raise SolverError(f"Picard iteration did not converge in {self.cfg.picard_max} iterations "
                          f"at t={t_new:.6g}", trace)

    def step(self, u: np.ndarray, t: float, dt: float) -> tuple[np.ndarray, StepReport]:
        u_star, F = self.explicit(u, t, dt)
        u_new, iters, res = self.picard_solve(u_star, u_star, t + dt, dt)
        ub_new = self.data.ub(t + dt)
        lo = min(self.bounds.a, float(u.min()))
        hi = max(self.bounds.b, float(u.max()))
        slack = min(float(u_new.min()) - lo, hi - float(u_new.max()))
        dx = self.grid.spacing
        eps = self.cfg.eps
        # mass balance: flux through the two outer faces plus the local
        # viscous boundary flux; the nonlocal term conserves mass
        visc_out = 2.0 * eps * ((u_new[0] - ub_new[0]) + (u_new[-1] - ub_new[1])) / dx
        predicted = -dt * (F[-1] - F[0]) - dt * visc_out
        defect = dx * float(np.sum(u_new) - np.sum(u)) - predicted
        return u_new, StepReport(iters, res, slack, defect)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    boundary: np.ndarray
    config: SolverConfig
    bounds: DataBounds
    dt: float
    reports: list = field(default_factory=list)
    x: np.ndarray | None = None
    flux: FluxModel | None = None
    deg: DegeneracyModel | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def raw_bounds(cfg: SolverConfig, *datasets: ProblemData) -> DataBounds:
    """Joint bounds of unregularised data, ub sampled at 65 times on [0, t_end]."""
    probe_times = np.linspace(0.0, cfg.t_end, 65)
    first = datasets[0]
    u0 = np.concatenate([np.asarray(d.u0, dtype=float) for d in datasets])
    ub = np.concatenate([d.ub.samples(probe_times).ravel() for d in datasets])
    return data_bounds(u0, ub, first.flux, first.deg)


def run_viscous(cfg: SolverConfig, data: ProblemData, weights: KernelWeights | None = None,
                regularize: bool = True, bounds: DataBounds | None = None) -> Trajectory:
    """Integrate the regularised problem from 0 to t_end.

    Time step and data bounds come from the raw data so that runs with
    different eps share the same grid and step.  Pass ``bounds`` (for
    instance from :func:`raw_bounds` over several datasets) to force a
    common step across runs with different data.
    """
    grid = cfg.grid
    u0 = np.asarray(data.u0, dtype=float)
    if u0.shape != (grid.n_cells,):
        raise ValueError(f"u0 has shape {u0.shape}, expected ({grid.n_cells},)")
    if bounds is None:
        bounds = raw_bounds(cfg, data)
    work = regularize_data(data, cfg.eps, grid, cfg.mollify_width) if regularize else data
    stepper = ImexStepper(cfg, work, bounds, weights)
    dt, n_steps = stepper.time_step()
    u = work.u0.copy()
    times = [0.0]
    states = [u.copy()]
    boundary = [work.ub(0.0)]
    reports = []
    for n in range(n_steps):
        t = n * dt
        u, rep = stepper.step(u, t, dt)
        reports.append(rep)
        if (n + 1) % cfg.save_every == 0 or n + 1 == n_steps:
            times.append((n + 1) * dt)
            states.append(u.copy())
            boundary.append(work.ub((n + 1) * dt))
    return Trajectory(np.array(times), np.array(states), np.array(boundary), cfg, bounds, dt,
                      reports, grid.centers.copy(), data.flux, data.deg)


@dataclass
class SweepResult:
    eps: list
    trajectories: list
    cauchy: list           # (eps_hi, eps_lo, l1_diff)
    monotone: bool
    failures: dict


def l1_distance(u: np.ndarray, v: np.ndarray, dx: float) -> float:
    return float(dx * np.sum(np.abs(np.asarray(u) - np.asarray(v))))


def vanishing_viscosity_sweep(cfg: SolverConfig, data: ProblemData, eps_list: Sequence[float],
                              workers: int | None = None) -> SweepResult:
    """Run each eps on the same grid and step; tabulate consecutive L1 gaps at t_end."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("need at least three eps values")
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be nonincreasing")
    weights = assemble_weights(cfg.grid, cfg.order, cfg.convention)

    def one(eps):
        try:
            return run_viscous(replace(cfg, eps=eps), data, weights)
        except SolverError as exc:
            return exc

    n_workers = min(workers or worker_count(), len(eps_list))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one, eps_list))
    else:
        results = [one(e) for e in eps_list]
    failures = {e: str(r) for e, r in zip(eps_list, results) if isinstance(r, Exception)}
    dx = cfg.grid.spacing
    rows = []
    for (e_hi, r_hi), (e_lo, r_lo) in zip(zip(eps_list, results), zip(eps_list[1:], results[1:])):
        if isinstance(r_hi, Exception) or isinstance(r_lo, Exception):
            rows.append((e_hi, e_lo, float("nan")))
        else:
            rows.append((e_hi, e_lo, l1_distance(r_hi.final, r_lo.final, dx)))
    diffs = [r[2] for r in rows]
    monotone = all(b < a for a, b in zip(diffs, diffs[1:])) and not failures
    return SweepResult(eps_list, results, rows, monotone, failures)


def time_bv(traj: Trajectory) -> np.ndarray:
    """sum_i |u^{n+1}_i - u^n_i| dx / dt for consecutive saved states."""
    dx = traj.config.grid.spacing
    gaps = np.diff(traj.times)
    return dx * np.sum(np.abs(np.diff(traj.states, axis=0)), axis=1) / gaps


def space_bv(traj: Trajectory) -> np.ndarray:
    """sum_i |u_{i+1} - u_i| at each saved time."""
    return np.sum(np.abs(np.diff(traj.states, axis=1)), axis=1)
