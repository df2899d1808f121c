"""Machine-checkable assertions over solver output and over the auxiliary
inequalities used in the existence and contraction arguments.

Every check returns a :class:`CheckRecord` and never raises on a failed
property; only broken preconditions (mismatched discretisations, unordered
data for a comparison check) raise :class:`PreconditionError`.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import (BoundaryLayer, CutoffXi, Domain, Grid, boundary_bump, cutoff_integrals,
                       cutoff_xi, cutoff_xi_slope, omega_delta_partition)
from .green import fractional_normal_derivative, normal_deriv_constant, regional_laplacian_at, _quad
from .model import (DataBounds, DegeneracyModel, FluxModel, regularized_degeneracy, semi_part,
                    semi_sign, sample_interval)
from .operator import (FractionalOrder, KernelWeights, apply_regional_laplacian, derivative_commutator,
                       assemble_weights, gagliardo_form, normalization_constant)
from .solver import SweepResult, Trajectory, rusanov_flux, space_bv, time_bv

TOL_EXACT = 1e-12
TOL_CONTRACTION = 1e-10
TOL_ENTROPY_REL = 1e-6
BV_RATIO = 1.25
# outer integrals whose integrand is itself a quadrature: no point asking for the floor
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_OUTER = dict(limit=100, epsabs=1e-13, epsrel=1e-10)


class PreconditionError(ValueError):
    pass


@dataclass
class CheckRecord:
    name: str
    anchor: str
    value: float
    threshold: float
    passed: bool | None          # None: not applicable
    runtime_ms: float = 0.0
    hard: bool = True            # soft checks are reported but never fail a run
    details: dict = field(default_factory=dict)

    def as_dict(self, timing: bool = False) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "value": _finite_or_none(self.value),
            "threshold": _finite_or_none(self.threshold),
            "pass": self.passed,
            "runtime_ms": round(self.runtime_ms, 3) if timing else None,
        }


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        rec = fn(*args, **kwargs)
        rec.runtime_ms = 1e3 * (time.perf_counter() - start)
        return rec
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@dataclass
class VerificationReport:
    records: list = field(default_factory=list)

    def add(self, rec: CheckRecord) -> CheckRecord:
        self.records.append(rec)
        return rec

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.records if r.hard)

    def failures(self) -> list:
        return [r for r in self.records if r.hard and r.passed is False]

    def to_json(self, timing: bool = False) -> str:
        body = {"checks": [r.as_dict(timing) for r in self.records], "pass": self.passed}
        return json.dumps(body, indent=2, allow_nan=False) + "\n"


# solver-output checks ----------------------------------------------------------

@_timed
def check_maximum_principle(traj: Trajectory, bounds: DataBounds | None = None,
                            tol: float = TOL_EXACT) -> CheckRecord:
    """Every saved state stays in [a, b] of the data, and each step stays within
    the range of the previous state and the data range."""
    bounds = bounds or traj.bounds
    states = traj.states
    excess = max(float(np.max(states - bounds.b, initial=-np.inf)),
                 float(np.max(bounds.a - states, initial=-np.inf)))
    step_excess = -np.inf
    for old, new in zip(states[:-1], states[1:]):
        lo = min(bounds.a, float(old.min()))
        hi = max(bounds.b, float(old.max()))
        step_excess = max(step_excess, float(new.max()) - hi, lo - float(new.min()))
    value = max(excess, step_excess)
    return CheckRecord("maximum_principle", "maximum principle for the regularized problem",
                       value, tol, bool(value <= tol),
                       details={"global_excess": excess, "step_excess": step_excess,
                                "sup_abs": float(np.max(np.abs(states)))})


def _require_shared(tu: Trajectory, tv: Trajectory):
    cu, cv = tu.config, tv.config
    same = (cu.n_cells == cv.n_cells and cu.domain == cv.domain and cu.s == cv.s and cu.eps == cv.eps
            and tu.dt == tv.dt and tu.times.shape == tv.times.shape and np.array_equal(tu.times, tv.times))
    if not same:
        raise PreconditionError("trajectories do not share grid, step, eps and s")


@_timed
def check_comparison(tu: Trajectory, tv: Trajectory, tol: float = TOL_EXACT) -> CheckRecord:
    """u <= v everywhere, given u_0 <= v_0 and u_b <= v_b."""
    _require_shared(tu, tv)
    if np.any(tu.states[0] > tv.states[0]) or np.any(tu.boundary > tv.boundary):
        raise PreconditionError("data are not ordered; the comparison check does not apply")
    value = float(np.max(tu.states - tv.states))
    return CheckRecord("comparison", "comparison principle for ordered data", value, tol,
                       bool(value <= tol))


@_timed
def check_l1_contraction(tu: Trajectory, tv: Trajectory, mode: str = "equal_boundary",
                         tol: float = TOL_CONTRACTION, delta: float | None = None) -> CheckRecord:
    """equal_boundary: ||u - v||_1 nonincreasing between consecutive saved times.

    full: ||u - v||_1(t) against ||u_0 - v_0||_1 + L_f int |u_b - v_b| minus
    the normal-derivative boundary term.  Reported, never a hard failure.
    """
    _require_shared(tu, tv)
    dx = tu.config.grid.spacing
    dist = dx * np.sum(np.abs(tu.states - tv.states), axis=1)
    if mode == "equal_boundary":
        if not np.array_equal(tu.boundary, tv.boundary):
            raise PreconditionError("equal_boundary mode needs identical boundary data")
        growth = float(np.max(np.diff(dist), initial=-np.inf))
        return CheckRecord("l1_contraction_equal_boundary", "L1 contraction with equal boundary data",
                           growth, tol, bool(growth <= tol),
                           details={"l1_initial": float(dist[0]), "l1_final": float(dist[-1])})
    if mode == "full":
        bounds = tu.bounds
        gap = np.sum(np.abs(tu.boundary - tv.boundary), axis=1)
        # trapezoid in time of L_f sum_r |u_b - v_b|
        boundary_growth = np.concatenate(([0.0], np.cumsum(0.5 * (gap[1:] + gap[:-1]) * np.diff(tu.times))))
        normal_term = _normal_boundary_term(tu, tv, delta)
        rhs = dist[0] + bounds.L_f * boundary_growth - normal_term
        value = float(np.max(dist - rhs))
        return CheckRecord("l1_contraction_full", "L1 contraction with boundary terms",
                           value, tol, bool(value <= tol), hard=False,
                           details={"normal_term": normal_term.tolist()})
    raise ValueError(f"unknown mode {mode!r}")


def _normal_boundary_term(tu: Trajectory, tv: Trajectory, delta: float | None) -> np.ndarray:
    """N_sigma int_0^t sum_r d_nu^sigma |A(u_b) - A(v_b)| with the trace extended
    constantly inward; zero when s <= 1/2 (no trace)."""
    order = tu.config.order
    n_times = len(tu.times)
    if not order.has_trace:
        return np.zeros(n_times)
    deg = tu.deg
    dom = tu.config.domain
    n_sig = normal_deriv_constant(order.sigma, convention=tu.config.convention)
    vals = np.zeros(n_times)
    for n in range(n_times):
        for side, r in enumerate(dom.boundary):
            level = float(abs(deg.A(tu.boundary[n, side]) - deg.A(tv.boundary[n, side])))
            vals[n] += fractional_normal_derivative(lambda x, c=level: c, r, dom, order, delta=delta)
    integ = np.concatenate(([0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(tu.times))))
    return n_sig * integ


# entropy inequality --------------------------------------------------------------

def _smooth_step(z):
    """C-infinity transition from 0 (z <= 0) to 1 (z >= 1)."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)
        b = np.where(z < 1, np.exp(-1.0 / np.where(z < 1, 1.0 - z, 1.0)), 0.0)
    return a / (a + b)


def smooth_bump(z):
    """exp(1 - 1/(1 - z^2)) on |z| < 1, zero outside; peak value 1."""
    z = np.asarray(z, dtype=float)
    inside = np.abs(z) < 1
    safe = np.where(inside, 1.0 - z * z, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)


@dataclass(frozen=True)
class SpaceTimeBump:
    """psi(t, x) = tau(t) phi(x) with smooth nonnegative factors.

    ``centers`` and ``width`` place one or more space bumps (their sum);
    time profile ``early`` equals 1 near t = 0 and ``late`` vanishes there,
    both vanish from ``t_stop`` on.
    """
    kind: str                 # "interior" or "boundary"
    centers: tuple
    width: float
    window: str               # "early" or "late"
    t_stop: float

    def space(self, x):
        x = np.asarray(x, dtype=float)
        return sum(smooth_bump((x - c) / self.width) for c in self.centers)

    def time(self, t):
        t = np.asarray(t, dtype=float)
        if self.window == "early":
            return 1.0 - _smooth_step((t - 0.3 * self.t_stop) / (0.7 * self.t_stop))
        return smooth_bump((t - 0.55 * self.t_stop) / (0.4 * self.t_stop))

    def __call__(self, t, x):
        return np.multiply.outer(self.time(t), self.space(x))

    @property
    def label(self) -> str:
        where = "+".join(f"{c:g}" for c in self.centers)
        return f"{self.kind}[{where};w={self.width:g};{self.window}]"


@dataclass
class TestFunctionDict:
    bumps: list
    levels: list
    delta: float

    def pairs(self):
        for psi in self.bumps:
            for k in self.levels:
                for sign in (1, -1):
                    yield psi, k, sign


def default_test_functions(domain: Domain, t_end: float, delta: float, a: float, b: float,
                           margin: float = 0.5) -> TestFunctionDict:
    """Five interior and five boundary-touching space bumps, two time windows each,
    and seven entropy levels from a - margin to b + margin."""
    lo, hi, length = domain.x_lo, domain.x_hi, domain.length
    t_stop = 0.9 * t_end
    bumps = []
    for frac in (0.3, 0.4, 0.5, 0.6, 0.7):
        c = lo + frac * length
        w = min(0.15 * length, c - lo - delta, hi - delta - c)
        if w <= 0:
            raise PreconditionError("delta too large for interior test functions")
        for window in ("early", "late"):
            bumps.append(SpaceTimeBump("interior", (c,), w, window, t_stop))
    for centers, w in (((lo,), 0.1), ((lo,), 0.3), ((hi,), 0.1), ((hi,), 0.3), ((lo, hi), 0.2)):
        for window in ("early", "late"):
            bumps.append(SpaceTimeBump("boundary", centers, w * length, window, t_stop))
    mid = 0.5 * (a + b)
    levels = [a - margin, a, a + 0.25 * (b - a), mid, a + 0.75 * (b - a), b, b + margin]
    return TestFunctionDict(bumps, levels, delta)


def admissible(psi: SpaceTimeBump, k: float, sign: int, traj: Trajectory, deg: DegeneracyModel,
               layer_cells: np.ndarray | None = None) -> tuple[bool, str]:
    """Interior bumps must vanish on the boundary layer; boundary bumps need
    sgn(A(u_b) - A(k)) psi = 0 at every saved time on each side they touch."""
    dom = traj.config.domain
    if psi.kind == "interior":
        if layer_cells is not None and layer_cells.size:
            x = traj.config.grid.centers[layer_cells]
            if np.any(psi.space(x) != 0):
                return False, "interior bump does not vanish on the boundary layer"
        return True, ""
    tau = psi.time(traj.times)
    for side, r in enumerate(dom.boundary):
        if float(psi.space(r)) == 0.0:
            continue
        jump = semi_sign(deg.A(traj.boundary[:, side]) - deg.A(k), sign)
        if np.any((jump != 0) & (tau != 0)):
            return False, f"sgn(A(u_b) - A(k)) nonzero on the support at x = {r:g}"
    return True, ""


@dataclass
class EntropyTerms:
    time: float
    flux: float
    boundary: float
    viscous: float
    gagliardo: float

    @property
    def total(self) -> float:
        return self.time + self.flux + self.boundary + self.viscous + self.gagliardo

    @property
    def scale(self) -> float:
        return abs(self.time) + abs(self.flux) + abs(self.boundary) + abs(self.viscous) + abs(self.gagliardo)


def _numerical_entropy_flux(flux: FluxModel, left, right, k: float, sign: int, bounds, speed):
    """Q^+ = F(l v k, r v k) - f(k), Q^- = f(k) - F(l ^ k, r ^ k)."""
    if sign == 1:
        return rusanov_flux(flux, np.maximum(left, k), np.maximum(right, k), bounds, speed) - flux.f(k)
    return flux.f(k) - rusanov_flux(flux, np.minimum(left, k), np.minimum(right, k), bounds, speed)


class EntropyEvaluator:
    """Discrete space-time form of the entropy inequality for a trajectory.

    For a level k and sign, with eta = (u - k)^+- and eta_A = (A_eps(u) - A_eps(k))^+-:

    time      sum_n dx eta^n (psi^{n+1} - psi^n) + dx eta^0 psi^0 - dx eta^M psi^M
    flux      sum_n dt sum_{interior faces} Q^n (psi^{n+1}_{i+1} - psi^{n+1}_i)
    boundary  sum_n dt L sum_r eta(u_b^n(r)) psi^{n+1}(cell next to r)
    viscous   -eps sum_n dt/dx [ sum_faces d(eta^{n+1}) d(psi^{n+1})
                                 + 2 sum_r psi^{n+1}(r-cell) (eta^{n+1}(r-cell) - eta(u_b^{n+1}(r))) ]
    gagliardo -(c/2) sum_n dt [eta_A^{n+1}, psi^{n+1}]_h

    L is the largest |f'| on the hull of [a, b] and k.  For the scheme
    itself the total is nonnegative up to rounding and the Picard tolerance.
    """

    def __init__(self, traj: Trajectory, flux: FluxModel, deg: DegeneracyModel,
                 weights: KernelWeights | None = None):
        self.traj = traj
        self.flux = flux
        self.deg = deg
        cfg = traj.config
        self.grid = cfg.grid
        self.kw = weights if weights is not None else assemble_weights(self.grid, cfg.order, cfg.convention)
        self.deg_eps = regularized_degeneracy(deg, cfg.eps)
        self.dt = np.diff(traj.times)
        self._cache = {}

    def _level_data(self, k: float, sign: int):
        key = (k, sign)
        if key in self._cache:
            return self._cache[key]
        tr = self.traj
        cfg = tr.config
        u = tr.states
        eta = semi_part(u - k, sign)
        eta_b = semi_part(tr.boundary - k, sign)
        left = u[:-1, :-1]
        right = u[:-1, 1:]
        q_int = _numerical_entropy_flux(self.flux, left, right, k, sign, tr.bounds, cfg.flux_speed)
        eta_a = semi_part(self.deg_eps.A(u[1:]) - self.deg_eps.A(k), sign)
        # (L eta_A)_i for every step; dx * psi . L eta_A = (c/2) [eta_A, psi]_h
        lap_eta_a = np.array([apply_regional_laplacian(self.kw, row) for row in eta_a])
        lo, hi = min(tr.bounds.a, k), max(tr.bounds.b, k)
        speed = float(np.max(np.abs(self.flux.f_prime(sample_interval(lo, hi)))))
        out = (eta, eta_b, q_int, lap_eta_a, speed)
        self._cache[key] = out
        return out

    def terms(self, psi_values: np.ndarray, k: float, sign: int) -> EntropyTerms:
        """psi_values: (n_times, n_cells) samples of psi at saved times and centres."""
        eta, eta_b, q_int, lap_eta_a, speed = self._level_data(k, sign)
        dx = self.grid.spacing
        dt = self.dt[:, None]
        eps = self.traj.config.eps
        p_new = psi_values[1:]
        t_time = (dx * float(np.sum(eta[:-1] * (psi_values[1:] - psi_values[:-1])))
                  + dx * float(np.dot(eta[0], psi_values[0])) - dx * float(np.dot(eta[-1], psi_values[-1])))
        t_flux = float(np.sum(dt * q_int * np.diff(p_new, axis=1)))
        edge_psi = p_new[:, [0, -1]]
        t_bdry = speed * float(np.sum(dt * eta_b[:-1] * edge_psi))
        eta_new = eta[1:]
        visc_faces = np.sum(np.diff(eta_new, axis=1) * np.diff(p_new, axis=1), axis=1)
        visc_edges = np.sum(edge_psi * (eta_new[:, [0, -1]] - eta_b[1:]), axis=1)
        t_visc = -eps / dx * float(np.sum(self.dt * (visc_faces + 2.0 * visc_edges)))
        t_gag = -dx * float(np.sum(self.dt * np.sum(p_new * lap_eta_a, axis=1)))
        return EntropyTerms(t_time, t_flux, t_bdry, t_visc, t_gag)


@_timed
def entropy_residual(traj: Trajectory, tf: TestFunctionDict, flux: FluxModel, deg: DegeneracyModel,
                     weights: KernelWeights | None = None, rel_tol: float = TOL_ENTROPY_REL,
                     min_pairs: int = 20, expect_violation: bool = False) -> CheckRecord:
    """Evaluate every admissible (psi, k, sign) and report the worst relative residual.

    value is min over pairs of total / scale; each pair passes when
    total >= -rel_tol * scale.  With ``expect_violation`` the record passes
    when at least one pair is flagged (negative control).
    """
    ev = EntropyEvaluator(traj, flux, deg, weights)
    layer, _ = omega_delta_partition(traj.config.grid, tf.delta)
    x = traj.config.grid.centers
    evaluated, skipped = [], []
    for psi, k, sign in tf.pairs():
        ok, reason = admissible(psi, k, sign, traj, deg, layer)
        if not ok:
            skipped.append((psi.label, k, sign, reason))
            continue
        terms = ev.terms(psi(traj.times, x), k, sign)
        scale = terms.scale
        rel = terms.total / scale if scale > 0 else 0.0
        evaluated.append((psi.label, k, sign, terms.total, scale, rel))
    worst = min((e[5] for e in evaluated), default=float("nan"))
    flagged = [e for e in evaluated if e[3] < -rel_tol * e[4]]
    enough = len(evaluated) >= min_pairs
    if expect_violation:
        passed = bool(flagged)
        name = "entropy_negative_control"
    else:
        passed = enough and not flagged
        name = "entropy_inequality"
    return CheckRecord(name, "entropy inequality against semi-entropy pairs", worst, -rel_tol, passed,
                       details={"evaluated": len(evaluated), "skipped": len(skipped),
                                "flagged": len(flagged), "pairs": evaluated, "skip_reasons": skipped})


def expansion_shock_trajectory(template: Trajectory, left: float = -1.0, right: float = 1.0,
                               speed: float = 0.0, x_jump: float | None = None) -> Trajectory:
    """Fake trajectory: a jump from ``left`` to ``right`` moving at ``speed``.

    With left < right for Burgers this is an expansion shock, a weak solution
    that violates the entropy condition.  Cell values are exact cell
    averages of the moving step.
    """
    cfg = template.config
    grid = cfg.grid
    x0 = grid.domain.x_lo + 0.5 * grid.domain.length if x_jump is None else x_jump
    faces = grid.faces
    states = []
    for t in template.times:
        pos = x0 + speed * t
        frac = np.clip((faces[1:] - pos) / grid.spacing, 0.0, 1.0)  # share of the cell right of the jump
        states.append(left + (right - left) * frac)
    states = np.array(states)
    boundary = np.tile([left, right], (len(template.times), 1)).astype(float)
    bounds = DataBounds(min(left, right), max(left, right), template.bounds.L_f, template.bounds.L_A)
    return Trajectory(template.times.copy(), states, boundary, cfg, bounds, template.dt, [],
                      grid.centers.copy(), template.flux, template.deg)


# sweep checks -------------------------------------------------------------------

@_timed
def check_bv_uniformity(sweep: SweepResult, flux: FluxModel, deg: DegeneracyModel,
                        ratio: float = BV_RATIO) -> CheckRecord:
    """max/min across eps of the per-run maxima of time-BV and space-BV."""
    runs = [t for t in sweep.trajectories if isinstance(t, Trajectory)]
    anchor = "uniform BV bounds along vanishing viscosity"
    if flux.name == "zero" and deg.name == "zero":
        return CheckRecord("bv_uniformity", anchor, float("nan"), ratio, None,
                           details={"reason": "heat-only problem: time-BV scales with eps"})
    if len(runs) < 3:
        return CheckRecord("bv_uniformity", anchor, float("nan"), ratio, False,
                           details={"reason": "fewer than three completed runs"})
    tb = [float(time_bv(t).max()) for t in runs]
    sb = [float(space_bv(t).max()) for t in runs]
    r_time = max(tb) / min(tb)
    r_space = max(sb) / min(sb)
    value = max(r_time, r_space)
    return CheckRecord("bv_uniformity", anchor, value, ratio, bool(value <= ratio),
                       details={"time_bv": tb, "space_bv": sb, "time_ratio": r_time, "space_ratio": r_space})


@_timed
def check_cauchy(sweep: SweepResult) -> CheckRecord:
    diffs = [row[2] for row in sweep.cauchy]
    # largest ratio of consecutive differences; < 1 means strictly decreasing
    ratios = [b / a for a, b in zip(diffs, diffs[1:])]
    value = max(ratios) if ratios and all(map(math.isfinite, ratios)) else float("nan")
    return CheckRecord("vanishing_viscosity_cauchy", "Cauchy property of the vanishing-viscosity sequence",
                       value, 1.0, bool(sweep.monotone),
                       details={"table": [list(r) for r in sweep.cauchy], "failures": sweep.failures})


@_timed
def check_gagliardo_energy(sweep: SweepResult, deg: DegeneracyModel) -> CheckRecord:
    """Report sup_t [A(u), A(u)]_h per run; informational."""
    energies = []
    for traj in sweep.trajectories:
        if not isinstance(traj, Trajectory):
            continue
        kw = assemble_weights(traj.config.grid, traj.config.order, traj.config.convention)
        energies.append(max(gagliardo_form(kw, deg.A(u), deg.A(u)) for u in traj.states))
    ratio = max(energies) / min(energies) if energies and min(energies) > 0 else float("nan")
    return CheckRecord("gagliardo_energy", "fractional energy of A(u) along vanishing viscosity",
                       ratio, float("nan"), None, hard=False, details={"energies": energies})


# auxiliary inequalities ------------------------------------------------------------

@dataclass
class DecompositionTerms:
    lhs: float
    layer_layer: float
    cross_flux: float      # int_{int} int_{layer} Phi(y)(Psi(x) - Psi(y))(xi(x) - xi(y)) K
    cross_mass: float      # int_{int} int_{layer} Psi(y) Phi(y)(xi(x) - xi(y)) K
    energy: float          # [Phi, xi]
    energy_layer: float
    energy_cross: float

    @property
    def both_cross_slack(self) -> float:
        return self.lhs - (self.layer_layer - self.cross_flux - 2.0 * self.cross_mass)

    @property
    def single_cross_slack(self) -> float:
        return self.lhs - (self.layer_layer - self.cross_flux - self.cross_mass)

    @property
    def identity_residual(self) -> float:
        return abs(self.energy - (self.energy_layer + 2.0 * self.energy_cross))


def decomposition_terms(kw: KernelWeights, delta: float, psi, phi, xi) -> DecompositionTerms:
    """Discrete double sums S(g) = dx sum_ij w_ij g(x_i, x_j) over the layer and interior blocks.

    In the cross terms x runs over the interior and y over the layer.
    """
    psi = np.asarray(psi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    xi = np.asarray(xi, dtype=float)
    layer, inner = omega_delta_partition(kw.grid, delta)
    w = kw.weights
    dx = kw.grid.spacing
    dxi = xi[:, None] - xi[None, :]
    dphi = phi[:, None] - phi[None, :]
    dpsi = psi[:, None] - psi[None, :]
    lhs = dx * float(np.sum(w * psi[:, None] * dxi * dphi))
    ll = np.ix_(layer, layer)
    il = np.ix_(inner, layer)
    layer_layer = dx * float(np.sum(w[ll] * psi[layer][:, None] * dxi[ll] * dphi[ll]))
    cross_flux = dx * float(np.sum(w[il] * phi[layer][None, :] * dpsi[il] * dxi[il]))
    cross_mass = dx * float(np.sum(w[il] * (psi[layer] * phi[layer])[None, :] * dxi[il]))
    energy = dx * float(np.sum(w * dphi * dxi))
    energy_layer = dx * float(np.sum(w[ll] * dphi[ll] * dxi[ll]))
    energy_cross = dx * float(np.sum(w[il] * dphi[il] * dxi[il]))
    return DecompositionTerms(lhs, layer_layer, cross_flux, cross_mass, energy, energy_layer, energy_cross)


@_timed
def check_layer_decomposition(kw: KernelWeights, layer: BoundaryLayer, psi_fields, phi_fields,
                                 cutoff: CutoffXi, tol: float = TOL_EXACT) -> CheckRecord:
    """Boundary-layer splitting of the cutoff energy over many (Psi, Phi) pairs.

    Asserts the splitting identity for [Phi, xi] and the lower bound with
    both cross terms accounted for; the bound with a single copy of the
    Psi Phi term is reported alongside (it does not hold in general).
    """
    if layer.domain != kw.grid.domain:
        raise PreconditionError("layer and weights live on different domains")
    xi = cutoff_xi(kw.grid.centers, cutoff)
    worst_identity, worst_both, worst_single = 0.0, np.inf, np.inf
    for psi, phi in zip(psi_fields, phi_fields):
        if np.any(np.asarray(psi) < 0) or np.any(np.asarray(phi) < 0):
            raise PreconditionError("Psi and Phi must be nonnegative")
        terms = decomposition_terms(kw, layer.delta, psi, phi, xi)
        worst_identity = max(worst_identity, terms.identity_residual)
        worst_both = min(worst_both, terms.both_cross_slack)
        worst_single = min(worst_single, terms.single_cross_slack)
    passed = worst_identity <= tol and worst_both >= -tol
    return CheckRecord("boundary_layer_decomposition", "boundary-layer splitting of the cutoff energy",
                       max(worst_identity, -worst_both), tol, bool(passed),
                       details={"identity_residual": worst_identity, "both_cross_slack": worst_both,
                                "single_cross_term_slack": worst_single})


@dataclass(frozen=True)
class Profile:
    """Nonnegative smooth function with its derivative."""
    f: Callable
    df: Callable
    name: str


def default_profiles(domain: Domain) -> list:
    lo, length = domain.x_lo, domain.length
    return [
        Profile(lambda x: np.ones_like(np.asarray(x, dtype=float)),
                lambda x: np.zeros_like(np.asarray(x, dtype=float)), "one"),
        Profile(lambda x: 1.0 + 0.5 * np.sin(3.0 * (x - lo) / length),
                lambda x: 1.5 / length * np.cos(3.0 * (x - lo) / length), "sine"),
        Profile(lambda x: np.exp(-((x - lo - 0.3 * length) / (0.2 * length)) ** 2),
                lambda x: -2.0 * (x - lo - 0.3 * length) / (0.2 * length) ** 2
                * np.exp(-((x - lo - 0.3 * length) / (0.2 * length)) ** 2), "gauss"),
        Profile(lambda x: ((x - lo) / length) ** 2,
                lambda x: 2.0 * (x - lo) / length ** 2, "square"),
        Profile(lambda x: np.exp(-(x - lo) / (0.1 * length)),
                lambda x: -np.exp(-(x - lo) / (0.1 * length)) / (0.1 * length), "edge"),
    ]


def cutoff_inequality_defect(cutoff: CutoffXi, beta: Profile, n_cells: int) -> tuple[float, float]:
    """Midpoint evaluation of L_f int |xi'| beta - eps int xi' beta' - (L_f + L eps) sum_r beta(r).

    Returns (defect, tolerance); the inequality holds when defect <= 0, and
    the midpoint error is bounded by tolerance = (rate dx)^2 times the sum of
    the absolute terms, which vanishes under refinement.
    """
    dom = cutoff.layer.domain
    grid = Grid(dom, n_cells)
    x = grid.centers
    dx = grid.spacing
    slope = cutoff_xi_slope(x, cutoff)
    b = beta.f(x)
    db = beta.df(x)
    lhs = cutoff.L_f * dx * float(np.sum(np.abs(slope) * b))
    visc = cutoff.epsilon * dx * float(np.sum(slope * db))
    edge = (cutoff.L_f + cutoff.L * cutoff.epsilon) * float(beta.f(dom.x_lo) + beta.f(dom.x_hi))
    scale = abs(lhs) + abs(visc) + abs(edge)
    return lhs - visc - edge, (cutoff.rate * dx) ** 2 * scale


@_timed
def check_cutoff_inequality(cutoff: CutoffXi, profiles: Sequence[Profile],
                            sizes: Sequence[int] = (128, 256, 512, 1024)) -> CheckRecord:
    worst = -np.inf
    rows = []
    ok = True
    for beta in profiles:
        for n in sizes:
            defect, tol = cutoff_inequality_defect(cutoff, beta, n)
            rows.append((beta.name, n, defect, tol))
            ok &= defect <= tol
            worst = max(worst, defect / tol if tol > 0 else defect)
    return CheckRecord("cutoff_inequality", "weak differential inequality of the boundary cutoff",
                       worst, 1.0, bool(ok), details={"rows": rows})


@_timed
def check_cutoff_limits(domain: Domain, L_f: float, delta: float,
                        eps_list: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4)) -> CheckRecord:
    """int |xi - 1| and eps int |xi'| strictly decrease along eps."""
    layer = BoundaryLayer(domain, delta)
    gaps, slopes = [], []
    for eps in eps_list:
        g, sl = cutoff_integrals(CutoffXi(eps, L_f, layer))
        gaps.append(g)
        slopes.append(sl)
    ratios = [b / a for seq in (gaps, slopes) for a, b in zip(seq, seq[1:])]
    value = max(ratios)
    return CheckRecord("cutoff_limits", "cutoff converges to one as eps vanishes", value, 1.0,
                       bool(value < 1.0), details={"gap": gaps, "slope": slopes})


@_timed
def check_vector_field_positivity(kw: KernelWeights, deg: DegeneracyModel, u_fields, w_fields,
                                  tol: float = 1e-13) -> CheckRecord:
    """sum_ij w_ij (sgn w_i - sgn w_j)(A'(u_i) w_i - A'(u_j) w_j) >= 0 for nowhere-zero w."""
    worst = np.inf
    for u, w in zip(u_fields, w_fields):
        w = np.asarray(w, dtype=float)
        if np.any(w == 0):
            raise PreconditionError("w must not vanish")
        sg = np.sign(w)
        g = deg.A_prime(np.asarray(u, dtype=float)) * w
        val = float(np.sum(kw.weights * (sg[:, None] - sg[None, :]) * (g[:, None] - g[None, :])))
        worst = min(worst, val)
    return CheckRecord("vector_field_positivity", "positivity of the normalised-gradient energy",
                       worst, -tol, bool(worst >= -tol))


def linear_operator_at(x, domain: Domain, s: float):
    """PV int_domain (x - y) |x - y|^(-1-2s) dy: the operator of the identity map, no constant."""
    d1 = np.asarray(x, dtype=float) - domain.x_lo
    d2 = domain.x_hi - np.asarray(x, dtype=float)
    if s == 0.5:
        return np.log(d1 / d2)
    return (d1 ** (1.0 - 2.0 * s) - d2 ** (1.0 - 2.0 * s)) / (1.0 - 2.0 * s)


def boundary_flux_integral(psi: Callable, dpsi: Callable, domain: Domain, order: FractionalOrder,
                           rho: float, convention: str = "two_pi") -> float:
    """int Psi (-Delta)^s_Omega beta_rho dx, computed as -int (1 - beta_rho)(-Delta)^s_Omega Psi dx.

    The two agree by symmetry of the form because the operator kills
    constants; the right side only needs Psi's operator on the thin set
    where beta_rho < 1.  Near each endpoint r, Psi is split into its tangent
    line at r (operator in closed form, singular like d^(1-2s)) and a
    remainder vanishing to second order (operator bounded, by quadrature).
    """
    s = order.s
    layer = BoundaryLayer(domain, 0.49 * domain.length)
    c = normalization_constant(1, s, convention)
    taylor_cut = 1e-3 * rho
    lo, hi = domain.x_lo, domain.x_hi
    total = 0.0
    for r, a, b in ((lo, lo, lo + rho), (hi, hi - rho, hi)):
        slope = float(dpsi(r))
        base = float(psi(r))

        def rem(y, slope=slope, base=base, r=r):
            return psi(y) - base - slope * (y - r)

        # bounded integrand: fixed Gauss-Legendre, each node is itself a quadrature
        nodes = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES
        vals = [(1.0 - boundary_bump(x, rho, layer)) * regional_laplacian_at(rem, x, domain, s, taylor_cut)
                for x in nodes]
        total += 0.5 * (b - a) * float(np.dot(_GL_WEIGHTS, vals))
        if slope != 0.0:
            # tangent-line part: (1 - beta) * slope * linear_operator_at, singular at r
            def lin(x):
                return (1.0 - boundary_bump(x, rho, layer)) * linear_operator_at(x, domain, s)
            if s == 0.5:
                total += slope * _quad(lin, a, b, **_OUTER)[0]
            else:
                # separate the d^(1-2s) factor of the endpoint that is near
                near_lo = r == lo
                wvar = (1.0 - 2.0 * s, 0.0) if near_lo else (0.0, 1.0 - 2.0 * s)
                sing = 1.0 if near_lo else -1.0

                def near_term(x):
                    return sing * (1.0 - boundary_bump(x, rho, layer)) / (1.0 - 2.0 * s)

                def far_term(x):
                    d_far = (hi - x) if near_lo else (x - lo)
                    return -sing * (1.0 - boundary_bump(x, rho, layer)) * d_far ** (1.0 - 2.0 * s) / (1.0 - 2.0 * s)

                total += slope * (_quad(near_term, a, b, weight="alg", wvar=wvar, **_OUTER)[0]
                                  + _quad(far_term, a, b, **_OUTER)[0])
    return -c * total


@_timed
def check_boundary_flux_limit(psi: Callable, dpsi: Callable, domain: Domain, order: FractionalOrder,
                              delta: float, levels: int = 8, first_level: int = 4,
                              convention: str = "two_pi") -> CheckRecord:
    """Successive differences of int Psi L beta_rho along rho = delta 2^-k decrease.

    The sequence starts at k = ``first_level``: for s near 1 the first few
    differences still grow while the O(rho) and O(rho^(2-2s)) parts trade
    places.
    """
    rhos = [delta * 2.0 ** -k for k in range(first_level, first_level + levels)]
    vals = [boundary_flux_integral(psi, dpsi, domain, order, r, convention) for r in rhos]
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > 0]
    value = max(ratios) if ratios else 0.0
    # the endpoint target int sum_r (Psi(x) - Psi(r)) |x - r|^(-1-2s) is finite only
    # when Psi is flat at both endpoints or s < 1/2
    finite_target = order.s < 0.5 or (float(dpsi(domain.x_lo)) == 0.0 and float(dpsi(domain.x_hi)) == 0.0)
    return CheckRecord("boundary_flux_limit", "limit of the boundary bump energy", value, 1.0,
                       bool(value < 1.0), details={"rho": rhos, "values": vals, "diffs": diffs,
                                                   "endpoint_target_finite": finite_target})


def commutator_study(u: Callable, du: Callable, order: FractionalOrder, sizes=(64, 128, 256, 512),
                     domain: Domain | None = None, probes=(0.25, 0.5, 0.75),
                     convention: str = "two_pi"):
    """Discrete derivative commutator against the continuum boundary term.

    At fixed interior probe points (faces on every dyadic grid) compares
    boundary_part with c sum_r (u(r) - u(x)) nu(r) / |r - x|^(1+2s), and
    returns (n, identity residual, error, roundoff budget) per grid size.
    The budget 64 eps_mach N max|boundary term| bounds the rounding in
    sums of N terms of that size.
    """
    domain = domain or Domain()
    c = normalization_constant(1, order.s, convention)
    p = 1.0 + 2.0 * order.s
    rows = []
    for n in sizes:
        grid = Grid(domain, n)
        kw = assemble_weights(grid, order, convention)
        vals = u(grid.centers)
        comm, bpart = derivative_commutator(kw, vals)
        identity = float(np.max(np.abs(comm - bpart)))
        faces = grid.faces[1:-1]
        err = 0.0
        for frac in probes:
            x = domain.x_lo + frac * domain.length
            j = int(np.argmin(np.abs(faces - x)))
            xf = faces[j]
            cont = c * ((u(domain.x_hi) - u(xf)) / (domain.x_hi - xf) ** p
                        - (u(domain.x_lo) - u(xf)) / (xf - domain.x_lo) ** p)
            err = max(err, abs(bpart[j] - cont))
        budget = 64.0 * np.finfo(float).eps * n * max(1.0, float(np.max(np.abs(bpart))))
        rows.append((n, identity, err, budget))
    return rows


@_timed
def check_commutator(u: Callable, du: Callable, order: FractionalOrder, sizes=(64, 128, 256, 512),
                     domain: Domain | None = None, convention: str = "two_pi") -> CheckRecord:
    rows = commutator_study(u, du, order, sizes, domain=domain, convention=convention)
    errs = [r[2] for r in rows]
    identity = max(r[1] for r in rows)
    within_budget = all(r[1] <= r[3] for r in rows)
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    rate = float(-np.polyfit(np.log2([r[0] for r in rows]), np.log2(errs), 1)[0]) if min(errs) > 0 else float("inf")
    return CheckRecord("derivative_commutator", "derivative commutator boundary term", errs[-1],
                       float("nan"), bool(decreasing and within_budget),
                       details={"rows": rows, "rate": rate, "identity_residual": identity})
