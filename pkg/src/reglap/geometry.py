"""Interval geometry: cell-centred grid, distance to the boundary, the
boundary-layer level set, the exponential cutoff and the boundary bump."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Domain:
    x_lo: float = 0.0
    x_hi: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.x_lo) and np.isfinite(self.x_hi)) or not self.x_lo < self.x_hi:
            raise DomainError(f"need x_lo < x_hi, got ({self.x_lo}, {self.x_hi})")

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def boundary(self) -> tuple[float, float]:
        return (self.x_lo, self.x_hi)


class Grid:
    """Uniform cell-centred partition of a domain.

    Boundary values live on the faces ``x_lo`` and ``x_hi``; no cell centre
    ever sits on the boundary.
    """

    def __init__(self, domain: Domain, n_cells: int):
        if int(n_cells) != n_cells or n_cells < 1:
            raise DomainError(f"n_cells must be a positive integer, got {n_cells}")
        self.domain = domain
        self.n_cells = int(n_cells)
        self.spacing = domain.length / self.n_cells
        self.centers = domain.x_lo + (np.arange(self.n_cells) + 0.5) * self.spacing
        self.centers.setflags(write=False)

    @property
    def faces(self) -> np.ndarray:
        return self.domain.x_lo + np.arange(self.n_cells + 1) * self.spacing

    def __repr__(self):
        d = self.domain
        return f"Grid(({d.x_lo}, {d.x_hi}), n_cells={self.n_cells})"


def distance_to_boundary(x, domain: Domain):
    """d(x) = min(x - x_lo, x_hi - x) for points of the closed interval."""
    x = np.asarray(x, dtype=float)
    if np.any(x < domain.x_lo) or np.any(x > domain.x_hi):
        raise DomainError("point outside the closed domain")
    d = np.minimum(x - domain.x_lo, domain.x_hi - x)
    return d if d.ndim else float(d)


def default_delta(grid: Grid) -> float:
    """Ten cells, but never more than a quarter of the interval."""
    return min(10.0 * grid.spacing, 0.25 * grid.domain.length)


@dataclass(frozen=True)
class BoundaryLayer:
    domain: Domain
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5 * self.domain.length:
            raise DomainError(
                f"delta must lie in (0, {0.5 * self.domain.length}), got {self.delta}")


def level_set_h(x, layer: BoundaryLayer):
    """Signed distance clamped at delta: positive inside, negative outside."""
    x = np.asarray(x, dtype=float)
    lo, hi = layer.domain.x_lo, layer.domain.x_hi
    signed = np.minimum(x - lo, hi - x)
    h = np.sign(signed) * np.minimum(np.abs(signed), layer.delta)
    return h if h.ndim else float(h)


@dataclass(frozen=True)
class CutoffXi:
    epsilon: float
    L_f: float
    layer: BoundaryLayer
    L: float = 0.0  # sup |h''| on the layer; zero for an interval

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.L_f < 0 or self.L < 0:
            raise DomainError("L_f and L must be nonnegative")

    @property
    def rate(self) -> float:
        return (self.L_f + self.epsilon * self.L) / self.epsilon


def cutoff_xi(x, cfg: CutoffXi):
    """xi(x) = 1 - exp(-rate * h(x)), clipped to [0, 1] so exterior points read 0."""
    h = np.asarray(level_set_h(x, cfg.layer))
    xi = -np.expm1(-cfg.rate * np.maximum(h, 0.0))
    xi = np.clip(xi, 0.0, 1.0)
    return xi if xi.ndim else float(xi)


def cutoff_xi_slope(x, cfg: CutoffXi):
    """Exact derivative of xi inside the domain (zero past the layer)."""
    x = np.asarray(x, dtype=float)
    lo, hi = cfg.layer.domain.x_lo, cfg.layer.domain.x_hi
    left = x - lo
    right = hi - x
    dist = np.minimum(left, right)
    inside_layer = (dist >= 0) & (dist < cfg.layer.delta)
    direction = np.where(left <= right, 1.0, -1.0)
    slope = np.where(inside_layer, direction * cfg.rate * np.exp(-cfg.rate * dist), 0.0)
    return slope if slope.ndim else float(slope)


def smoothstep(theta):
    theta = np.clip(np.asarray(theta, dtype=float), 0.0, 1.0)
    return theta * theta * (3.0 - 2.0 * theta)


def boundary_bump(x, rho: float, layer: BoundaryLayer):
    """beta_rho = smoothstep(h / rho); identically 1 once h >= rho."""
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    out = smoothstep(np.asarray(level_set_h(x, layer)) / rho)
    return out if out.ndim else float(out)


def omega_delta_partition(grid: Grid, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Split cell indices into the boundary layer (centre within delta of the
    boundary) and its complement."""
    BoundaryLayer(grid.domain, delta)
    d = distance_to_boundary(grid.centers, grid.domain)
    in_layer = d < delta
    idx = np.arange(grid.n_cells)
    return idx[in_layer], idx[~in_layer]


def cutoff_integrals(cfg: CutoffXi) -> tuple[float, float]:
    """Return (int |xi - 1| dx, eps * int |xi'| dx) by Gauss-Legendre on
    panels graded toward the boundary at the scale 1/rate."""
    nodes, weights = np.polynomial.legendre.leggauss(16)
    delta = cfg.layer.delta
    scale = 1.0 / cfg.rate
    # panel edges on [0, delta]: geometric in units of the decay length
    edges = [0.0]
    w = min(scale / 8.0, delta)
    while edges[-1] < delta:
        edges.append(min(edges[-1] + w, delta))
        w *= 1.5
    edges = np.asarray(edges)
    a, b = edges[:-1, None], edges[1:, None]
    h = 0.5 * (a + b) + 0.5 * (b - a) * nodes
    jac = 0.5 * (b - a) * weights
    gap = float(np.sum(jac * np.exp(-cfg.rate * h)))
    slope = float(np.sum(jac * cfg.rate * np.exp(-cfg.rate * h)))
    # two boundary layers; xi = 1 exactly on the rest of the domain
    # except for the constant offset exp(-rate*delta) beyond the layer
    interior = cfg.layer.domain.length - 2.0 * delta
    gap_total = 2.0 * gap + interior * np.exp(-cfg.rate * delta)
    return gap_total, cfg.epsilon * 2.0 * slope
