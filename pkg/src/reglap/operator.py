"""Discrete regional fractional Laplacian on a uniform cell-centred grid.

The kernel |x - y|^(-1-2s) is integrated exactly over each neighbouring cell,
the self-cell is dropped, and the operator only ever couples cells inside
the domain.  Everything downstream (duality, product rule, maximum principle)
rests on three structural facts of the assembled matrix: it is symmetric,
its off-diagonal entries are nonnegative, and it is applied in difference
form so that constants are annihilated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .geometry import Domain, Grid


class OrderError(ValueError):
    pass


@dataclass(frozen=True)
class FractionalOrder:
    s: float

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise OrderError(f"s must lie in (0, 1), got {self.s}")

    @property
    def sigma(self) -> float:
        return 2.0 * self.s - 1.0

    @property
    def has_trace(self) -> bool:
        return self.s > 0.5

    def require_trace(self):
        if not self.has_trace:
            raise OrderError(f"boundary traces need 1/2 < s < 1, got s = {self.s}")


def normalization_constant(n: int, s: float, convention: str = "two_pi") -> float:
    """Normalising constant of the singular-integral fractional Laplacian.

    ``two_pi``:   Gamma(n/2 + s) / (pi^(2s + n/2) |Gamma(-s)|), symbol |xi|^(2s)
                  under the transform with exp(-2 pi i x xi)
    ``standard``: 4^s Gamma(n/2 + s) / (pi^(n/2) |Gamma(-s)|), symbol |xi|^(2s)
                  under the transform with exp(-i x xi)
    """
    if int(n) != n or n < 1:
        raise OrderError(f"dimension must be a positive integer, got {n}")
    if not 0.0 < s < 1.0:
        raise OrderError(f"s must lie in (0, 1), got {s}")
    g_minus_s = abs(special.gamma(-s))
    if convention == "two_pi":
        return special.gamma(0.5 * n + s) / (math.pi ** (2.0 * s + 0.5 * n) * g_minus_s)
    if convention == "standard":
        return 4.0 ** s * special.gamma(0.5 * n + s) / (math.pi ** (0.5 * n) * g_minus_s)
    raise OrderError(f"unknown normalization {convention!r}")


class KernelWeights:
    """Dense symmetric matrix w_ij = int_{cell j} |x_i - y|^(-1-2s) dy, w_ii = 0.

    Attributes
    ----------
    grid, order : the discretisation this matrix belongs to
    weights : (n, n) read-only array
    c_ns : normalising constant multiplying every application
    """

    def __init__(self, grid: Grid, order: FractionalOrder, weights: np.ndarray, c_ns: float):
        self.grid = grid
        self.order = order
        self.weights = weights
        self.weights.setflags(write=False)
        self.c_ns = float(c_ns)
        self._row_sums = None

    @property
    def n(self) -> int:
        return self.grid.n_cells

    @property
    def row_sums(self) -> np.ndarray:
        if self._row_sums is None:
            self._row_sums = self.weights.sum(axis=1)
        return self._row_sums


def cell_kernel_integrals(n_cells: int, spacing: float, s: float) -> np.ndarray:
    """Kernel integral over a cell whose centre is k cells away, k = 0..n-1.

    With near and far face distances a = (k - 1/2) dx and b = (k + 1/2) dx,
    the integral of t^(-1-2s) over [a, b] is (a^(-2s) - b^(-2s)) / (2s).
    Entry 0 is the excluded self-cell.
    """
    k = np.arange(1, n_cells, dtype=float)
    near = (k - 0.5) * spacing
    far = (k + 0.5) * spacing
    two_s = 2.0 * s
    # a^(-2s) - b^(-2s) = a^(-2s) * (1 - (a/b)^(2s)); expm1 keeps digits for large k
    ratio_term = -np.expm1(two_s * np.log(near / far))
    vals = near ** (-two_s) * ratio_term / two_s
    return np.concatenate(([0.0], vals))


def assemble_weights(grid: Grid, order: FractionalOrder, convention: str = "two_pi") -> KernelWeights:
    if grid.n_cells < 4:
        raise ValueError(f"need at least 4 cells, got {grid.n_cells}")
    band = cell_kernel_integrals(grid.n_cells, grid.spacing, order.s)
    idx = np.arange(grid.n_cells)
    # Toeplitz by |i - j|: symmetric bit-for-bit by construction
    w = band[np.abs(idx[:, None] - idx[None, :])]
    return KernelWeights(grid, order, w, normalization_constant(1, order.s, convention))


def _check_field(kw: KernelWeights, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (kw.n,):
        raise ValueError(f"field has shape {u.shape}, expected ({kw.n},)")
    return u


def apply_regional_laplacian(kw: KernelWeights, u) -> np.ndarray:
    """(L u)_i = c * sum_j w_ij (u_i - u_j), evaluated in difference form."""
    u = _check_field(kw, u)
    diff = u[:, None] - u[None, :]
    return kw.c_ns * np.einsum("ij,ij->i", kw.weights, diff)


def gagliardo_form(kw: KernelWeights, u, v) -> float:
    """[u, v] = dx * sum_ij w_ij (u_i - u_j)(v_i - v_j).

    The dx makes this the midpoint approximation of the double integral, so
    that dx * <L u, v> = (c/2) [u, v].
    """
    u = _check_field(kw, u)
    v = _check_field(kw, v)
    du = u[:, None] - u[None, :]
    dv = v[:, None] - v[None, :]
    return kw.grid.spacing * float(np.einsum("ij,ij,ij->", kw.weights, du, dv))


def duality_pairing(kw: KernelWeights, u, v) -> float:
    """dx * sum_i v_i (L u)_i."""
    v = _check_field(kw, v)
    return kw.grid.spacing * float(np.dot(v, apply_regional_laplacian(kw, u)))


def product_rule_residual(kw: KernelWeights, u, v, i: int) -> float:
    """|L(uv)_i - v_i L(u)_i - u_i L(v)_i + c sum_j w_ij (u_i-u_j)(v_i-v_j)|."""
    u = _check_field(kw, u)
    v = _check_field(kw, v)
    w = kw.weights[i]
    c = kw.c_ns
    # the four sums are O(c * row sum) each; compensated summation keeps the
    # residual at the rounding level of the individual products
    l_uv = c * math.fsum(w * (u[i] * v[i] - u * v))
    l_u = c * math.fsum(w * (u[i] - u))
    l_v = c * math.fsum(w * (v[i] - v))
    cross = c * math.fsum(w * (u[i] - u) * (v[i] - v))
    return abs(math.fsum((l_uv, -v[i] * l_u, -u[i] * l_v, cross)))


def truncated_laplacian(grid: Grid, order: FractionalOrder, u, x: float, trunc: float,
                        convention: str = "two_pi") -> float:
    """c * int over the domain minus (x - trunc, x + trunc) of (u(x) - u(y)) |x - y|^(-1-2s) dy."""
    if not trunc > 0:
        raise ValueError("trunc must be positive")
    lo, hi = grid.domain.x_lo, grid.domain.x_hi
    p = 1.0 + 2.0 * order.s
    ux = u(x)
    total = 0.0
    opts = dict(limit=200, epsabs=1e-14, epsrel=1e-12)
    if x - trunc > lo:
        total += integrate.quad(lambda y: (ux - u(y)) * (x - y) ** -p, lo, x - trunc, **opts)[0]
    if x + trunc < hi:
        total += integrate.quad(lambda y: (ux - u(y)) * (y - x) ** -p, x + trunc, hi, **opts)[0]
    return normalization_constant(1, order.s, convention) * total


def derivative_commutator(kw: KernelWeights, u) -> tuple[np.ndarray, np.ndarray]:
    """Forward difference of L u against L' of the forward difference.

    L' is the same operator on the grid of interior faces (one cell fewer,
    shifted by half a cell).  Returns ``(commutator, boundary_part)`` where
    commutator = D(L u) - L'(D u) and boundary_part is the exact discrete
    boundary term built from the two ghost cells just outside the domain.
    Both live at the interior faces.
    """
    u = _check_field(kw, u)
    g = kw.grid
    dx = g.spacing
    n = g.n_cells
    du = np.diff(u) / dx
    face_grid = Grid(Domain(g.domain.x_lo + 0.5 * dx, g.domain.x_hi - 0.5 * dx), n - 1)
    face_kw = KernelWeights(face_grid, kw.order,
                            kw.weights[: n - 1, : n - 1].copy(), kw.c_ns)
    commutator = np.diff(apply_regional_laplacian(kw, u)) / dx - apply_regional_laplacian(face_kw, du)
    # kernel integral over the ghost cell left of cell 0, seen from cell i: |i - (-1)| = i + 1
    band = cell_kernel_integrals(n + 1, dx, kw.order.s)
    i = np.arange(n - 1)
    w_left_ghost = band[i + 1]
    w_right_edge = band[n - 1 - i]
    boundary_part = kw.c_ns / dx * (w_left_ghost * (u[i + 1] - u[0]) - w_right_edge * (u[i] - u[n - 1]))
    return commutator, boundary_part


def dump_weights_csv(kw: KernelWeights, path) -> None:
    """Row-major dump with a ``# n s c_ns`` header, 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# n s c_ns\n")
        fh.write(f"# {kw.n} {kw.order.s:.17g} {kw.c_ns:.17g}\n")
        for row in kw.weights:
            fh.write(",".join(f"{x:.17g}" for x in row))
            fh.write("\n")
