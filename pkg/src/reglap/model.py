"""Flux and degeneracy models, data bounds, semi-entropies and secant slopes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .operator import KernelWeights

N_SAMPLES = 1000


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FluxModel:
    f: Callable
    f_prime: Callable
    name: str


@dataclass(frozen=True)
class DegeneracyModel:
    A: Callable
    A_prime: Callable
    name: str


def burgers() -> FluxModel:
    return FluxModel(lambda u: 0.5 * np.square(u), lambda u: np.asarray(u, dtype=float) * 1.0, "burgers")


def linear_advection(speed: float = 1.0) -> FluxModel:
    c = float(speed)
    return FluxModel(lambda u: c * np.asarray(u, dtype=float),
                     lambda u: np.full(np.shape(u), c) if np.ndim(u) else c,
                     f"advection(c={c:g})")


def zero_flux() -> FluxModel:
    return FluxModel(lambda u: np.zeros(np.shape(u)) if np.ndim(u) else 0.0,
                     lambda u: np.zeros(np.shape(u)) if np.ndim(u) else 0.0, "zero")


def degenerate_threshold(u_c: float = 0.5) -> DegeneracyModel:
    """A(u) = max(u - u_c, 0)^2; flat (purely hyperbolic) below u_c.

    Requires u_c >= 0 so that A(0) = 0.
    """
    if u_c < 0:
        raise ModelError("threshold must be nonnegative so that A(0) = 0")
    return DegeneracyModel(lambda u: np.square(np.maximum(np.asarray(u, dtype=float) - u_c, 0.0)),
                           lambda u: 2.0 * np.maximum(np.asarray(u, dtype=float) - u_c, 0.0),
                           f"threshold(u_c={u_c:g})")


def porous_medium(m: float = 2.0) -> DegeneracyModel:
    """A(u) = u |u|^(m-1), odd and degenerate at 0 for m > 1."""
    if m < 1:
        raise ModelError("porous-medium exponent must be >= 1")
    return DegeneracyModel(lambda u: np.asarray(u, dtype=float) * np.abs(u) ** (m - 1.0),
                           lambda u: m * np.abs(np.asarray(u, dtype=float)) ** (m - 1.0),
                           f"porous(m={m:g})")


def two_plateau(lo: float = 0.25, hi: float = 0.75) -> DegeneracyModel:
    """Zero below ``lo``, equal to (hi - lo)/2 above ``hi``, smoothstep ramp between.

    Degenerate on two intervals; requires lo >= 0 so that A(0) = 0.
    """
    if not 0 <= lo < hi:
        raise ModelError("need 0 <= lo < hi")
    width = hi - lo

    def ramp(u):
        return np.clip((np.asarray(u, dtype=float) - lo) / width, 0.0, 1.0)

    def A(u):
        t = ramp(u)
        return 0.5 * width * t * t * (3.0 - 2.0 * t)

    def A_prime(u):
        t = ramp(u)
        return 3.0 * t * (1.0 - t)

    return DegeneracyModel(A, A_prime, f"two_plateau({lo:g},{hi:g})")


def zero_degeneracy() -> DegeneracyModel:
    return DegeneracyModel(lambda u: np.zeros(np.shape(u)) if np.ndim(u) else 0.0,
                           lambda u: np.zeros(np.shape(u)) if np.ndim(u) else 0.0, "zero")


def linear_degeneracy(slope: float) -> DegeneracyModel:
    c = float(slope)
    if c < 0:
        raise ModelError("slope must be nonnegative")
    return DegeneracyModel(lambda u: c * np.asarray(u, dtype=float),
                           lambda u: np.full(np.shape(u), c) if np.ndim(u) else c,
                           f"linear({c:g})")


def regularized_degeneracy(deg: DegeneracyModel, eps: float) -> DegeneracyModel:
    """A_eps(u) = A(u) + eps u; strictly increasing with slope >= eps."""
    if not eps > 0:
        raise ModelError(f"eps must be positive, got {eps}")
    return DegeneracyModel(lambda u: deg.A(u) + eps * np.asarray(u, dtype=float),
                           lambda u: deg.A_prime(u) + eps,
                           f"{deg.name}+{eps:g}u")


@dataclass(frozen=True)
class DataBounds:
    a: float
    b: float
    L_f: float
    L_A: float


def sample_interval(a: float, b: float, n: int = N_SAMPLES) -> np.ndarray:
    return np.linspace(a, b, n) if b > a else np.array([a])


def data_bounds(u0, ub, flux: FluxModel, deg: DegeneracyModel) -> DataBounds:
    """Range [a, b] of all data samples and the sampled Lipschitz constants."""
    samples = np.concatenate([np.ravel(np.asarray(u0, dtype=float)), np.ravel(np.asarray(ub, dtype=float))])
    if samples.size == 0:
        raise ModelError("empty data")
    if not np.all(np.isfinite(samples)):
        raise ModelError("non-finite data")
    a, b = float(samples.min()), float(samples.max())
    grid = sample_interval(a, b)
    L_f = float(np.max(np.abs(flux.f_prime(grid))))
    L_A = float(np.max(np.abs(deg.A_prime(grid))))
    return DataBounds(a, b, L_f, L_A)


def check_hypotheses(flux: FluxModel, deg: DegeneracyModel, a: float, b: float,
                     n: int = N_SAMPLES) -> list[str]:
    """Sampled checks of the standing assumptions; returns a list of failures."""
    problems = []
    u = sample_interval(a, b, n)
    fp = np.asarray(flux.f_prime(u), dtype=float)
    if not np.all(np.isfinite(fp)):
        problems.append("f' not finite on [a, b]")
    if u.size > 2:
        # derivative of f' should be bounded (local Lipschitz)
        slopes = np.abs(np.diff(fp) / np.diff(u))
        if not np.all(np.isfinite(slopes)):
            problems.append("f' not Lipschitz on the sample")
    Ap = np.asarray(deg.A_prime(u), dtype=float)
    if np.any(Ap < 0):
        problems.append("A' negative somewhere on [a, b]")
    Au = np.asarray(deg.A(u), dtype=float)
    if np.any(np.diff(Au) < 0):
        problems.append("A decreasing somewhere on [a, b]")
    if float(deg.A(0.0)) != 0.0:
        problems.append("A(0) != 0")
    return problems


@dataclass(frozen=True)
class SemiEntropy:
    k: float
    sign: int  # +1 or -1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ModelError("sign must be +1 or -1")


def sgn_plus(v):
    """1 for v > 0, else 0 (so the tie v = 0 maps to 0)."""
    return (np.asarray(v) > 0).astype(float)


def sgn_minus(v):
    """-1 for v < 0, else 0."""
    return -(np.asarray(v) < 0).astype(float)


def semi_sign(v, sign: int):
    return sgn_plus(v) if sign == 1 else sgn_minus(v)


def semi_part(v, sign: int):
    """max(+-v, 0)."""
    return np.maximum(sign * np.asarray(v, dtype=float), 0.0)


def semi_entropy_pair(se: SemiEntropy, flux: FluxModel, u):
    """(eta, q) with eta = max(+-(u - k), 0), q = sgn^+-(u - k)(f(u) - f(k))."""
    u = np.asarray(u, dtype=float)
    eta = semi_part(u - se.k, se.sign)
    q = semi_sign(u - se.k, se.sign) * (flux.f(u) - flux.f(se.k))
    if eta.ndim == 0:
        return float(eta), float(q)
    return eta, q


def secant_slope(deg: DegeneracyModel, z1, z2):
    """(A(z1) - A(z2)) / (z1 - z2), or A'(z1) where the arguments coincide.

    Works elementwise on arrays.  Where the difference of arguments is so
    small that the quotient is dominated by rounding, the derivative at the
    midpoint is used instead.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    dz = z1 - z2
    scale = np.maximum(np.maximum(np.abs(z1), np.abs(z2)), 1.0)
    close = np.abs(dz) <= 1e-10 * scale
    safe_dz = np.where(close, 1.0, dz)
    slope = np.where(close, deg.A_prime(0.5 * (z1 + z2)), (deg.A(z1) - deg.A(z2)) / safe_dz)
    slope = np.maximum(slope, 0.0)
    return slope if slope.ndim else float(slope)


def sign_remainder_terms(kw: KernelWeights, deg: DegeneracyModel, u, k: float, sign: int, i: int):
    """Summands c w_ij (A(u_j) - A(k)) (sgn(u_j - k) - sgn(u_i - k)) of the remainder at cell i.

    With this ordering of the sign difference every summand is nonnegative
    for nondecreasing A, and the identity below holds exactly.
    """
    u = np.asarray(u, dtype=float)
    Au = deg.A(u)
    Ak = deg.A(k)
    s = semi_sign(u - k, sign)
    return kw.c_ns * kw.weights[i] * (Au - Ak) * (s - s[i])


def sign_remainder(kw: KernelWeights, deg: DegeneracyModel, u, k: float, sign: int, i: int):
    """Return (R_k(x_i), identity residual).

    The identity is L[(A(u) - A(k))^+-]_i = sgn^+-(u_i - k) L[A(u)]_i - R_k(x_i).
    """
    u = np.asarray(u, dtype=float)
    Au = deg.A(u)
    Ak = deg.A(k)
    w = kw.weights[i]
    c = kw.c_ns
    terms = sign_remainder_terms(kw, deg, u, k, sign, i)
    remainder = math.fsum(terms)
    # the identity writes |A(u) - A(k)|^+- as the product sgn^+-(u - k)(A(u) - A(k))
    eta_A = semi_sign(u - k, sign) * (Au - Ak)
    lhs = c * math.fsum(w * (eta_A[i] - eta_A))
    s_i = float(semi_sign(u[i] - k, sign))
    rhs = s_i * c * math.fsum(w * (Au[i] - Au)) - remainder
    return remainder, abs(lhs - rhs)


def flux_library(name: str, **params) -> FluxModel:
    if name == "burgers":
        return burgers()
    if name == "advection":
        return linear_advection(params.get("speed", 1.0))
    if name == "zero":
        return zero_flux()
    raise ModelError(f"unknown flux model {name!r}")


def degeneracy_library(name: str, **params) -> DegeneracyModel:
    if name == "threshold":
        return degenerate_threshold(params.get("u_c", 0.5))
    if name == "porous":
        return porous_medium(params.get("m", 2.0))
    if name == "two_plateau":
        return two_plateau(params.get("lo", 0.25), params.get("hi", 0.75))
    if name == "linear":
        return linear_degeneracy(params.get("slope", 1.0))
    if name == "zero":
        return zero_degeneracy()
    raise ModelError(f"unknown degeneracy model {name!r}")


FLUX_NAMES = ("burgers", "advection", "zero")
DEGENERACY_NAMES = ("threshold", "porous", "two_plateau", "linear", "zero")
