"""INI run configuration: parsing with full error collection, defaults, and
a canonical writer so that ``parse(write(cfg)) == cfg``."""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .geometry import Domain
from .model import (DEGENERACY_NAMES, FLUX_NAMES, DegeneracyModel, FluxModel, degeneracy_library,
                    flux_library)
from .solver import BoundaryData, ProblemData, SolverConfig

INITIAL_KINDS = ("riemann", "constant", "sine", "bump")
CHECK_NAMES = ("operator", "maximum_principle", "comparison", "l1_contraction", "entropy",
               "negative_control", "sweep", "decomposition", "cutoff", "vector_field",
               "boundary_flux", "commutator")
FORMATS = ("csv", "json", "gnuplot")


class ConfigError(ValueError):
    """Carries every problem found, each as 'section/key (line n): message'."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ProblemSection:
    x_lo: float = 0.0
    x_hi: float = 1.0
    n_cells: int = 128
    s: float = 0.75
    t_end: float = 0.3
    convention: str = "two_pi"
    flux: str = "burgers"
    advection_speed: float = 1.0
    degeneracy: str = "threshold"
    threshold: float = 0.5
    porous_m: float = 2.0
    plateau_lo: float = 0.25
    plateau_hi: float = 0.75
    linear_slope: float = 1.0
    initial: str = "riemann"
    u_left: float = 1.0
    u_right: float = 0.0
    x_jump: float = 0.5
    amplitude: float = 0.4
    ub_left: float = 1.0
    ub_right: float = 0.0
    ub_amplitude: float = 0.0
    ub_frequency: float = 1.0


@dataclass(frozen=True)
class SolverSection:
    eps: float = 0.01
    eps_list: tuple = (0.1, 0.05, 0.025, 0.0125)
    cfl: float = 0.45
    picard_tol: float = 1e-12
    picard_max: int = 100
    save_every: int = 1
    mollify_width: float = 1.0
    flux_speed: str = "local"


@dataclass(frozen=True)
class VerifySection:
    checks: tuple = CHECK_NAMES
    delta: float = 0.0                 # 0 selects the grid default
    entropy_rel_tol: float = 1e-6
    bv_ratio: float = 1.25
    shift: float = 0.1
    random_pairs: int = 20
    seed: int = 20240607
    inject: str = "none"              # "expansion_shock" swaps in a non-entropic fake trajectory
    record_timing: bool = False
    green_sizes: tuple = (64, 128, 256, 512)


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: tuple = FORMATS


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    solver: SolverSection = field(default_factory=SolverSection)
    verify: VerifySection = field(default_factory=VerifySection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def sweep_mode(self) -> bool:
        return len(self.solver.eps_list) >= 3

    @property
    def domain(self) -> Domain:
        return Domain(self.problem.x_lo, self.problem.x_hi)

    def solver_config(self, eps: float | None = None) -> SolverConfig:
        p, sv = self.problem, self.solver
        return SolverConfig(eps=sv.eps if eps is None else eps, s=p.s, n_cells=p.n_cells,
                            t_end=p.t_end, cfl=sv.cfl, picard_tol=sv.picard_tol,
                            picard_max=sv.picard_max, save_every=sv.save_every,
                            domain=self.domain, mollify_width=sv.mollify_width,
                            flux_speed=sv.flux_speed, convention=p.convention)

    def flux_model(self) -> FluxModel:
        return flux_library(self.problem.flux, speed=self.problem.advection_speed)

    def degeneracy_model(self) -> DegeneracyModel:
        p = self.problem
        return degeneracy_library(p.degeneracy, u_c=p.threshold, m=p.porous_m, lo=p.plateau_lo,
                                  hi=p.plateau_hi, slope=p.linear_slope)

    def initial_field(self, shift: float = 0.0, jump_offset: float = 0.0) -> np.ndarray:
        p = self.problem
        x = self.solver_config().grid.centers
        length = p.x_hi - p.x_lo
        if p.initial == "riemann":
            u = np.where(x < p.x_jump + jump_offset, p.u_left, p.u_right)
        elif p.initial == "constant":
            u = np.full_like(x, p.u_left)
        elif p.initial == "sine":
            u = 0.5 * (p.u_left + p.u_right) + p.amplitude * np.sin(2.0 * math.pi * (x - p.x_lo) / length)
        else:
            z = (x - p.x_jump - jump_offset) / (0.2 * length)
            inside = np.abs(z) < 1
            peak = np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - z * z, 1.0)), 0.0)
            u = p.u_right + (p.u_left - p.u_right) * peak
        return u.astype(float) + shift

    def boundary_data(self, shift: float = 0.0) -> BoundaryData:
        p = self.problem
        amp, freq = p.ub_amplitude, p.ub_frequency
        left, right = p.ub_left + shift, p.ub_right + shift
        if amp == 0.0:
            return BoundaryData.constant(left, right)
        return BoundaryData(lambda t: left + amp * math.sin(2.0 * math.pi * freq * t),
                            lambda t: right + amp * math.sin(2.0 * math.pi * freq * t))

    def problem_data(self, shift: float = 0.0, jump_offset: float = 0.0) -> ProblemData:
        return ProblemData(self.initial_field(shift, jump_offset), self.boundary_data(shift),
                           self.flux_model(), self.degeneracy_model())


SECTIONS = {"problem": ProblemSection, "solver": SolverSection, "verify": VerifySection,
            "output": OutputSection}


def _key_lines(text: str) -> dict:
    """(section, key) -> line number, for diagnostics."""
    out = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", stripped)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), n)
            continue
        m = re.match(r"^([A-Za-z0-9_.]+)\s*[=:]", stripped)
        if m and section is not None:
            out.setdefault((section, m.group(1).lower()), n)
    return out


def _convert(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        val = float(raw)
        if not math.isfinite(val):
            raise ValueError(f"expected a finite number, got {raw!r}")
        return val
    if kind is str:
        return raw
    raise TypeError(kind)


_TUPLE_KINDS = {("solver", "eps_list"): float, ("verify", "checks"): str,
                ("verify", "green_sizes"): int, ("output", "formats"): str}


def _validate(cfg: RunConfig, where) -> list:
    errs = []
    p, sv, vf, out = cfg.problem, cfg.solver, cfg.verify, cfg.output

    def bad(section, key, msg):
        errs.append(f"[{section}] {key}{where(section, key)}: {msg}")

    if not p.x_lo < p.x_hi:
        bad("problem", "x_hi", "must exceed x_lo")
    if p.n_cells < 4 or p.n_cells > 4096:
        bad("problem", "n_cells", "must lie in [4, 4096]")
    if not 0 < p.s < 1:
        bad("problem", "s", "must lie in the open interval (0, 1)")
    if not p.t_end > 0:
        bad("problem", "t_end", "must be positive")
    if p.convention not in ("two_pi", "standard"):
        bad("problem", "convention", "must be 'two_pi' or 'standard'")
    if p.flux not in FLUX_NAMES:
        bad("problem", "flux", f"unknown model; choose from {', '.join(FLUX_NAMES)}")
    if p.degeneracy not in DEGENERACY_NAMES:
        bad("problem", "degeneracy", f"unknown model; choose from {', '.join(DEGENERACY_NAMES)}")
    if p.threshold < 0:
        bad("problem", "threshold", "must be nonnegative")
    if p.porous_m < 1:
        bad("problem", "porous_m", "must be at least 1")
    if not 0 <= p.plateau_lo < p.plateau_hi:
        bad("problem", "plateau_hi", "need 0 <= plateau_lo < plateau_hi")
    if p.linear_slope < 0:
        bad("problem", "linear_slope", "must be nonnegative")
    if p.initial not in INITIAL_KINDS:
        bad("problem", "initial", f"unknown initial datum; choose from {', '.join(INITIAL_KINDS)}")
    if not p.x_lo < p.x_jump < p.x_hi:
        bad("problem", "x_jump", "must lie inside (x_lo, x_hi)")
    if p.ub_frequency < 0:
        bad("problem", "ub_frequency", "must be nonnegative")
    if not sv.eps > 0:
        bad("solver", "eps", "must be positive")
    if any(not e > 0 for e in sv.eps_list):
        bad("solver", "eps_list", "entries must be positive")
    elif any(b > a for a, b in zip(sv.eps_list, sv.eps_list[1:])):
        bad("solver", "eps_list", "must be nonincreasing")
    elif 0 < len(sv.eps_list) < 3:
        bad("solver", "eps_list", "needs at least three entries (or none)")
    if not 0 < sv.cfl < 1:
        bad("solver", "cfl", "must lie in the open interval (0, 1)")
    if not sv.picard_tol > 0:
        bad("solver", "picard_tol", "must be positive")
    if sv.picard_max < 1:
        bad("solver", "picard_max", "must be at least 1")
    if sv.save_every < 1:
        bad("solver", "save_every", "must be at least 1")
    if not sv.mollify_width >= 0:
        bad("solver", "mollify_width", "must be nonnegative")
    if sv.flux_speed not in ("local", "global"):
        bad("solver", "flux_speed", "must be 'local' or 'global'")
    unknown = [c for c in vf.checks if c not in CHECK_NAMES and c != "all"]
    if unknown:
        bad("verify", "checks", f"unknown checks {', '.join(unknown)}; choose from {', '.join(CHECK_NAMES)}")
    if vf.delta < 0 or vf.delta >= 0.5 * (p.x_hi - p.x_lo):
        bad("verify", "delta", "must lie in [0, half the domain length); 0 selects the default")
    if not vf.entropy_rel_tol > 0:
        bad("verify", "entropy_rel_tol", "must be positive")
    if not vf.bv_ratio >= 1:
        bad("verify", "bv_ratio", "must be at least 1")
    if vf.random_pairs < 1:
        bad("verify", "random_pairs", "must be at least 1")
    if vf.inject not in ("none", "expansion_shock"):
        bad("verify", "inject", "must be 'none' or 'expansion_shock'")
    if any(n < 4 for n in vf.green_sizes) or len(vf.green_sizes) < 2:
        bad("verify", "green_sizes", "need at least two sizes, each >= 4")
    bad_fmt = [f for f in out.formats if f not in FORMATS]
    if bad_fmt:
        bad("output", "formats", f"unknown formats {', '.join(bad_fmt)}; choose from {', '.join(FORMATS)}")
    if not out.directory:
        bad("output", "directory", "must not be empty")
    return errs


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    lines = _key_lines(text)

    def where(section, key):
        n = lines.get((section, key))
        return f" ({source}:{n})" if n else ""

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    errors = []
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            errors.append(f"[{section}]{where(section, None)}: unknown section; "
                          f"expected one of {', '.join(SECTIONS)}")
            continue
        known = {f.name: f for f in fields(SECTIONS[section])}
        parsed = {}
        for key, raw in parser.items(section):
            if key not in known:
                errors.append(f"[{section}] {key}{where(section, key)}: unknown key")
                continue
            default = getattr(SECTIONS[section](), key)
            try:
                if isinstance(default, tuple):
                    item_kind = _TUPLE_KINDS[(section, key)]
                    items = [part for part in (x.strip() for x in raw.split(",")) if part]
                    parsed[key] = tuple(_convert(item_kind, it) for it in items)
                else:
                    kind = bool if isinstance(default, bool) else type(default)
                    parsed[key] = _convert(kind, raw)
            except ValueError as exc:
                errors.append(f"[{section}] {key}{where(section, key)}: {exc}")
        values[section] = parsed
    if "checks" in values.get("verify", {}) and "all" in values["verify"]["checks"]:
        values["verify"]["checks"] = CHECK_NAMES
    cfg = RunConfig(**{name: SECTIONS[name](**values.get(name, {})) for name in SECTIONS})
    # riemann defaults: boundary values follow the initial states unless set
    prob = values.get("problem", {})
    updates = {}
    if "ub_left" not in prob and "u_left" in prob:
        updates["ub_left"] = cfg.problem.u_left
    if "ub_right" not in prob and "u_right" in prob:
        updates["ub_right"] = cfg.problem.u_right
    if updates:
        cfg = replace(cfg, problem=replace(cfg.problem, **updates))
    errors.extend(_validate(cfg, where))
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError([f"{path}: no such file"]) from None
    except UnicodeDecodeError as exc:
        raise ConfigError([f"{path}: not UTF-8 ({exc.reason})"]) from None
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    return parse_config_text(text, str(path))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def write_config(cfg: RunConfig) -> str:
    """Canonical text: every key, fixed order, floats in shortest round-trip form."""
    chunks = []
    for name in SECTIONS:
        sec = getattr(cfg, name)
        chunks.append(f"[{name}]")
        for f in fields(sec):
            chunks.append(f"{f.name} = {_format(getattr(sec, f.name))}")
        chunks.append("")
    return "\n".join(chunks)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(write_config(cfg).encode("utf-8")).hexdigest()
