"""Output files: trajectory and table CSVs, gnuplot profiles, JSON report and
run manifest.  Floats are written with 17 significant digits and files end
with a newline, so identical runs give identical bytes."""

from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__


class OutputError(OSError):
    pass


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def trajectory_csv(times, states, n_cells: int) -> str:
    """Header ``t,u_0,...,u_{N-1}`` and one row per saved time."""
    lines = [",".join(["t"] + [f"u_{i}" for i in range(n_cells)])]
    for t, row in zip(times, states):
        lines.append(",".join([fmt(t)] + [fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj, path) -> Path:
    return _write(Path(path), trajectory_csv(traj.times, traj.states, traj.config.n_cells))


def write_profiles(traj, directory, stem: str = "profile") -> list:
    """One gnuplot-ready ``x u`` file per saved time."""
    directory = Path(directory)
    x = traj.config.grid.centers
    width = max(4, len(str(len(traj.times) - 1)))
    paths = []
    for n, (t, row) in enumerate(zip(traj.times, traj.states)):
        body = [f"# t = {fmt(t)}", "# x u"] + [f"{fmt(a)} {fmt(b)}" for a, b in zip(x, row)]
        paths.append(_write(directory / f"{stem}_{n:0{width}d}.dat", "\n".join(body) + "\n"))
    return paths


def write_diagnostics_csv(traj, path) -> Path:
    lines = ["step,picard_iterations,picard_residual,max_principle_slack,mass_defect"]
    for n, rep in enumerate(traj.reports, start=1):
        lines.append(f"{n},{rep.picard_iterations},{fmt(rep.picard_residual)},"
                     f"{fmt(rep.max_principle_slack)},{fmt(rep.mass_defect)}")
    return _write(Path(path), "\n".join(lines) + "\n")


def write_cauchy_csv(rows, path) -> Path:
    lines = ["eps_hi,eps_lo,l1_diff"] + [",".join(fmt(v) for v in row) for row in rows]
    return _write(Path(path), "\n".join(lines) + "\n")


def write_table_csv(header, rows, path) -> Path:
    def cell(v):
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return str(int(v))
        return fmt(v)
    lines = [",".join(header)] + [",".join(cell(v) for v in row) for row in rows]
    return _write(Path(path), "\n".join(lines) + "\n")


def write_text(text: str, path) -> Path:
    return _write(Path(path), text)


def versions() -> dict:
    return {"artifact": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(directory, verb: str, cfg_hash: str, config_text: str, files) -> Path:
    directory = Path(directory)
    rel = sorted(str(Path(f).relative_to(directory)) for f in files)
    body = {"verb": verb, "config_hash": cfg_hash, "versions": versions(), "files": rel,
            "config": config_text}
    return _write(directory / "manifest.json", json.dumps(body, indent=2, sort_keys=True) + "\n")
