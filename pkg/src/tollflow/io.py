"""File schemas: trajectory CSV, equilibrium JSON, stats CSV.

Trajectory CSV columns, in this exact order:

    step, x_1..x_R, p_1..p_R[, zeta, xi_1..xi_R]

Continuous trajectories use column ``t`` in place of ``step``. A header row
is mandatory and floats are rendered with 17 significant digits, so writing
the same data twice produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diagnostics import ConvergenceStats
from .equilibrium import EquilibriumSolution
from .ode import OdeTrajectory
from .simulation import Trajectory


def _fmt(value: float) -> str:
    return "%.17g" % value


def trajectory_to_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    n = traj.n_links
    header = ["step"] + [f"x_{i}" for i in range(1, n + 1)] + [f"p_{i}" for i in range(1, n + 1)]
    with_samples = traj.zetas is not None
    if with_samples:
        header += ["zeta"] + [f"xi_{i}" for i in range(1, n + 1)]
    lines = [",".join(header)]
    for row in range(traj.steps.size):
        cells = [str(int(traj.steps[row]))]
        cells += [_fmt(v) for v in traj.loads[row]]
        cells += [_fmt(v) for v in traj.tolls[row]]
        if with_samples:
            cells.append(_fmt(traj.zetas[row]))
            cells += [_fmt(v) for v in traj.xis[row]]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def ode_trajectory_to_csv(traj: OdeTrajectory, path) -> Path:
    path = Path(path)
    n = traj.loads.shape[1]
    header = ["t"] + [f"x_{i}" for i in range(1, n + 1)] + [f"p_{i}" for i in range(1, n + 1)]
    lines = [",".join(header)]
    for row in range(traj.times.size):
        cells = [_fmt(traj.times[row])]
        cells += [_fmt(v) for v in traj.loads[row]]
        cells += [_fmt(v) for v in traj.tolls[row]]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def equilibrium_to_json(solution: EquilibriumSolution, path, *, metadata: dict | None = None) -> Path:
    """Flat record of the fixed point, the welfare benchmark, and residuals."""
    path = Path(path)
    record = {
        "links": int(solution.sue_load.size),
        "sue_load": [float(v) for v in solution.sue_load],
        "toll": [float(v) for v in solution.toll],
        "social_load": [float(v) for v in solution.social_load],
        "residuals": {k: float(v) for k, v in sorted(solution.residuals.items())},
        "iterations": {k: int(v) for k, v in sorted(solution.iterations.items())},
    }
    if metadata:
        record["config"] = dict(sorted(metadata.items()))
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def stats_to_csv(stats: ConvergenceStats, path) -> Path:
    path = Path(path)
    lines = ["seed,tail_mse,final_x_err,final_p_err"]
    for i, seed in enumerate(stats.seeds):
        lines.append(
            ",".join(
                [
                    str(seed),
                    _fmt(stats.per_seed_tail_mse[i]),
                    _fmt(stats.per_seed_final_load_err[i]),
                    _fmt(stats.per_seed_final_toll_err[i]),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Parse either trajectory schema back into column arrays (for tests/plots)."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    data = np.array([[float(cell) for cell in line.split(",")] for line in text[1:]])
    return {name: data[:, k] for k, name in enumerate(header)}
