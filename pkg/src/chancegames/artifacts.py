"""Run artifacts: trajectory files, tabular export, reports, and manifests.

The native trajectory format is versioned JSON. Covariances are stored as
lower-triangular packed rows; floats land in the file via ``repr`` so values
round-trip exactly. Identical inputs therefore produce byte-identical files
(run manifests, which record wall time, are the one deliberately non-stable
artifact).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .montecarlo import MonteCarloReport
from .solver import Solution

TRAJECTORY_SCHEMA_VERSION = 1

CSV_COLUMNS = ("step", "agent", "x", "y", "heading", "speed", "yaw_rate", "acceleration")


def _pack_tril(mat: np.ndarray) -> list:
    n = mat.shape[0]
    return [float(mat[i, j]) for i in range(n) for j in range(i + 1)]


def _unpack_tril(values, n: int) -> np.ndarray:
    mat = np.zeros((n, n))
    it = iter(values)
    for i in range(n):
        for j in range(i + 1):
            mat[i, j] = next(it)
            mat[j, i] = mat[i, j]
    return mat


def trajectory_to_dict(solution: Solution) -> dict:
    traj = solution.trajectory
    L = traj.horizon
    n_players = traj.controls.shape[1]
    return {
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "horizon": L,
        "n_players": n_players,
        "means": [[float(v) for v in row] for row in traj.means],
        "covariances_tril": [_pack_tril(np.asarray(c)) for c in traj.covs],
        "controls": [
            [[float(v) for v in traj.controls[k, j]] for j in range(n_players)] for k in range(L)
        ],
        "gains": [
            [[[float(v) for v in row] for row in pol.gains[k]] for k in range(L)]
            for pol in solution.policies
        ],
        "feedforwards": [
            [[float(v) for v in pol.feedforwards[k]] for k in range(L)]
            for pol in solution.policies
        ],
        "diagnostics": solution.diagnostics,
    }


def save_trajectory(solution: Solution, path) -> None:
    Path(path).write_text(json.dumps(trajectory_to_dict(solution), indent=1, sort_keys=True))


def load_trajectory(path) -> dict:
    """Parse a native trajectory file back into arrays.

    Returns a dict with keys ``means`` (L+1, n), ``covariances`` (list of
    n x n), ``controls`` (L, N, 2), ``gains``, ``feedforwards``, and
    ``diagnostics``. Raises :class:`InvalidInputError` on malformed input,
    reporting the byte offset for JSON syntax errors.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"malformed trajectory file at byte {exc.pos}: {exc.msg}") from exc
    for key in ("schema_version", "horizon", "n_players", "means", "covariances_tril", "controls"):
        if key not in doc:
            raise InvalidInputError(f"trajectory file missing field {key!r}")
    if doc["schema_version"] != TRAJECTORY_SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported schema version {doc['schema_version']}")
    means = np.asarray(doc["means"], dtype=float)
    n = means.shape[1] if means.size else 0
    covs = [_unpack_tril(row, n) for row in doc["covariances_tril"]]
    controls = np.asarray(doc["controls"], dtype=float)
    return {
        "schema_version": doc["schema_version"],
        "horizon": doc["horizon"],
        "n_players": doc["n_players"],
        "means": means,
        "covariances": covs,
        "controls": controls,
        "gains": doc.get("gains"),
        "feedforwards": doc.get("feedforwards"),
        "diagnostics": doc.get("diagnostics"),
    }


def trajectory_to_csv(doc: dict) -> str:
    """Flat tabular form: one row per timestep per agent, documented column order.

    Terminal rows carry empty control fields. Floats are written with ``repr``
    so the mean/control round trip is exact.
    """
    means = np.asarray(doc["means"], dtype=float)
    controls = np.asarray(doc["controls"], dtype=float)
    n_players = int(doc["n_players"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for k in range(means.shape[0]):
        for j in range(n_players):
            state = means[k, 4 * j : 4 * j + 4]
            if k < controls.shape[0]:
                u = [repr(float(controls[k, j, 0])), repr(float(controls[k, j, 1]))]
            else:
                u = ["", ""]
            writer.writerow([k, j] + [repr(float(v)) for v in state] + u)
    return buf.getvalue()


def csv_to_trajectory(text: str) -> dict:
    """Rebuild a native-format dict from the tabular form.

    Covariances and policies are not representable in the flat form; they are
    restored as zeros/absent. Means and controls survive exactly.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InvalidInputError("empty tabular file") from None
    if tuple(header) != CSV_COLUMNS:
        raise InvalidInputError(f"unexpected tabular header {header!r}")
    rows = list(reader)
    if not rows:
        return {
            "schema_version": TRAJECTORY_SCHEMA_VERSION,
            "horizon": 0,
            "n_players": 0,
            "means": [],
            "covariances_tril": [],
            "controls": [],
        }
    try:
        steps = 1 + max(int(r[0]) for r in rows)
        n_players = 1 + max(int(r[1]) for r in rows)
        means = np.zeros((steps, 4 * n_players))
        controls = np.zeros((max(steps - 1, 0), n_players, 2))
        for r in rows:
            k, j = int(r[0]), int(r[1])
            means[k, 4 * j : 4 * j + 4] = [float(v) for v in r[2:6]]
            if r[6] != "" and k < steps - 1:
                controls[k, j] = [float(r[6]), float(r[7])]
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"malformed tabular row: {exc}") from exc
    n = 4 * n_players
    return {
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "horizon": steps - 1,
        "n_players": n_players,
        "means": [[float(v) for v in row] for row in means],
        "covariances_tril": [_pack_tril(np.zeros((n, n))) for _ in range(steps)],
        "controls": [
            [[float(v) for v in controls[k, j]] for j in range(n_players)]
            for k in range(steps - 1)
        ],
    }


def report_to_dict(report: MonteCarloReport) -> dict:
    return {
        "trials": report.trials,
        "satisfaction_rate": report.satisfaction_rate,
        "histogram_edges": [float(v) for v in report.histogram_edges],
        "histogram_counts": [int(v) for v in report.histogram_counts],
        "max_violations": [float(v) for v in report.max_violations],
        "seeds": list(report.seeds),
        "cost_mean": [float(v) for v in report.cost_mean],
        "cost_std": [float(v) for v in report.cost_std],
    }


def save_report(report: MonteCarloReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=1, sort_keys=True))


def write_manifest(path, *, command, scenario, overrides, mode, seeds, version,
                   wall_time_s, outputs) -> None:
    """Record everything needed to reproduce a run."""
    manifest = {
        "command": command,
        "scenario": scenario,
        "overrides": overrides,
        "mode": mode,
        "seeds": seeds,
        "tool_version": version,
        "wall_time_s": wall_time_s,
        "outputs": outputs,
    }
    Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True))
