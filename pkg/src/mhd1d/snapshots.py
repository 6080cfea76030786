"""Field snapshot files and the JSON-lines diagnostics stream.

A snapshot is a CSV pair: the given path holds cell data
(`x_center,v,theta,b1,b2`) and a companion `<name>.nodes<ext>` file holds node
data (`x_node,u,w1,w2`). Both start with a `# t=<time> step=<n>` header and
store full double precision (17 significant digits), so a write/load round
trip is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import GasState, Grid

_FMT = "%.17g"


class SnapshotError(ValueError):
    """Malformed or inconsistent snapshot file; message carries path and line."""


def node_companion(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".nodes" + p.suffix)


def emit_snapshot(state: GasState, grid: Grid, path) -> None:
    """Write the center/node CSV pair for a state."""
    path = Path(path)
    header = f"# t={_FMT % state.t} step={state.step}\n"
    xc, xn = grid.centers(), grid.nodes()
    with open(path, "w") as f:
        f.write(header)
        f.write("x_center,v,theta,b1,b2\n")
        for i in range(grid.cells):
            f.write(",".join(_FMT % val for val in
                             (xc[i], state.v[i], state.theta[i],
                              state.b[i, 0], state.b[i, 1])) + "\n")
    with open(node_companion(path), "w") as f:
        f.write(header)
        f.write("x_node,u,w1,w2\n")
        for j in range(grid.cells + 1):
            f.write(",".join(_FMT % val for val in
                             (xn[j], state.u[j], state.w[j, 0], state.w[j, 1]))
                    + "\n")


def _parse_header(line: str, path) -> tuple[float, int]:
    try:
        parts = dict(item.split("=") for item in line.lstrip("#").split())
        return float(parts["t"]), int(parts["step"])
    except (ValueError, KeyError) as exc:
        raise SnapshotError(f"{path}:1: bad header {line!r}") from exc


def _read_csv(path, columns: int) -> tuple[float, int, np.ndarray]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    if len(lines) < 3 or not lines[0].startswith("#"):
        raise SnapshotError(f"{path}:1: missing '# t=...' header")
    t, step = _parse_header(lines[0], path)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != columns:
            raise SnapshotError(f"{path}:{lineno}: expected {columns} fields, "
                                f"got {len(fields)}")
        try:
            rows.append([float(x) for x in fields])
        except ValueError as exc:
            raise SnapshotError(f"{path}:{lineno}: non-numeric field: {exc}") from exc
    return t, step, np.asarray(rows, dtype=float)


def load_snapshot(path) -> tuple[GasState, Grid]:
    """Inverse of emit_snapshot. Reconstructs the grid from the stored
    coordinates and returns the state with its saved time and step."""
    t, step, centers = _read_csv(path, 5)
    t_n, step_n, nodes = _read_csv(node_companion(path), 4)
    if t_n != t or step_n != step:
        raise SnapshotError(f"{path}: node companion carries a different "
                            f"time/step ({t_n}, {step_n}) vs ({t}, {step})")
    if nodes.shape[0] != centers.shape[0] + 1:
        raise SnapshotError(f"{path}: {centers.shape[0]} centers need "
                            f"{centers.shape[0] + 1} nodes, got {nodes.shape[0]}")
    x_node = nodes[:, 0]
    dx = float(x_node[1] - x_node[0])
    grid = Grid(cells=centers.shape[0], dx=dx, left_edge=float(x_node[0]))
    state = GasState(v=centers[:, 1].copy(), theta=centers[:, 2].copy(),
                     b=centers[:, 3:5].copy(), u=nodes[:, 1].copy(),
                     w=nodes[:, 2:4].copy(), t=t, step=step)
    state.validate(grid)
    return state, grid


def emit_diagnostics(record, stream) -> None:
    """Append one JSON object per record; keys follow the record's field
    order so identical runs produce identical bytes."""
    stream.write(json.dumps(record.to_json_dict()) + "\n")
