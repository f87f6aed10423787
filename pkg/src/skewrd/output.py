"""Solution output: CSV for 1D runs, legacy ASCII VTK for 2D runs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import yaml

from .dgspace import DgSpace
from .integrator import State

__all__ = ["write_solution_csv", "write_vtk", "write_solution", "write_metadata", "write_config"]


def write_solution_csv(path, space: DgSpace, state: State, names=("u", "v", "s")):
    """Element-endpoint values, two rows per element (the DG field is
    discontinuous, so shared vertices appear twice)."""
    vals = np.array([space.vertex_values(y) for y in state.fields])  # (C, e, 2)
    xv = space.mesh.element_vertices()[:, :, 0]                        # (e, 2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + list(names[: state.n_components]))
        for e in range(space.n_elements):
            for j in range(2):
                w.writerow([repr(float(xv[e, j]))] + [repr(float(vals[c, e, j])) for c in range(len(vals))])


def write_vtk(path, space: DgSpace, state: State, names=("u", "v", "s"), title="skewrd solution"):
    """Legacy ASCII VTK unstructured grid with per-element vertex copies."""
    verts = space.mesh.element_vertices()      # (e, 3, 2)
    ne = verts.shape[0]
    vals = np.array([space.vertex_values(y) for y in state.fields])  # (C, e, 3)
    lines = ["# vtk DataFile Version 3.0", f"{title} t={state.t!r}", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {3 * ne} double"]
    lines += [f"{float(x)!r} {float(y)!r} 0.0" for x, y in verts.reshape(-1, 2)]
    lines.append(f"CELLS {ne} {4 * ne}")
    lines += [f"3 {3 * e} {3 * e + 1} {3 * e + 2}" for e in range(ne)]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["5"] * ne
    lines.append(f"POINT_DATA {3 * ne}")
    for c in range(len(vals)):
        lines.append(f"SCALARS {names[c]} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [repr(float(v)) for v in vals[c].ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_solution(out_dir, space: DgSpace, state: State, step: int, names=("u", "v", "s")) -> Path:
    out_dir = Path(out_dir)
    if space.mesh.dim == 1:
        path = out_dir / f"solution_{step:06d}.csv"
        write_solution_csv(path, space, state, names)
    else:
        path = out_dir / f"solution_{step:06d}.vtk"
        write_vtk(path, space, state, names)
    return path


def write_metadata(path, meta: dict):
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")


def write_config(path, config: dict):
    Path(path).write_text(yaml.safe_dump(config, sort_keys=True))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)
