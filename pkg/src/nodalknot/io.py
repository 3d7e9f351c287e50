"""File writers: VTK legacy ASCII (tetrahedra, polylines), OBJ polylines, JSON."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

VTK_TETRA = 10
VTK_POLY_LINE = 4


def _fmt(a) -> str:
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a))


def write_vtk_tets(path, mesh, point_data: Optional[Mapping[str, np.ndarray]] = None,
                   cell_data: Optional[Mapping[str, np.ndarray]] = None, title: str = "tetrahedral mesh") -> None:
    """Unstructured grid with region tags (and any extra arrays) as cell data.

    Tetrahedra crossing a periodic face are written with unwrapped corners,
    so corner points are duplicated; point data is mapped accordingly.
    """
    corners = mesh.corners()
    flat = corners.reshape(-1, 3)
    ids = mesh.tets.reshape(-1)
    # deduplicate (vertex id, offset) pairs
    key = np.concatenate([ids[:, None], mesh.offsets.reshape(-1, 3)], axis=1)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    pts = flat[first]
    src = uniq[:, 0]
    conn = inverse.reshape(-1, 4)
    cells = dict(cell_data or {})
    cells.setdefault("region", mesh.tags)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double", _fmt(pts),
             f"CELLS {len(conn)} {5 * len(conn)}",
             "\n".join("4 " + " ".join(str(int(v)) for v in row) for row in conn),
             f"CELL_TYPES {len(conn)}", "\n".join([str(VTK_TETRA)] * len(conn)),
             f"CELL_DATA {len(conn)}"]
    for name, arr in cells.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(np.asarray(arr, dtype=float)[:, None])]
    if point_data:
        lines.append(f"POINT_DATA {len(pts)}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)[src]
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(arr[:, None])]
    Path(path).write_text("\n".join(lines) + "\n")


def write_vtk_polylines(path, polylines: Sequence[np.ndarray], closed: Sequence[bool] = (),
                        point_data: Optional[Mapping[str, Sequence[np.ndarray]]] = None,
                        title: str = "polylines") -> None:
    """Polydata with one polyline per component (closed ones repeat their first point)."""
    pts, conn = [], []
    offset = 0
    for i, p in enumerate(polylines):
        n = len(p)
        pts.append(p)
        idx = list(range(offset, offset + n))
        if i < len(closed) and closed[i]:
            idx.append(offset)
        conn.append(idx)
        offset += n
    P = np.concatenate(pts) if pts else np.zeros((0, 3))
    size = sum(len(c) + 1 for c in conn)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET POLYDATA",
             f"POINTS {len(P)} double", _fmt(P) if len(P) else "",
             f"LINES {len(conn)} {size}",
             "\n".join(f"{len(c)} " + " ".join(map(str, c)) for c in conn)]
    if point_data:
        lines.append(f"POINT_DATA {len(P)}")
        for name, arrs in point_data.items():
            arr = np.concatenate([np.asarray(a, dtype=float) for a in arrs])
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(arr[:, None])]
    Path(path).write_text("\n".join(lines) + "\n")


def write_obj_polylines(path, polylines: Sequence[np.ndarray], closed: Sequence[bool] = ()) -> None:
    out = []
    base = 1
    for i, p in enumerate(polylines):
        out += [f"v {x!r} {y!r} {z!r}" for x, y, z in np.asarray(p, dtype=float).tolist()]
        idx = list(range(base, base + len(p)))
        if i < len(closed) and closed[i]:
            idx.append(base)
        out.append("l " + " ".join(map(str, idx)))
        base += len(p)
    Path(path).write_text("\n".join(out) + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")
