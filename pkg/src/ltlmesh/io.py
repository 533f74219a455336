"""Mesh and field file I/O: OFF/OBJ readers, OFF/VTK/CSV writers.

Formats are deliberately minimal: OFF and OBJ cover mesh exchange, legacy
ASCII VTK polydata carries point-data fields into standard viewers, and CSV
holds per-vertex fields at full float64 precision (17 significant digits).
"""

from __future__ import annotations

import os

import numpy as np

from .mesh import TriangleMesh


class MeshFormatError(ValueError):
    """Malformed mesh or field file; the message carries the line number."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# OFF


def load_off(path) -> TriangleMesh:
    with open(path) as fh:
        lines = fh.readlines()

    def content(start):
        for i in range(start, len(lines)):
            stripped = lines[i].split("#", 1)[0].strip()
            if stripped:
                yield i, stripped

    stream = content(0)
    try:
        i, header = next(stream)
    except StopIteration:
        raise MeshFormatError(f"{path}: empty file") from None
    if header != "OFF":
        raise MeshFormatError(f"{path} line {i + 1}: expected 'OFF' header")
    try:
        i, counts = next(stream)
        nv, nf = [int(tok) for tok in counts.split()[:2]]
    except (StopIteration, ValueError):
        raise MeshFormatError(f"{path}: missing or malformed counts line") from None

    verts = np.empty((nv, 3))
    for k in range(nv):
        try:
            i, line = next(stream)
            verts[k] = [float(tok) for tok in line.split()[:3]]
        except (StopIteration, ValueError, IndexError):
            raise MeshFormatError(f"{path} line {i + 1}: bad vertex line") from None

    faces = np.empty((nf, 3), dtype=np.int64)
    for k in range(nf):
        try:
            i, line = next(stream)
            toks = line.split()
            cnt = int(toks[0])
        except (StopIteration, ValueError, IndexError):
            raise MeshFormatError(f"{path} line {i + 1}: bad face line") from None
        if cnt != 3:
            raise MeshFormatError(
                f"{path} line {i + 1}: non-triangular face ({cnt} vertices)"
            )
        try:
            faces[k] = [int(t) for t in toks[1:4]]
        except ValueError:
            raise MeshFormatError(f"{path} line {i + 1}: bad face indices") from None
        if faces[k].min() < 0 or faces[k].max() >= nv:
            raise MeshFormatError(f"{path} line {i + 1}: face index out of range")
    return TriangleMesh(verts, faces)


def write_off(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for v in mesh.vertices:
            fh.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


# ---------------------------------------------------------------------------
# OBJ


def load_obj(path) -> TriangleMesh:
    verts = []
    faces = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            if toks[0] == "v":
                try:
                    verts.append([float(t) for t in toks[1:4]])
                except (ValueError, IndexError):
                    raise MeshFormatError(
                        f"{path} line {lineno}: bad vertex line"
                    ) from None
            elif toks[0] == "f":
                refs = toks[1:]
                if len(refs) != 3:
                    raise MeshFormatError(
                        f"{path} line {lineno}: non-triangular face "
                        f"({len(refs)} vertices)"
                    )
                try:
                    # 'f 1/2/3' style references: only the vertex index is used.
                    idx = [int(r.split("/")[0]) for r in refs]
                except ValueError:
                    raise MeshFormatError(
                        f"{path} line {lineno}: bad face indices"
                    ) from None
                if any(i < 1 for i in idx):
                    raise MeshFormatError(
                        f"{path} line {lineno}: only positive 1-based indices supported"
                    )
                faces.append([i - 1 for i in idx])
            # all other directives ignored
    if not verts:
        raise MeshFormatError(f"{path}: no vertices found")
    faces_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces_arr) and faces_arr.max() >= len(verts):
        raise MeshFormatError(f"{path}: face index out of range")
    return TriangleMesh(np.asarray(verts), faces_arr)


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Load an OFF or OBJ mesh; the format is inferred from the extension."""
    if format is None:
        format = os.path.splitext(str(path))[1].lstrip(".").lower()
    format = format.lower()
    if format == "off":
        return load_off(path)
    if format == "obj":
        return load_obj(path)
    raise MeshFormatError(f"unsupported mesh format '{format}' (use OFF or OBJ)")


# ---------------------------------------------------------------------------
# VTK legacy ASCII (output only)


def write_vtk(path, mesh: TriangleMesh, point_data: dict[str, np.ndarray] | None = None,
              title: str = "ltlmesh output") -> None:
    """Write legacy ASCII VTK polydata with optional per-vertex fields.

    Scalar fields are arrays of shape (n,), vector fields of shape (n, 3);
    both are emitted under POINT_DATA so standard viewers pick them up.
    """
    n = mesh.n_vertices
    m = mesh.n_triangles
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for v in mesh.vertices:
            fh.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        fh.write(f"POLYGONS {m} {4 * m}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        if point_data:
            fh.write(f"POINT_DATA {n}\n")
            for name, values in point_data.items():
                values = np.asarray(values)
                if values.shape == (n,):
                    fh.write(f"SCALARS {name} double 1\n")
                    fh.write("LOOKUP_TABLE default\n")
                    for x in values:
                        fh.write(f"{_fmt(x)}\n")
                elif values.shape == (n, 3):
                    fh.write(f"VECTORS {name} double\n")
                    for w in values:
                        fh.write(f"{_fmt(w[0])} {_fmt(w[1])} {_fmt(w[2])}\n")
                else:
                    raise ValueError(
                        f"field '{name}' has shape {values.shape}; expected "
                        f"({n},) or ({n}, 3)"
                    )


# ---------------------------------------------------------------------------
# CSV fields


def write_field_csv(path, mesh: TriangleMesh,
                    fields: dict[str, np.ndarray]) -> None:
    """Write per-vertex fields as CSV: vertex_id,x,y,z,<field columns>.

    Vector fields occupy three columns suffixed _x, _y, _z. Values carry 17
    significant digits, so float64 round-trips exactly.
    """
    n = mesh.n_vertices
    columns: list[tuple[str, np.ndarray]] = []
    for name, values in fields.items():
        values = np.asarray(values, dtype=np.float64)
        if values.shape == (n,):
            columns.append((name, values))
        elif values.shape == (n, 3):
            for k, suffix in enumerate(("x", "y", "z")):
                columns.append((f"{name}_{suffix}", values[:, k]))
        else:
            raise ValueError(
                f"field '{name}' has shape {values.shape}; expected ({n},) or ({n}, 3)"
            )
    with open(path, "w") as fh:
        fh.write("vertex_id,x,y,z," + ",".join(name for name, _ in columns) + "\n")
        for i in range(n):
            row = [str(i)] + [_fmt(c) for c in mesh.vertices[i]]
            row += [_fmt(col[i]) for _, col in columns]
            fh.write(",".join(row) + "\n")


def load_field_csv(path) -> dict[str, np.ndarray]:
    """Read a field CSV written by :func:`write_field_csv`.

    Returns all non-coordinate columns keyed by name; columns sharing a stem
    with _x/_y/_z suffixes are reassembled into (n, 3) vector fields.
    """
    with open(path) as fh:
        header = fh.readline().strip()
        names = header.split(",")
        if names[:4] != ["vertex_id", "x", "y", "z"]:
            raise MeshFormatError(
                f"{path} line 1: expected header starting with vertex_id,x,y,z"
            )
        rows = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            toks = line.split(",")
            if len(toks) != len(names):
                raise MeshFormatError(
                    f"{path} line {lineno}: expected {len(names)} columns, "
                    f"got {len(toks)}"
                )
            try:
                rows.append([float(t) for t in toks])
            except ValueError:
                raise MeshFormatError(
                    f"{path} line {lineno}: non-numeric value"
                ) from None
    data = np.asarray(rows)
    if len(data) == 0:
        raise MeshFormatError(f"{path}: no data rows")
    columns = {name: data[:, k] for k, name in enumerate(names) if k >= 4}

    fields: dict[str, np.ndarray] = {}
    consumed = set()
    for name in columns:
        if name.endswith("_x"):
            stem = name[:-2]
            triple = [f"{stem}_x", f"{stem}_y", f"{stem}_z"]
            if all(c in columns for c in triple):
                fields[stem] = np.stack([columns[c] for c in triple], axis=1)
                consumed.update(triple)
    for name, col in columns.items():
        if name not in consumed:
            fields[name] = col
    return fields
