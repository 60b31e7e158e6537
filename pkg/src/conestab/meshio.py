"""OBJ and OFF reading/writing (vertices and faces only)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .geom import TriangleMesh


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_obj(mesh: TriangleMesh, path) -> Path:
    path = Path(path)
    lines = ["v " + " ".join(_fmt(c) for c in row) for row in mesh.vertices]
    lines += ["f " + " ".join(str(i + 1) for i in tri) for tri in mesh.triangles.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_off(mesh: TriangleMesh, path) -> Path:
    path = Path(path)
    header = "OFF" if mesh.dim == 3 else "nOFF"
    lines = [header]
    if mesh.dim != 3:
        lines.append(str(mesh.dim))
    lines.append(f"{len(mesh.vertices)} {len(mesh.triangles)} 0")
    lines += [" ".join(_fmt(c) for c in row) for row in mesh.vertices]
    lines += ["3 " + " ".join(map(str, tri)) for tri in mesh.triangles.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_off(path) -> TriangleMesh:
    tokens = [ln.split("#")[0].strip() for ln in Path(path).read_text().splitlines()]
    tokens = [t for t in tokens if t]
    head = tokens.pop(0)
    dim = 3
    if head == "nOFF":
        dim = int(tokens.pop(0))
    elif head != "OFF":
        raise ValueError(f"not an OFF file: {head!r}")
    nv, nf = (int(x) for x in tokens.pop(0).split()[:2])
    verts = np.array([[float(x) for x in tokens[i].split()[:dim]] for i in range(nv)])
    faces = []
    for line in tokens[nv:nv + nf]:
        vals = [int(x) for x in line.split()]
        idx = vals[1:1 + vals[0]]
        faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))
