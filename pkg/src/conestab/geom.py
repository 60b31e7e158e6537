"""Geometric primitives: unit vectors, great-circle arcs, polylines, triangle meshes.

All kernels accept points in any ambient dimension; cross products are only
used on the three-dimensional fast paths.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
MIN_TRIANGLE_AREA = 1e-14


class GeometryError(ValueError):
    """Raised for invalid geometric input."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def unit(v, tol: float = UNIT_TOL) -> np.ndarray:
    """Return ``v`` as a read-only unit vector, raising if ``v`` is not unit."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise GeometryError("a unit vector must be one-dimensional")
    if abs(np.linalg.norm(arr) - 1.0) > tol:
        raise GeometryError(f"vector {arr} is not unit (norm {np.linalg.norm(arr)!r})")
    return _frozen(arr)


def normalize(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    n = np.linalg.norm(arr, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise GeometryError("cannot normalize a zero vector")
    return arr / n


def pad(v, n: int) -> np.ndarray:
    """Embed a vector (or rows of vectors) into R^n by appending zeros."""
    arr = np.asarray(v, dtype=float)
    extra = n - arr.shape[-1]
    if extra < 0:
        raise GeometryError(f"cannot embed dimension {arr.shape[-1]} into {n}")
    widths = [(0, 0)] * (arr.ndim - 1) + [(0, extra)]
    return np.pad(arr, widths)


@dataclass(frozen=True, eq=False)
class SphericalArc:
    """A great-circle arc ``u(s) = cos(s) e + sin(s) w`` for ``s`` in ``[0, angle]``.

    ``e`` is the start point and ``(e, w)`` an orthonormal frame of the arc's
    2-plane.  A full circle has ``angle == 2*pi`` and no distinguished endpoints.
    """

    start: np.ndarray
    tangent: np.ndarray
    angle: float
    full_circle: bool = False
    exact_end: np.ndarray | None = None

    def __post_init__(self):
        e = unit(self.start)
        w = unit(self.tangent)
        if e.shape != w.shape:
            raise GeometryError("frame vectors have different dimensions")
        if abs(float(e @ w)) > 1e-12:
            raise GeometryError("arc frame is not orthogonal")
        if self.full_circle:
            angle = 2 * np.pi
        else:
            angle = float(self.angle)
            if not 0 < angle <= np.pi + 1e-15:
                raise GeometryError(f"arc angle {angle} outside (0, pi]")
        object.__setattr__(self, "start", e)
        object.__setattr__(self, "tangent", w)
        object.__setattr__(self, "angle", angle)
        if self.exact_end is not None:
            end = unit(self.exact_end, 1e-10)
            computed = np.cos(angle) * e + np.sin(angle) * w
            if np.linalg.norm(end - computed) > 1e-12:
                raise GeometryError("exact_end does not match the arc frame")
            object.__setattr__(self, "exact_end", end)

    @classmethod
    def between(cls, a, b, via=None) -> "SphericalArc":
        """Shorter arc from ``a`` to ``b``; ``via`` pins the branch for antipodal ends."""
        a = unit(a, 1e-10)
        b = unit(b, 1e-10)
        c = float(np.clip(a @ b, -1.0, 1.0))
        if c < -1 + 1e-12:
            if via is None:
                raise GeometryError("antipodal endpoints need a 'via' direction")
            w = np.asarray(via, dtype=float) - (a @ via) * a
            return cls(a, normalize(w), np.pi, exact_end=b)
        w = b - c * a
        nw = np.linalg.norm(w)
        if nw < 1e-15:
            raise GeometryError("arc endpoints coincide")
        arc = cls(a, w / nw, float(np.arccos(c)), exact_end=b)
        if via is not None and not arc.contains_direction(via, 1e-9):
            raise GeometryError("'via' does not lie on the shorter arc")
        return arc

    @classmethod
    def circle(cls, e, w) -> "SphericalArc":
        return cls(e, w, 2 * np.pi, full_circle=True)

    @property
    def dim(self) -> int:
        return self.start.shape[0]

    @cached_property
    def end(self) -> np.ndarray:
        if self.full_circle:
            return self.start
        if self.exact_end is not None:
            return self.exact_end
        return _frozen(np.cos(self.angle) * self.start + np.sin(self.angle) * self.tangent)

    @cached_property
    def midpoint(self) -> np.ndarray:
        h = self.angle / 2
        return _frozen(np.cos(h) * self.start + np.sin(h) * self.tangent)

    def point(self, s) -> np.ndarray:
        """Points ``u(s)``; the parameter values 0 and ``angle`` return the stored ends."""
        s = np.asarray(s, dtype=float)
        pts = np.cos(s)[..., None] * self.start + np.sin(s)[..., None] * self.tangent
        if not self.full_circle:
            pts = np.where((s == 0.0)[..., None], self.start, pts)
            pts = np.where((s == self.angle)[..., None], self.end, pts)
        return pts

    def derivative(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return -np.sin(s)[..., None] * self.start + np.cos(s)[..., None] * self.tangent

    def start_tangent(self) -> np.ndarray:
        return self.tangent

    def end_tangent(self) -> np.ndarray:
        """Unit tangent at the end pointing back into the arc."""
        return -self.derivative(self.angle)

    def contains_direction(self, x, tol: float = 1e-10) -> bool:
        x = np.asarray(x, dtype=float)
        a, b = float(x @ self.start), float(x @ self.tangent)
        if np.hypot(a, b) < 1 - tol or abs(np.linalg.norm(x) - np.hypot(a, b)) > tol:
            return False
        if self.full_circle:
            return True
        phi = np.arctan2(b, a)
        return -tol <= phi <= self.angle + tol

    def support(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Maximum of ``<x, u(s)>`` over the arc, for each row of ``X``.

        Returns the maximum and the maximizing parameter.  Computed in closed
        form: ``<x, u(s)> = rho cos(s - phi)`` is maximal at ``phi`` when that
        lies on the arc and otherwise at the nearer endpoint value.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        a = X @ self.start
        b = X @ self.tangent
        rho = np.hypot(a, b)
        if self.full_circle:
            return rho, np.mod(np.arctan2(b, a), 2 * np.pi)
        phi = np.arctan2(b, a)
        inside = (phi >= 0) & (phi <= self.angle)
        v0 = a
        v1 = a * np.cos(self.angle) + b * np.sin(self.angle)
        end_val = np.maximum(v0, v1)
        end_s = np.where(v0 >= v1, 0.0, self.angle)
        val = np.where(inside, rho, end_val)
        arg = np.where(inside, phi, end_s)
        return val, arg

    def to_dict(self) -> dict:
        if self.full_circle:
            return {"u": self.start.tolist(), "w": self.tangent.tolist()}
        return {"start": self.start.tolist(), "end": self.end.tolist(), "via": self.midpoint.tolist()}


@dataclass(frozen=True, eq=False)
class Polyline:
    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if len(v) > 1:
            keep = np.ones(len(v), dtype=bool)
            keep[1:] = np.any(v[1:] != v[:-1], axis=1)
            v = v[keep]
            if self.closed and len(v) > 1 and np.array_equal(v[0], v[-1]):
                v = v[:-1]
        object.__setattr__(self, "vertices", _frozen(v))

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @property
    def length(self) -> float:
        a, b = self.segments()
        return float(np.linalg.norm(b - a, axis=1).sum())


def arc_sample(arc: SphericalArc, m: int) -> Polyline:
    """``m`` points at equal angular spacing along ``arc``.

    Open arcs include both endpoints exactly; a full circle returns a closed
    polyline starting at the frame vector.
    """
    if m < 2:
        raise GeometryError("arc_sample needs m >= 2")
    if arc.full_circle:
        s = 2 * np.pi * np.arange(m) / m
        return Polyline(arc.point(s), closed=True)
    s = np.linspace(0.0, arc.angle, m)
    s[-1] = arc.angle
    return Polyline(arc.point(s))


def _pair_area(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Half the norm of ``u ^ w`` row-wise, for any dimension."""
    if u.shape[-1] == 3:
        return 0.5 * np.linalg.norm(np.cross(u, w), axis=-1)
    uu = np.einsum("...i,...i->...", u, u)
    ww = np.einsum("...i,...i->...", w, w)
    uw = np.einsum("...i,...i->...", u, w)
    return 0.5 * np.sqrt(np.maximum(uu * ww - uw * uw, 0.0))


def cone_fan_area(apex, curve: Polyline) -> float:
    """Area of the triangle fan joining ``apex`` to consecutive curve vertices."""
    if len(curve.vertices) < 2:
        raise GeometryError("cone_fan_area needs at least two curve vertices")
    apex = np.asarray(apex, dtype=float)
    a, b = curve.segments()
    return float(_pair_area(a - apex, b - apex).sum())


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    return _pair_area(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def orthogonal_project(points, target_dim: int) -> np.ndarray:
    """Keep the first ``target_dim`` coordinates."""
    pts = np.asarray(points, dtype=float)
    if target_dim < 1 or target_dim > pts.shape[-1]:
        raise GeometryError(f"cannot project dimension {pts.shape[-1]} to {target_dim}")
    return pts[..., :target_dim].copy()


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Triangle surface in R^n.

    Triangles with area below ``MIN_TRIANGLE_AREA`` are dropped on construction
    and the count is logged.  Edges shared by three or more triangles (the spine
    of a Y or T) are allowed; orientation consistency is only required across
    manifold edges.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise GeometryError("triangle index out of range")
        if len(f):
            keep = triangle_areas(v, f) > MIN_TRIANGLE_AREA
            n_drop = int((~keep).sum())
            if n_drop:
                logger.info("dropped %d degenerate triangles", n_drop)
                f = f[keep]
            object.__setattr__(self, "dropped", self.dropped + n_drop)
        object.__setattr__(self, "vertices", _frozen(v))
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "triangles", f)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    @property
    def area(self) -> float:
        return mesh_area(self)

    @cached_property
    def _edge_table(self) -> tuple[np.ndarray, np.ndarray]:
        f = self.triangles
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = np.sort(e, axis=1)
        uniq, counts = np.unique(key, axis=0, return_counts=True)
        return uniq, counts

    @property
    def edges(self) -> np.ndarray:
        return self._edge_table[0]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        uniq, counts = self._edge_table
        return uniq[counts == 1]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def boundary_loops(self) -> list[list[int]]:
        """Boundary edges chained into vertex paths.

        Vertices of boundary degree two are traversed; paths stop at vertices
        where three or more boundary edges meet.  Closed cycles repeat no vertex.
        """
        adj: dict[int, list[int]] = {}
        for a, b in self.boundary_edges.tolist():
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        used: set[tuple[int, int]] = set()
        loops: list[list[int]] = []

        def walk(start: int, nxt: int) -> list[int]:
            path = [start]
            prev, cur = start, nxt
            used.add((min(prev, cur), max(prev, cur)))
            while True:
                path.append(cur)
                if cur == start or len(adj[cur]) != 2:
                    break
                cand = [x for x in adj[cur] if (min(cur, x), max(cur, x)) not in used]
                if not cand:
                    break
                prev, cur = cur, cand[0]
                used.add((min(prev, cur), max(prev, cur)))
            if path[-1] == start and len(path) > 1:
                path.pop()
            return path

        for v in sorted(adj):
            if len(adj[v]) != 2:
                for w in sorted(adj[v]):
                    if (min(v, w), max(v, w)) not in used:
                        loops.append(walk(v, w))
        for v in sorted(adj):
            for w in sorted(adj[v]):
                if (min(v, w), max(v, w)) not in used:
                    loops.append(walk(v, w))
        return loops

    def is_consistently_oriented(self) -> bool:
        f = self.triangles
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = np.sort(directed, axis=1)
        uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        manifold = counts[inv] == 2
        forward = directed[:, 0] < directed[:, 1]
        sums = np.zeros(len(uniq), dtype=int)
        np.add.at(sums, inv[manifold], np.where(forward[manifold], 1, -1))
        return bool(np.all(sums[counts == 2] == 0))

    def normals(self) -> np.ndarray:
        """Unit normals of the triangles (three-dimensional meshes only)."""
        if self.dim != 3:
            raise GeometryError("normals are defined for meshes in R^3")
        p = self.vertices[self.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def vector_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def with_vertices(self, vertices) -> "TriangleMesh":
        return TriangleMesh(vertices, self.triangles)

    def submesh(self, mask) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.triangles[np.asarray(mask)])


def mesh_area(mesh: TriangleMesh) -> float:
    return float(mesh.areas.sum())


def merge_close_vertices(vertices, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Identify vertices closer than ``tol``.

    Returns the kept vertices and the map from old to new indices; the lowest
    old index of each cluster supplies the coordinates.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    from scipy.spatial import cKDTree

    vertices = np.asarray(vertices, dtype=float)
    n = len(vertices)
    pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    rep = np.full(comp.max() + 1, n, dtype=np.int64)
    np.minimum.at(rep, comp, np.arange(n))
    used, new_index = np.unique(rep[comp], return_inverse=True)
    return vertices[used], new_index.ravel()


def icosphere(level: int) -> TriangleMesh:
    """Unit-sphere triangulation by repeated 4-way subdivision of an icosahedron."""
    t = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
                  [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
                  [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
                  [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    v = normalize(v)
    for _ in range(level):
        v, f = subdivide(v, f, project=normalize)
    return TriangleMesh(v, f)


def subdivide(vertices: np.ndarray, triangles: np.ndarray, project=None):
    """Split every triangle into four through edge midpoints."""
    f = np.asarray(triangles)
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (vertices[uniq[:, 0]] + vertices[uniq[:, 1]])
    if project is not None:
        mids = project(mids)
    n = len(vertices)
    m = inv.reshape(3, -1).T + n
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
    new_f = np.concatenate([np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
                            np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)])
    return np.vstack([vertices, mids]), new_f


def cylinder_mesh(radius: float, height: float, n_around: int = 64, n_up: int = 8) -> TriangleMesh:
    """Open lateral surface of the cylinder of given radius over ``0 <= z <= height``."""
    if n_around < 3 or n_up < 1:
        raise GeometryError("cylinder needs n_around >= 3 and n_up >= 1")
    phi = 2 * np.pi * np.arange(n_around) / n_around
    z = np.linspace(0, height, n_up + 1)
    V = np.array([[radius * np.cos(p), radius * np.sin(p), h] for h in z for p in phi])
    tris = []
    for k in range(n_up):
        for i in range(n_around):
            a, b = k * n_around + i, k * n_around + (i + 1) % n_around
            tris += [[a, b, b + n_around], [a, b + n_around, a + n_around]]
    return TriangleMesh(V, np.array(tris))
