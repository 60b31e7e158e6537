"""Triangulation of the boundary of U(K, eta) conforming to its pieces.

Above each face of the sphere minus the cone's trace the boundary splits into

* half-band strips along the face's arcs, parametrized by arc angle and
  transverse offset,
* plate sectors at the face's corners, in polar coordinates about the plate
  center,
* one spherical cap, triangulated by a polar grid from the face center.

All pieces share their seams exactly and the vertices on the trace sit at the
arc parameters of :func:`conestab.domain.sheet_grid`, so meshes of the cone
glue onto this mesh vertex for vertex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .domain import BoundaryRegion, ConvexDomain, DomainError, sheet_grid, sheet_knots
from .geom import TriangleMesh, merge_close_vertices, normalize

BASE_STEP = 0.3


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    mesh: TriangleMesh
    region_codes: np.ndarray    # per triangle, index into ``regions``
    regions: list[BoundaryRegion]
    face_labels: np.ndarray     # per triangle, index into ``spec.faces``
    trace_edges: np.ndarray     # sorted vertex pairs lying on the cone's trace
    level: int

    def region_area(self, code: int) -> float:
        return float(self.mesh.areas[self.region_codes == code].sum())

    def label_rows(self) -> list[tuple[int, str, int]]:
        return [(i, str(self.regions[c]), int(f)) for i, (c, f) in
                enumerate(zip(self.region_codes.tolist(), self.face_labels.tolist()))]


def _count(length: float, level: int) -> int:
    return max(1, int(np.ceil(length / BASE_STEP - 1e-9))) * 2 ** level


class _Builder:
    """Accumulates vertices, triangles, region codes and trace edges."""

    def __init__(self):
        self.verts: list[np.ndarray] = []
        self.tris: list[np.ndarray] = []
        self.codes: list[np.ndarray] = []
        self.trace: list[np.ndarray] = []
        self.n = 0

    def add_grid(self, pts: np.ndarray, code: int, trace_rows=(), trace_cols=()) -> np.ndarray:
        """Add a structured ``(I, J)`` grid of points as two triangles per cell."""
        I, J = pts.shape[:2]
        idx = self.n + np.arange(I * J).reshape(I, J)
        self.verts.append(pts.reshape(-1, pts.shape[-1]))
        self.n += I * J
        a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
        tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
        self.tris.append(tris)
        self.codes.append(np.full(len(tris), code))
        for r in trace_rows:
            self.trace.append(np.stack([idx[r, :-1], idx[r, 1:]], 1))
        for c_ in trace_cols:
            self.trace.append(np.stack([idx[:-1, c_], idx[1:, c_]], 1))
        return idx

    def add_polar(self, center: np.ndarray, rings: np.ndarray, code: int):
        """Center vertex plus closed rings ``rings[r, k]`` (outermost last)."""
        R, K = rings.shape[:2]
        base = self.n
        self.verts.append(center[None, :])
        self.verts.append(rings.reshape(-1, 3))
        self.n += 1 + R * K
        idx = base + 1 + np.arange(R * K).reshape(R, K)
        nxt = np.roll(np.arange(K), -1)
        tris = [np.stack([np.full(K, base), idx[0], idx[0, nxt]], 1)]
        for r in range(R - 1):
            a, b = idx[r], idx[r, nxt]
            c, d = idx[r + 1, nxt], idx[r + 1]
            tris += [np.stack([a, d, c], 1), np.stack([a, c, b], 1)]
        tris = np.concatenate(tris)
        self.tris.append(tris)
        self.codes.append(np.full(len(tris), code))


def _arc_normal(arc) -> np.ndarray:
    return np.cross(arc.start, arc.tangent)


def _corner_sector(dom: ConvexDomain, j: int, tau_in, tau_out, s_grid, w_grid, level: int):
    """Plate sector at singular direction ``j`` from the incoming to the outgoing arc.

    Returns the ``(rho, phi)`` grid of points and the rim points (circle part).
    ``s_grid`` are the arc parameters on the plate part of the incoming arc
    (from the singular direction outwards), ``w_grid`` the transverse offsets
    of the adjacent band strips.
    """
    a = dom.spec.singular_dirs[j]
    c = dom.plate_level * a
    dp, R = dom.rim_offset, dom.R
    perp = normalize(tau_out - (tau_out @ tau_in) * tau_in)
    opening = np.arctan2(tau_out @ perp, tau_out @ tau_in)
    phi1 = np.arctan2(w_grid[-1], dp)
    phi_chord = np.arctan2(w_grid, dp)
    n_circ = _count(R * (opening - 2 * phi1), level)
    phi_circ = np.linspace(phi1, opening - phi1, n_circ + 1)
    phi = np.concatenate([phi_chord[:-1], phi_circ, (opening - phi_chord[::-1])[1:]])
    d = np.cos(phi)[:, None] * tau_in + np.sin(phi)[:, None] * perp
    rho_max = np.minimum(np.minimum(dp / np.maximum(d @ tau_in, 1e-300), dp / np.maximum(d @ tau_out, 1e-300)), R)
    frac = np.tan(s_grid) / np.tan(s_grid[-1])
    pts = c + (frac[:, None, None] * rho_max[None, :, None]) * d[None, :, :]
    return pts, c + R * d[len(phi_chord) - 1:len(phi_chord) - 1 + len(phi_circ)]


def boundary_mesh(dom: ConvexDomain, resolution: int = 3) -> BoundaryMesh:
    """Watertight triangulation of the boundary with region and face labels.

    ``resolution`` halves the mesh spacing per unit increase.  Faces are
    recovered by flood fill across edges that are not on the cone's trace.
    """
    spec = dom.spec
    if spec.ambient_dim != 3 or not spec.faces:
        raise DomainError("boundary meshes are built for cones in R^3")
    if resolution < 0:
        raise DomainError("resolution must be >= 0")
    level = resolution
    m = spec.m
    sphere_code = len(dom.regions) - 1
    R1 = dom.R1
    w_grid = np.linspace(0.0, R1, _count(R1, level) + 1)
    b = _Builder()

    grids = [sheet_grid(dom, k, level) for k in range(len(spec.sheets))]
    # band part of each sheet: between the first and last breakpoints of open arcs
    band_s = []
    plate_s = []
    for k, arc in enumerate(spec.sheets):
        g = grids[k]
        if arc.full_circle:
            band_s.append(np.append(g, arc.angle))
            plate_s.append(None)
            continue
        knots = sheet_knots(dom, k)
        if len(knots) != 2:
            raise DomainError(f"expected plate/band/plate pieces along sheet {k}, found knots {knots}")
        lo = int(np.nonzero(g == knots[0])[0][0])
        hi = int(np.nonzero(g == knots[1])[0][0])
        band_s.append(g[lo:hi + 1])
        plate_s.append(g[:lo + 1])  # symmetric grids: the same values serve both ends
        if not np.allclose(g[hi:][::-1], arc.angle - g[:lo + 1], atol=1e-12):
            raise DomainError("arc grid is not symmetric about the arc midpoint")

    for face in spec.faces:
        center = np.asarray(face.center)
        rim: list[np.ndarray] = []
        loop = list(face.loop)
        for pos, (k, forward) in enumerate(loop):
            arc = spec.sheets[k]
            nu = _arc_normal(arc)
            side = 1.0 if center @ nu > 0 else -1.0
            s = band_s[k]
            y = arc.point(s)
            pts = dom.band_level * y[:, None, :] + (side * w_grid)[None, :, None] * nu
            code = m + k
            b.add_grid(pts, code, trace_cols=[0])
            edge = pts[:, -1]
            edge = edge[:-1] if arc.full_circle else edge
            rim.append(edge if forward else edge[::-1])
            if arc.full_circle:
                continue
            # corner at the end of this arc in traversal order
            k2, fwd2 = loop[(pos + 1) % len(loop)]
            arc2 = spec.sheets[k2]
            j = spec.arc_ends[k][1] if forward else spec.arc_ends[k][0]
            tau_in = arc.end_tangent() if forward else arc.start_tangent()
            tau_out = arc2.start_tangent() if fwd2 else arc2.end_tangent()
            sector, circ = _corner_sector(dom, j, tau_in, tau_out, plate_s[k], w_grid, level)
            # the sector edges on the trace: replace with the exact trace points
            trace_in = _plate_trace(dom, arc, plate_s[k], at_end=forward)
            trace_out = _plate_trace(dom, arc2, plate_s[k2], at_end=not fwd2)
            sector[:, 0] = trace_in
            sector[:, -1] = trace_out
            b.add_grid(sector, j, trace_cols=[0, sector.shape[1] - 1])
            rim.append(circ[1:-1])
        loop_pts = np.vstack(rim)
        ang = np.arccos(np.clip(normalize(loop_pts) @ center, -1, 1)).max()
        n_rings = _count(ang, level)
        f = np.arange(1, n_rings + 1) / n_rings
        rings = normalize((1 - f)[:, None, None] * center + f[:, None, None] * loop_pts[None])
        rings[-1] = loop_pts
        b.add_polar(center, rings, sphere_code)

    verts = np.vstack(b.verts)
    tris = np.vstack(b.tris)
    codes = np.concatenate(b.codes)
    trace = np.vstack(b.trace)
    verts, remap = merge_close_vertices(verts, tol=1e-9)
    tris = remap[tris]
    trace = np.unique(np.sort(remap[trace], axis=1), axis=0)
    trace = trace[trace[:, 0] != trace[:, 1]]
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    tris, codes = tris[keep], codes[keep]

    p = verts[tris]
    normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", normal, p.mean(axis=1)) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    areas = 0.5 * np.linalg.norm(normal, axis=1)
    if np.any(areas <= 1e-14):
        raise DomainError(f"resolution {resolution} produced degenerate triangles")
    mesh = TriangleMesh(verts, tris)
    for code, region in enumerate(dom.regions):
        if region.kind != "sphere" and not np.any(codes == code):
            raise DomainError(f"resolution {resolution} is too coarse to resolve region {region}")
    face_labels = _flood_fill_faces(mesh, trace, spec)
    return BoundaryMesh(mesh, codes, dom.regions, face_labels, trace, resolution)


def _plate_trace(dom: ConvexDomain, arc, s_plate: np.ndarray, at_end: bool) -> np.ndarray:
    """Trace points of a sheet on the plate at one end, ordered from the plate center."""
    s = arc.angle - s_plate if at_end else s_plate
    if at_end:
        s = s.copy()
        s[0] = arc.angle
    u = arc.point(s)
    return u / dom.gauge(u)[:, None]


def _flood_fill_faces(mesh: TriangleMesh, trace: np.ndarray, spec) -> np.ndarray:
    f = mesh.triangles
    e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    tri_of = np.tile(np.arange(len(f)), 3)
    uniq, inv, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts != 2):
        raise DomainError("boundary mesh is not watertight")
    trace_set = {tuple(x) for x in trace.tolist()}
    blocked = np.array([tuple(x) in trace_set for x in uniq.tolist()])
    order = np.argsort(inv, kind="stable")
    pairs = tri_of[order].reshape(-1, 2)
    pairs = pairs[~blocked]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(f), len(f)))
    n_comp, comp = connected_components(graph, directed=False)
    if n_comp != len(spec.faces):
        raise DomainError(f"flood fill found {n_comp} components, expected {len(spec.faces)}")
    cent = normalize(mesh.vertices[f].mean(axis=1))
    labels = np.empty(len(f), dtype=int)
    for i, face in enumerate(spec.faces):
        nearest = int(np.argmax(cent @ np.asarray(face.center)))
        labels[comp == comp[nearest]] = i
    if len(np.unique(labels)) != len(spec.faces):
        raise DomainError("face centers do not identify distinct components")
    return labels
