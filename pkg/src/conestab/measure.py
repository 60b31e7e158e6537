"""Areas of translated cones clipped to the domain, slices and the coarea integral.

A sheet of the translated cone is ``o + r u(s)`` with ``o`` the translation
vector and ``u`` the unit-speed arc; its area element is ``r dr ds``.  As the
domain is convex and contains ``o``, the clipped sheet is
``{0 <= r <= r_max(s)}`` and its area is the integral of ``r_max(s)**2 / 2``.
``r_max`` is the exit distance of a ray and is computed in closed form for
every constraint; the integral is split where the binding constraint changes,
so Gauss-Legendre quadrature on each piece integrates a smooth function.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .cones import ConeSpec, Translation
from .domain import ConvexDomain, find_switches
from .geom import Polyline, SphericalArc, TriangleMesh, merge_close_vertices

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 20
MAX_CELL = 0.25
SWITCH_SAMPLES = 1025
SLICE_GLUE_TOL = 1e-7


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class ClippedConeMeasure:
    value: float
    per_piece: dict[int, float]
    quadrature_cells: int
    error_estimate: float
    budget: int = DEFAULT_BUDGET

    def to_dict(self) -> dict:
        return {"value": self.value, "error_estimate": self.error_estimate, "budget": self.budget,
                "quadrature_cells": self.quadrature_cells,
                "pieces": {str(k): v for k, v in self.per_piece.items()}}


# -- ray exit distances -----------------------------------------------------------

def _arc_exit(arc: SphericalArc, level: float, origin: np.ndarray, U: np.ndarray):
    """Smallest ``r >= 0`` with ``sup_arc <origin + r u, y> = level`` per row ``u`` of ``U``.

    Returns distances (``inf`` if never reached) and the piece of the support
    function active there: 0 interior maximizer, 1 start point, 2 end point.
    """
    P = np.array([origin @ arc.start, origin @ arc.tangent])
    Va, Vb = U @ arc.start, U @ arc.tangent
    cands, kinds = [], []
    # interior maximizer: |P + r V| = level
    vv = Va * Va + Vb * Vb
    pv = P[0] * Va + P[1] * Vb
    c = P @ P - level * level
    disc = np.maximum(pv * pv - vv * c, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_int = np.where(vv > 0, (-pv + np.sqrt(disc)) / vv, np.inf)
    cands.append(r_int)
    kinds.append(0)
    if not arc.full_circle:
        for kind, y in ((1, arc.start), (2, arc.end)):
            uy = U @ y
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(uy > 0, (level - origin @ y) / uy, np.inf)
            cands.append(r)
            kinds.append(kind)
    cands = np.stack(cands, axis=1)
    finite = np.isfinite(cands) & (cands >= 0)
    X = origin + np.where(finite, cands, 0.0)[..., None] * U[:, None, :]
    h = arc.support(X.reshape(-1, X.shape[-1]))[0].reshape(cands.shape)
    ok = finite & (h >= level * (1 - 1e-12))
    masked = np.where(ok, cands, np.inf)
    best = masked.argmin(axis=1)
    r = masked[np.arange(len(U)), best]
    return r, np.asarray(kinds)[best]


def ray_exit(dom: ConvexDomain, origin, U) -> tuple[np.ndarray, np.ndarray]:
    """Exit distance from ``origin`` along unit directions ``U`` and the binding constraint.

    The label is ``0`` for the sphere, ``1 + j`` for plate ``j`` and
    ``1 + m + 3 k + piece`` for sheet ``k`` (see :func:`_arc_exit`).
    """
    o = np.asarray(origin, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    b = U @ o
    cols = [-b + np.sqrt(b * b - (o @ o - 1.0))]
    labels = [np.zeros(len(U), dtype=int)]
    spec = dom.spec
    for j, a in enumerate(spec.singular_dirs):
        ua = U @ a
        with np.errstate(divide="ignore", invalid="ignore"):
            cols.append(np.where(ua > 0, (dom.plate_level - o @ a) / ua, np.inf))
        labels.append(np.full(len(U), 1 + j))
    for k, arc in enumerate(spec.sheets):
        r, kind = _arc_exit(arc, dom.band_level, o, U)
        cols.append(r)
        labels.append(1 + spec.m + 3 * k + kind)
    R = np.stack(cols, axis=1)
    L = np.stack(labels, axis=1)
    best = R.argmin(axis=1)
    idx = np.arange(len(U))
    return R[idx, best], L[idx, best]


def _check_translation(dom: ConvexDomain, tr: Translation | None) -> np.ndarray:
    o = np.zeros(dom.n) if tr is None else np.asarray(tr.vector, dtype=float)
    if o.shape != (dom.n,):
        raise MeasureError("translation has the wrong dimension")
    if tr is not None and tr.magnitude >= dom.eta:
        raise MeasureError(f"translation {tr.magnitude} must be smaller than eta={dom.eta}")
    if dom.gauge(o)[0] >= 1:
        raise MeasureError("the translated apex lies outside the domain")
    return o


def sheet_knots_translated(dom: ConvexDomain, arc: SphericalArc, origin, samples: int = SWITCH_SAMPLES):
    """Arc parameters where the binding constraint of the translated sheet changes."""
    label = lambda s: ray_exit(dom, origin, arc.point(s))[1]  # noqa: E731
    return [0.0, *find_switches(label, 0.0, arc.angle, samples), arc.angle]


# -- clipped cone area --------------------------------------------------------------

def _gauss_piece(f, a: float, b: float, nodes: int) -> tuple[float, float, int]:
    """Composite Gauss-Legendre on ``[a, b]`` with ``nodes`` and ``nodes // 2`` points per cell."""
    cells = max(1, int(np.ceil((b - a) / MAX_CELL)))
    edges = np.linspace(a, b, cells + 1)
    out = []
    for n in (nodes, max(nodes // 2, 1)):
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        ws = (half[:, None] * w[None, :]).ravel()
        out.append(float(np.dot(ws, f(s))))
    return out[0], abs(out[0] - out[1]), cells


def clipped_cone_area(dom: ConvexDomain, spec: ConeSpec | None = None, tr: Translation | None = None,
                      budget: int = DEFAULT_BUDGET) -> ClippedConeMeasure:
    """Area of ``(K + t q) ∩ U`` for the cone ``spec`` (default: the domain's own cone).

    ``budget`` is the number of Gauss-Legendre nodes per quadrature cell.
    """
    spec = dom.spec if spec is None else spec
    if budget < 2:
        raise MeasureError("budget must be >= 2")
    o = _check_translation(dom, tr)
    per_piece, err, ncells = {}, 0.0, 0
    for k, arc in enumerate(spec.sheets):
        def half_r2(s, arc=arc):
            r = ray_exit(dom, o, arc.point(s))[0]
            return 0.5 * r * r

        knots = sheet_knots_translated(dom, arc, o)
        total = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            if b - a <= 0:
                continue
            val, e, c = _gauss_piece(half_r2, a, b, budget)
            total += val
            err += e
            ncells += c
        per_piece[k] = total
    value = float(sum(per_piece.values()))
    return ClippedConeMeasure(value, per_piece, ncells, err + 1e-15 * value, budget)


def mc_cone_area_oracle(dom: ConvexDomain, spec: ConeSpec | None = None, tr: Translation | None = None,
                        samples: int = 10 ** 6, seed: int = 0) -> tuple[float, float]:
    """Stratified Monte Carlo estimate of the clipped cone area and its standard error.

    Each sheet's ``(s, r)`` rectangle ``[0, angle] x [0, 1 + |o|]`` is cut into
    strata holding two samples each; the integrand is ``r`` times the domain
    indicator, evaluated through the gauge only.
    """
    spec = dom.spec if spec is None else spec
    if samples < 10 ** 4:
        raise MeasureError("the Monte Carlo oracle needs at least 1e4 samples")
    o = _check_translation(dom, tr)
    rng = np.random.default_rng(seed)
    rmax = 1.0 + np.linalg.norm(o)
    per_sheet = samples // len(spec.sheets)
    mean, var = 0.0, 0.0
    for arc in spec.sheets:
        strata = per_sheet // 2
        ns = max(1, int(round(np.sqrt(strata * arc.angle / rmax))))
        nr = max(1, strata // ns)
        vol = (arc.angle / ns) * (rmax / nr)
        i, j = np.meshgrid(np.arange(ns), np.arange(nr), indexing="ij")
        i, j = i.ravel(), j.ravel()
        vals = []
        for _ in range(2):
            s = (i + rng.random(i.size)) * arc.angle / ns
            r = (j + rng.random(j.size)) * rmax / nr
            X = o + r[:, None] * arc.point(s)
            vals.append(r * (dom.gauge(X) <= 1.0))
        vals = np.stack(vals)
        mean += vol * vals.mean(axis=0).sum()
        var += (vol ** 2 * vals.var(axis=0, ddof=1) / 2).sum()
    return float(mean), float(np.sqrt(var))


def boundary_trace(dom: ConvexDomain, arc: SphericalArc, origin, points_per_piece: int = 2000) -> np.ndarray:
    """Dense samples of the curve where a translated sheet meets the boundary.

    Breakpoints of the binding constraint are always included.
    """
    o = np.asarray(origin, dtype=float)
    knots = sheet_knots_translated(dom, arc, o)
    s = np.unique(np.concatenate([np.linspace(a, b, points_per_piece + 1)
                                  for a, b in zip(knots[:-1], knots[1:]) if b > a]))
    U = arc.point(s)
    return o + ray_exit(dom, o, U)[0][:, None] * U


# -- slices -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SliceProfile:
    height: float
    curve_pieces: list[Polyline]
    gates: np.ndarray
    length: float
    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 3)))
    degenerate: bool = False


def _check_axis(axis) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1) > 1e-12:
        raise MeasureError("slicing axis must be a unit vector")
    return axis


def _chain(points: np.ndarray, edges: np.ndarray) -> list[Polyline]:
    """Split a segment graph into polylines that end at vertices of degree != 2."""
    if not len(edges):
        return []
    n = len(points)
    adj = [[] for _ in range(n)]
    for e, (a, b) in enumerate(edges.tolist()):
        adj[a].append((b, e))
        adj[b].append((a, e))
    used = np.zeros(len(edges), dtype=bool)
    out = []

    def walk(v, e):
        path = [v]
        while not used[e]:
            used[e] = True
            a, b = edges[e]
            v = b if a == v else a
            path.append(v)
            nxt = [f for (_, f) in adj[v] if not used[f]]
            if len(adj[v]) != 2 or not nxt:
                break
            e = nxt[0]
        return path

    for v in range(n):
        if len(adj[v]) != 2:
            for _, e in adj[v]:
                if not used[e]:
                    out.append(Polyline(points[walk(v, e)]))
    for e in range(len(edges)):
        if not used[e]:
            path = walk(int(edges[e][0]), e)
            out.append(Polyline(points[path[:-1]], closed=True))
    return out


def slice_mesh(mesh: TriangleMesh, axis, height: float) -> SliceProfile:
    """Exact intersection of a triangle mesh with the plane ``<x, axis> = height``.

    Vertices on the plane count as lying above it.  Gates are the crossings of
    mesh boundary edges.
    """
    axis = _check_axis(axis)
    V, T = mesh.vertices, mesh.triangles
    h = V @ axis - height
    flat = np.all(np.abs(h[T]) <= 1e-12, axis=1)
    above = h >= 0
    edges = mesh.edges
    cross = above[edges[:, 0]] != above[edges[:, 1]]
    ce = edges[cross]
    lam = h[ce[:, 0]] / (h[ce[:, 0]] - h[ce[:, 1]])
    pts = V[ce[:, 0]] + lam[:, None] * (V[ce[:, 1]] - V[ce[:, 0]])
    # map each crossing edge to its point index
    key = {tuple(e): i for i, e in enumerate(ce.tolist())}
    segs = []
    for tri in T[(above[T].sum(axis=1) % 3) != 0].tolist():
        ids = []
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            i = key.get((min(a, b), max(a, b)))
            if i is not None:
                ids.append(i)
        if len(ids) == 2:
            segs.append(ids)
    segs = np.array(segs, dtype=np.int64).reshape(-1, 2)
    bset = {tuple(e) for e in mesh.boundary_edges.tolist()}
    gate_idx = [i for i, e in enumerate(ce.tolist()) if tuple(e) in bset]
    seg_pts = pts[segs] if len(segs) else np.zeros((0, 2, V.shape[1]))
    length = float(np.linalg.norm(seg_pts[:, 1] - seg_pts[:, 0], axis=1).sum()) if len(segs) else 0.0
    return SliceProfile(float(height), _chain(pts, segs), pts[gate_idx], length, seg_pts, bool(flat.any()))


def _sheet_line(dom: ConvexDomain, arc: SphericalArc, origin, axis, height):
    """Segment of the translated sheet inside the domain on the slicing plane, or None."""
    e, w = arc.start, arc.tangent
    ne, nw = e @ axis, w @ axis
    rhs = height - origin @ axis
    nn = ne * ne + nw * nw
    if nn < 1e-24:
        return None
    p0 = origin + (rhs / nn) * (ne * e + nw * w)
    d = (-nw * e + ne * w) / np.sqrt(nn)
    # plane coordinates of p0 and d in the (e, w) frame
    a0, b0 = (p0 - origin) @ e, (p0 - origin) @ w
    da, db = d @ e, d @ w
    lo, hi = -np.inf, np.inf
    # stay in the unit ball
    pd, pp = p0 @ d, p0 @ p0
    disc = pd * pd - (pp - 1)
    if disc <= 0:
        return None
    lo, hi = -pd - np.sqrt(disc), -pd + np.sqrt(disc)
    if not arc.full_circle:
        for ca, cb in ((0.0, 1.0), (np.sin(arc.angle), -np.cos(arc.angle))):
            g0, g1 = ca * a0 + cb * b0, ca * da + cb * db
            if abs(g1) < 1e-15:
                if g0 < -1e-13:
                    return None
                continue
            root = -g0 / g1
            if g1 > 0:
                lo = max(lo, root)
            else:
                hi = min(hi, root)
    if hi <= lo:
        return None
    gauge = lambda lam: float(dom.gauge(p0 + lam * d)[0]) - 1.0  # noqa: E731
    res = minimize_scalar(gauge, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    inner = float(res.x)
    if gauge(inner) > 0:
        return None
    ends, gates = [], []
    for edge in (lo, hi):
        if gauge(edge) <= 0:
            ends.append(edge)
        else:
            root = brentq(gauge, min(inner, edge), max(inner, edge), xtol=1e-15, rtol=4 * np.finfo(float).eps)
            ends.append(root)
            gates.append(p0 + root * d)
    return p0 + ends[0] * d, p0 + ends[1] * d, gates


def slice_cone(dom: ConvexDomain, axis, height: float, tr: Translation | None = None,
               spec: ConeSpec | None = None) -> SliceProfile:
    """Slice of the translated cone clipped to the domain, sheet by sheet in closed form."""
    axis = _check_axis(axis)
    spec = dom.spec if spec is None else spec
    o = np.zeros(dom.n) if tr is None else tr.vector
    pieces, gates, segs = [], [], []
    degenerate = False
    for arc in spec.sheets:
        nn = (arc.start @ axis) ** 2 + (arc.tangent @ axis) ** 2
        if nn < 1e-24:
            degenerate |= abs(height - o @ axis) < 1e-12
            continue
        found = _sheet_line(dom, arc, o, axis, height)
        if found is None:
            continue
        p, q, g = found
        pieces.append(Polyline(np.stack([p, q])))
        segs.append([p, q])
        gates.extend(g)
    segs = np.array(segs).reshape(-1, 2, dom.n)
    length = float(np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1).sum())
    return SliceProfile(float(height), pieces, np.array(gates).reshape(-1, dom.n), length, segs, degenerate)


def slice_profile(target, axis, height: float, dom: ConvexDomain | None = None,
                  tr: Translation | None = None) -> SliceProfile:
    """Slice a mesh, or the cone of ``dom`` when ``target`` is a :class:`ConvexDomain`."""
    if isinstance(target, TriangleMesh):
        return slice_mesh(target, axis, height)
    if isinstance(target, ConvexDomain):
        return slice_cone(target, axis, height, tr)
    raise MeasureError(f"cannot slice a {type(target).__name__}")


# -- coarea integral -----------------------------------------------------------------

@dataclass(frozen=True)
class CoareaBound:
    value: float
    extrapolated: float
    error_estimate: float
    area: float
    n_slices: int

    @property
    def epsilon_quad(self) -> float:
        return self.error_estimate / self.area if self.area > 0 else 0.0

    @property
    def holds(self) -> bool:
        return self.value <= self.area * (1 + self.epsilon_quad) + 1e-15


def _midpoint_integral(mesh: TriangleMesh, axis, lo: float, hi: float, n: int) -> float:
    dt = (hi - lo) / n
    heights = lo + (np.arange(n) + 0.5) * dt
    return dt * sum(slice_mesh(mesh, axis, t).length for t in heights)


def coarea_lower_bound(mesh: TriangleMesh, axis, t_range=None, n_slices: int = 200) -> CoareaBound:
    """Integral over heights of the slice lengths of ``mesh``.

    Slices are taken at the midpoints of ``n_slices`` equal cells; the same sum
    on half as many cells gives a Richardson error estimate.
    """
    axis = _check_axis(axis)
    if n_slices < 2:
        raise MeasureError("n_slices must be >= 2")
    n_slices += n_slices % 2
    if t_range is None:
        h = mesh.vertices @ axis
        t_range = (float(h.min()), float(h.max()))
    lo, hi = map(float, t_range)
    fine = _midpoint_integral(mesh, axis, lo, hi, n_slices)
    coarse = _midpoint_integral(mesh, axis, lo, hi, n_slices // 2)
    return CoareaBound(fine, (4 * fine - coarse) / 3, abs(fine - coarse) / 3, mesh.area, n_slices)


# -- slice graph connectivity ---------------------------------------------------------

def segment_components(segments: np.ndarray, extra_points: np.ndarray, tol: float = SLICE_GLUE_TOL):
    """Component labels of segment endpoints and extra points, gluing points within ``tol``.

    Returns labels for the extra points.  Clusters are represented by their
    lowest index, so labels are deterministic.
    """
    segments = np.asarray(segments, dtype=float)
    extra = np.atleast_2d(np.asarray(extra_points, dtype=float))
    if not len(segments):
        return np.arange(len(extra))
    pts = np.concatenate([segments.reshape(-1, segments.shape[-1]), extra])
    _, remap = merge_close_vertices(pts, tol)
    ns = len(segments)
    rows = remap[0:2 * ns:2]
    cols = remap[1:2 * ns:2]
    n = int(remap.max()) + 1
    graph = coo_matrix((np.ones(ns), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels[remap[2 * ns:]]


__all__ = [
    "ClippedConeMeasure", "CoareaBound", "MeasureError", "SliceProfile", "boundary_trace",
    "clipped_cone_area", "coarea_lower_bound", "mc_cone_area_oracle", "ray_exit", "segment_components",
    "slice_cone", "slice_mesh", "slice_profile",
]
