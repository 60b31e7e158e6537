"""Numerical checks of the stability properties of the minimal cones.

* translation scans of the clipped cone area and the quadratic remainder of
  re-centred cones,
* distance sums to the sides of an equilateral triangle and the Fermat-point
  lower bound for connected slices,
* projection constants of bands and plates,
* the paired-calibration identity and inequality for the tetrahedral cone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryMesh, boundary_mesh
from .cones import ConeSpec, Translation
from .domain import ConvexDomain
from .geom import Polyline, TriangleMesh, cone_fan_area, normalize
from .measure import (DEFAULT_BUDGET, SLICE_GLUE_TOL, SliceProfile, boundary_trace, clipped_cone_area,
                      segment_components)

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)
T_EDGE = 2 * np.sqrt(2) / SQRT3  # distance between two vertices of the inscribed tetrahedron
T_PROJECTION_FACTOR = SQRT3 / (2 * np.sqrt(2))


class CheckError(ValueError):
    pass


# -- translation scans ---------------------------------------------------------------

@dataclass(frozen=True)
class TranslationScan:
    direction: np.ndarray
    samples: list[tuple[float, float, float]]  # (t, area, error)
    center_offsets: np.ndarray
    fitted_quadratic: tuple[float, float, float]
    tol_rel: float
    tol_slope: float

    @property
    def areas(self) -> np.ndarray:
        return np.array([a for _, a, _ in self.samples])

    @property
    def reference(self) -> float:
        ts = np.array([t for t, _, _ in self.samples])
        return float(self.areas[np.argmin(np.abs(ts))])

    @property
    def max_relative_variation(self) -> float:
        return float(np.max(np.abs(self.areas - self.reference)) / self.reference)

    @property
    def passed(self) -> bool:
        return self.max_relative_variation <= self.tol_rel and abs(self.fitted_quadratic[1]) <= self.tol_slope


def measure_stability_scan(dom: ConvexDomain, q, t_grid, budget: int = DEFAULT_BUDGET,
                           tol_rel: float = 1e-4, tol_slope: float | None = None,
                           spec: ConeSpec | None = None) -> TranslationScan:
    """Clipped cone area along ``t -> K + t q`` for every ``t`` in ``t_grid``.

    The tolerance is raised to three times the largest quadrature error
    estimate when that is larger.  ``tol_slope`` defaults to ``tol_rel`` times
    the reference area divided by the largest ``|t|``.
    """
    q = normalize(np.asarray(q, dtype=float))
    ts = np.sort(np.asarray(t_grid, dtype=float))
    if np.any(np.abs(ts) >= dom.eta):
        raise CheckError(f"all translations must satisfy |t| < eta={dom.eta}")
    samples = []
    for t in ts:
        m = clipped_cone_area(dom, spec, Translation.signed(q, float(t)), budget)
        samples.append((float(t), m.value, m.error_estimate))
    areas = np.array([s[1] for s in samples])
    coef = np.polynomial.polynomial.polyfit(ts, areas, 2) if len(ts) >= 3 else np.array([areas.mean(), 0, 0])
    ref = areas[np.argmin(np.abs(ts))]
    tol = max(tol_rel, 3 * max(s[2] for s in samples) / ref)
    span = float(np.max(np.abs(ts))) or 1.0
    slope_tol = tol * ref / span if tol_slope is None else tol_slope
    return TranslationScan(q, samples, ts[:, None] * q, tuple(float(c) for c in coef), tol, slope_tol)


@dataclass(frozen=True)
class RemainderStudy:
    s_values: np.ndarray
    gaps: np.ndarray
    region_gaps: list[dict[str, float]]
    slope: float
    plate_bound_coefficient: float

    @property
    def plate_gaps(self) -> np.ndarray:
        return np.array([sum(v for k, v in g.items() if k.startswith("plate")) for g in self.region_gaps])

    @property
    def plate_bound_holds(self) -> bool:
        return bool(np.all(np.abs(self.plate_gaps) <= self.plate_bound_coefficient * self.s_values ** 2))

    @property
    def passed(self) -> bool:
        return self.slope >= 1.9


def _fan_by_region(dom: ConvexDomain, apex: np.ndarray, traces: list[np.ndarray]) -> dict[str, float]:
    names = [str(r) for r in dom.regions]
    out: dict[str, float] = {}
    for X in traces:
        codes = dom.classify_directions(0.5 * (X[:-1] + X[1:]))
        for c in np.unique(codes):
            sel = np.nonzero(codes == c)[0]
            area = sum(cone_fan_area(apex, Polyline(X[run[0]:run[-1] + 2]))
                       for run in np.split(sel, np.nonzero(np.diff(sel) > 1)[0] + 1))
            key = names[c] if c >= 0 else "unclassified"
            out[key] = out.get(key, 0.0) + area
    return out


def recentered_cone_gap(dom: ConvexDomain, q, t0: float, s_list, points_per_piece: int = 4000) -> RemainderStudy:
    """Area difference between the cone over the trace at ``t0`` and the translated cone at ``t0 + s``.

    Both cones have their apex at ``(t0 + s) q``; the first is spanned over the
    boundary trace of ``K + t0 q``, the second is ``K + (t0 + s) q`` itself.
    Areas are triangle fans over dense samples of the traces.
    """
    s_vals = np.asarray(s_list, dtype=float)
    if len(s_vals) < 3:
        raise CheckError("need at least three values of s")
    if abs(t0) + np.max(np.abs(s_vals)) >= dom.eta:
        raise CheckError("|t0| + max s must stay below eta")
    q = normalize(np.asarray(q, dtype=float))
    sheets = dom.spec.sheets
    base = [boundary_trace(dom, arc, t0 * q, points_per_piece) for arc in sheets]
    gaps, regions = [], []
    for s in s_vals:
        apex = (t0 + s) * q
        moved = [boundary_trace(dom, arc, apex, points_per_piece) for arc in sheets]
        a0 = _fan_by_region(dom, apex, base)
        a1 = _fan_by_region(dom, apex, moved)
        regions.append({k: a0.get(k, 0.0) - a1.get(k, 0.0) for k in sorted(set(a0) | set(a1))})
        gaps.append(abs(sum(a0.values()) - sum(a1.values())))
    gaps = np.array(gaps)
    positive = (s_vals > 0) & (gaps > 0)
    slope = float(np.polyfit(np.log(s_vals[positive]), np.log(gaps[positive]), 1)[0]) if positive.sum() >= 2 \
        else float("nan")
    # total length of the cone's trace on one plate
    plate_len = 3 * dom.rim_offset if dom.spec.m else 0.0
    return RemainderStudy(s_vals, gaps, regions, slope, dom.spec.m * plate_len / 2)


# -- equilateral triangles, Fermat points -----------------------------------------------

def _equilateral_lines(triangle) -> tuple[np.ndarray, np.ndarray]:
    """Inward unit normals and offsets ``<x, n> >= c`` of the sides of a planar triangle."""
    T = np.asarray(triangle, dtype=float)
    if T.shape != (3, 2):
        raise CheckError("triangle must be three points in the plane")
    sides = np.linalg.norm(T - np.roll(T, -1, axis=0), axis=1)
    if np.ptp(sides) > 1e-9 * sides.max():
        raise CheckError("triangle is not equilateral")
    normals, offsets = [], []
    for i in range(3):
        a, b, c = T[i], T[(i + 1) % 3], T[(i + 2) % 3]
        d = b - a
        n = np.array([-d[1], d[0]]) / np.linalg.norm(d)
        if (c - a) @ n < 0:
            n = -n
        normals.append(n)
        offsets.append(n @ a)
    return np.array(normals), np.array(offsets)


def viviani_sum(triangle, p) -> float:
    """Sum of the distances from ``p`` to the three side lines of an equilateral triangle."""
    normals, offsets = _equilateral_lines(triangle)
    d = normals @ np.asarray(p, dtype=float) - offsets
    if np.any(d < -1e-12):
        raise CheckError("point lies outside the triangle")
    return float(d.sum())


def fermat_point(points) -> np.ndarray:
    """Point minimizing the total distance to three points.

    Uses the closed form: a vertex whose angle is at least 120 degrees, and
    otherwise the barycentric combination with weights ``a / sin(A + pi/3)``.
    """
    P = np.asarray(points, dtype=float)
    if P.shape[0] != 3:
        raise CheckError("need exactly three points")
    angles = []
    for i in range(3):
        u, w = P[(i + 1) % 3] - P[i], P[(i + 2) % 3] - P[i]
        nu, nw = np.linalg.norm(u), np.linalg.norm(w)
        if nu == 0 or nw == 0:
            return P[i].copy()
        angles.append(np.arccos(np.clip(u @ w / (nu * nw), -1, 1)))
    angles = np.array(angles)
    if angles.max() >= 2 * np.pi / 3:
        return P[int(angles.argmax())].copy()
    sides = np.array([np.linalg.norm(P[(i + 1) % 3] - P[(i + 2) % 3]) for i in range(3)])
    wts = sides / np.sin(angles + np.pi / 3)
    return wts @ P / wts.sum()


@dataclass(frozen=True)
class RimLine:
    """The line ``<x, normal> = offset`` in a slicing plane; ``normal`` points away from the inside."""

    normal: np.ndarray
    offset: float

    def distance(self, x) -> float:
        return float(self.offset - np.asarray(x) @ self.normal)


def fermat_lower_bound(gates, lines: list[RimLine], tol: float = 1e-8) -> float:
    """Lower bound for the length of a connected set meeting the three rim lines.

    The three lines bound an equilateral triangle, so the distance sum to them
    is the same from every interior point, in particular from the Fermat point
    of the gates.  With the outward normals summing to zero it equals the sum
    of the offsets.
    """
    G = np.asarray(gates, dtype=float)
    if G.shape[0] != 3 or len(lines) != 3:
        raise CheckError("need three gates and three lines")
    N = np.array([ln.normal for ln in lines])
    if np.linalg.norm(N.sum(axis=0)) > 1e-9 or np.any(np.abs(np.linalg.norm(N, axis=1) - 1) > 1e-12):
        raise CheckError("rim lines do not bound an equilateral triangle")
    for g, ln in zip(G, lines):
        if abs(ln.distance(g)) > tol:
            raise CheckError("each gate must lie on its rim line")
    pair = np.linalg.norm(G[:, None] - G[None], axis=-1)
    if np.min(pair[np.triu_indices(3, 1)]) <= tol:
        raise CheckError("gates are not separated")
    c = fermat_point(G)
    return float(sum(ln.distance(c) for ln in lines))


def y_rim_lines(dom: ConvexDomain, height: float, frame=None) -> list[RimLine]:
    """Rim lines of the horizontal slice of the Y domain at ``height`` in plane coordinates."""
    if dom.spec.kind != "y":
        raise CheckError("rim lines are defined for the Y cone")
    off = np.sqrt(dom.band_level ** 2 - height ** 2)
    return [RimLine(normalize(arc.midpoint[:2]), float(off)) for arc in dom.spec.arcs]


def slice_connectivity(profile: SliceProfile, gates, tol: float = SLICE_GLUE_TOL) -> bool:
    """Whether the slice segments join all gates into one component."""
    G = np.atleast_2d(np.asarray(gates, dtype=float))
    if not len(profile.segments):
        return False
    labels = segment_components(profile.segments, G, tol)
    return bool(np.all(labels == labels[0]))


# -- projection constants ----------------------------------------------------------------

def _projection_jacobian(frame: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """``|det|`` of the projection of the tangent frames (..., 2, n) onto the plane with ``basis`` (2, n)."""
    M = np.einsum("...in,jn->...ij", frame, basis)
    return np.abs(M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0])


@dataclass(frozen=True)
class BandSpec:
    """Band over a unit-circle arc of angle ``theta`` with half-width ``R1``, and two tilted planes."""

    theta: float
    alpha: float
    R1: float
    e1: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    e2: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    v: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if not 0 < self.theta < np.pi + 1e-12:
            raise CheckError("arc angle must lie in (0, pi]")
        if not 0 <= self.alpha <= np.pi / 2:
            raise CheckError("tilt must lie in [0, pi/2]")
        F = np.array([self.e1, self.e2, self.v])
        if np.abs(F @ F.T - np.eye(3)).max() > 1e-12:
            raise CheckError("band frame must be orthonormal")

    @classmethod
    def from_eta(cls, theta: float, alpha: float, eta: float) -> "BandSpec":
        return cls(theta, alpha, float(np.sqrt(1 - (1 - eta) ** 2)))

    def plane(self, sign: int) -> np.ndarray:
        """Orthonormal basis of the projection plane ``Q+`` (``sign=1``) or ``Q-``."""
        return np.array([self.e2, np.cos(self.alpha) * self.e1 + sign * np.sin(self.alpha) * self.v])

    @property
    def area(self) -> float:
        return 2 * self.R1 * self.theta

    @property
    def constant(self) -> float:
        return 2 * np.sin(self.alpha) * np.sin(self.theta / 2) / self.theta


def band_constant_check(band: BandSpec, partition, gauss_nodes: int = 8) -> tuple[float, float]:
    """Projected area of a ``+/-`` partition of the band against the predicted constant.

    ``partition`` is an ``(n_angle, n_width)`` array of ``+1``/``-1``: cell
    ``(i, k)`` covers angle cell ``i`` and width cell ``k`` of a uniform grid
    and is projected to ``Q+`` or ``Q-``.  The Jacobian is evaluated from the
    tangent frame at Gauss-Legendre nodes in the angle.
    """
    labels = np.asarray(partition)
    if labels.ndim != 2 or not np.all(np.isin(labels, (-1, 1))):
        raise CheckError("partition must be a 2-d array of +1/-1 labels")
    nb, nt = labels.shape
    edges = np.linspace(-band.theta / 2, band.theta / 2, nb + 1)
    x, w = np.polynomial.legendre.leggauss(gauss_nodes)
    half = 0.5 * np.diff(edges)
    beta = 0.5 * (edges[:-1] + edges[1:])[:, None] + half[:, None] * x
    tangent = -np.sin(beta)[..., None] * band.e1 + np.cos(beta)[..., None] * band.e2
    frame = np.stack([tangent, np.broadcast_to(band.v, tangent.shape)], axis=-2)
    jac = {s: (_projection_jacobian(frame, band.plane(s)) * w).sum(axis=1) * half for s in (1, -1)}
    width = 2 * band.R1 / nt
    lhs = sum(float(jac[s] @ (labels == s).sum(axis=1)) * width for s in (1, -1))
    return lhs, band.constant * band.area


@dataclass(frozen=True)
class PlateSpec:
    """Plate ``A_1`` of the Y domain with its three rim chords and projection planes."""

    center: np.ndarray
    normal: np.ndarray
    radius: float
    rim_offset: float
    directions: np.ndarray  # unit vectors in the plate towards the three chords
    alpha: float

    def __post_init__(self):
        d = self.directions
        if d.shape[0] != 3 or np.linalg.norm(d.sum(axis=0)) > 1e-10:
            raise CheckError("chord directions must be three unit vectors at 120 degrees")
        if not 0 <= self.alpha < np.pi / 2:
            raise CheckError("tilt must lie in [0, pi/2)")
        if not 0 < self.rim_offset < self.radius:
            raise CheckError("chords must cut the plate disk")

    @classmethod
    def from_domain(cls, dom: ConvexDomain, alpha: float, j: int = 0) -> "PlateSpec":
        if dom.spec.kind != "y" or dom.n != 3:
            raise CheckError("the plate check uses the Y cone in R^3")
        a = dom.spec.singular_dirs[j]
        dirs = np.array([arc.midpoint for arc in dom.spec.arcs])
        return cls(dom.plate_level * a, a, dom.R, dom.rim_offset, dirs, float(alpha))

    def planes(self) -> list[np.ndarray]:
        """Orthonormal bases of the three projection planes."""
        out = []
        for v in self.directions:
            w = normalize(np.cross(self.normal, v))
            out.append(np.array([w, np.sin(self.alpha) * self.normal - np.cos(self.alpha) * v]))
        return out

    @property
    def frame(self) -> np.ndarray:
        u = self.directions[0]
        return np.array([u, np.cross(self.normal, u)])

    @property
    def area(self) -> float:
        R, d = self.radius, self.rim_offset
        return float(np.pi * R * R - 3 * (R * R * np.arccos(d / R) - d * np.sqrt(R * R - d * d)))

    def angle_knots(self) -> np.ndarray:
        """Polar angles (in :attr:`frame`) where the plate outline switches between circle and chord."""
        u, w = self.frame
        half = np.arccos(self.rim_offset / self.radius)
        phis = np.arctan2(self.directions @ w, self.directions @ u)
        return np.sort(np.mod(np.concatenate([phis - half, phis + half]), 2 * np.pi))

    def sector_area_factor(self, a: float, b: float) -> float:
        """``1/2 * integral of rho_max(phi)**2`` over ``[a, b]``, which must not straddle a knot."""
        u, w = self.frame
        mid = 0.5 * (a + b)
        phis = np.arctan2(self.directions @ w, self.directions @ u)
        rel = np.mod(mid - phis + np.pi, 2 * np.pi) - np.pi
        k = int(np.argmin(np.abs(rel)))
        if np.cos(rel[k]) * self.radius > self.rim_offset:
            d = self.rim_offset
            lo, hi = a - phis[k], b - phis[k]
            lo = np.mod(lo + np.pi, 2 * np.pi) - np.pi
            hi = lo + (b - a)
            return 0.5 * d * d * (np.tan(hi) - np.tan(lo))
        return 0.5 * self.radius ** 2 * (b - a)


def plate_cells(plate: PlateSpec, n_sectors: int, n_radial: int) -> np.ndarray:
    """Areas of the polar cells of the plate, shape ``(n_angle, n_radial)``.

    Angular cells are a uniform grid refined by the outline knots, so the number
    of angular cells is ``n_sectors`` plus up to six.
    """
    grid = np.linspace(0, 2 * np.pi, n_sectors + 1)
    edges = np.unique(np.concatenate([grid, plate.angle_knots()]))
    factors = np.array([plate.sector_area_factor(a, b) for a, b in zip(edges[:-1], edges[1:])])
    f = np.linspace(0, 1, n_radial + 1)
    return factors[:, None] * (f[1:] ** 2 - f[:-1] ** 2)[None, :]


def plate_constant_check(plate: PlateSpec, partition, cells: np.ndarray | None = None) -> tuple[float, float]:
    """Projected area of a 3-coloring of the plate against ``cos(alpha)`` times its area.

    ``partition`` assigns a color in ``{0, 1, 2}`` to every cell of ``cells``
    (default: :func:`plate_cells` sized to the partition).
    """
    labels = np.asarray(partition)
    if labels.ndim != 2 or not np.all(np.isin(labels, (0, 1, 2))):
        raise CheckError("partition must be a 2-d array of colors 0, 1, 2")
    if cells is None:
        # the knots add up to six angular cells to the uniform grid
        for n in range(max(labels.shape[0] - 6, 1), labels.shape[0] + 1):
            cells = plate_cells(plate, n, labels.shape[1])
            if cells.shape == labels.shape:
                break
    if cells.shape != labels.shape:
        raise CheckError(f"partition shape {labels.shape} does not match the cells {cells.shape}")
    defect = abs(cells.sum() - plate.area)
    if defect > 1e-8:
        raise CheckError(f"cells miss the plate area by {defect:.3g}")
    frame = plate.frame
    jac = np.array([_projection_jacobian(frame, P) for P in plate.planes()])
    lhs = float(sum(jac[c] * cells[labels == c].sum() for c in range(3)))
    return lhs, float(np.cos(plate.alpha) * plate.area)


# -- tetrahedral calibration ---------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationIdentity:
    lhs: float
    rhs: float
    lhs_error: float
    rhs_error: float
    resolution: int
    minority_flux_fraction: float  # share of projected area with the wrong sign (0 when injective)

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs) / self.lhs


def projected_face_areas(bm: BoundaryMesh, directions: np.ndarray) -> tuple[np.ndarray, float]:
    """``sum |<n, a_i>| dA`` over each face ``i`` and the share of flux with the minority sign."""
    va = bm.mesh.vector_areas()
    out, minority, total = [], 0.0, 0.0
    for i, a in enumerate(directions):
        f = va[bm.face_labels == i] @ a
        out.append(np.abs(f).sum())
        pos, neg = f[f > 0].sum(), -f[f < 0].sum()
        minority += min(pos, neg)
        total += pos + neg
    return np.array(out), minority / total if total else 0.0


def t_calibration_identity(dom: ConvexDomain, resolution: int = 3) -> CalibrationIdentity:
    """Area of the clipped T against the scaled projected areas of the boundary faces.

    Face ``i`` of the boundary is the one containing ``-a_i``; its projection
    area along ``a_i`` is computed as a flux.  The right side's error estimate
    is a third of its change from one resolution below.
    """
    if dom.spec.kind != "t" or dom.n != 3:
        raise CheckError("the calibration identity concerns the T cone in R^3")
    lhs = clipped_cone_area(dom)
    A = dom.spec.singular_dirs
    bm = boundary_mesh(dom, resolution)
    proj, minority = projected_face_areas(bm, A)
    rhs = T_PROJECTION_FACTOR * proj.sum()
    if resolution > 0:
        coarse = T_PROJECTION_FACTOR * projected_face_areas(boundary_mesh(dom, resolution - 1), A)[0].sum()
        rhs_err = abs(rhs - coarse) / 3
    else:
        rhs_err = float("nan")
    return CalibrationIdentity(lhs.value, float(rhs), lhs.error_estimate, rhs_err, resolution, minority)


@dataclass(frozen=True, eq=False)
class LabeledSurface:
    """A competitor split into interface pieces, plus the labeled boundary of the domain.

    ``pairs[t] = (i, j)`` says interior triangle ``t`` separates region ``i``
    from region ``j`` with its normal pointing out of ``i``.  ``regions[t]`` is
    the region whose boundary contains boundary triangle ``t``.  ``directions``
    holds the constant field ``a_i`` of each region.
    """

    interior: TriangleMesh
    pairs: np.ndarray
    boundary: TriangleMesh
    regions: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        if len(self.pairs) != len(self.interior.triangles):
            raise CheckError("one region pair per interior triangle is required")
        if len(self.regions) != len(self.boundary.triangles):
            raise CheckError("one region label per boundary triangle is required")
        if np.any(self.pairs[:, 0] == self.pairs[:, 1]):
            raise CheckError("an interface must separate two different regions")

    @property
    def n_regions(self) -> int:
        return len(self.directions)

    def closure_defects(self) -> np.ndarray:
        """Norm of the total vector area of each region's boundary (zero when closed)."""
        vi = self.interior.vector_areas()
        vb = self.boundary.vector_areas()
        out = []
        for r in range(self.n_regions):
            total = vb[self.regions == r].sum(axis=0)
            total = total + vi[self.pairs[:, 0] == r].sum(axis=0) - vi[self.pairs[:, 1] == r].sum(axis=0)
            out.append(np.linalg.norm(total))
        return np.array(out)


def t_labeled_surface(dom: ConvexDomain, resolution: int = 3, interior: TriangleMesh | None = None,
                      reference: TriangleMesh | None = None) -> LabeledSurface:
    """Labeled T configuration: the clipped cone (or a deformation of it) and the boundary faces.

    ``interior`` may be any mesh with the connectivity of ``reference`` (default:
    the clipped cone mesh at ``resolution``); labels come from the reference.
    """
    from .deform import cone_mesh

    if dom.spec.kind != "t":
        raise CheckError("the labeled calibration surface is built for the T cone")
    ref = cone_mesh(dom, resolution=resolution) if reference is None else reference
    mesh = ref if interior is None else interior
    if mesh.triangles.shape != ref.triangles.shape or np.any(mesh.triangles != ref.triangles):
        raise CheckError("interior mesh must share the reference connectivity")
    spec = dom.spec
    n = ref.normals()
    arc_normals = np.array([np.cross(arc.start, arc.tangent) for arc in spec.arcs])
    sheet = np.abs(n @ arc_normals.T).argmax(axis=1)
    centers = np.array([f.center for f in spec.faces])
    adjacent = [[i for i, f in enumerate(spec.faces) if any(k == s for k, _ in f.loop)] for s in range(len(spec.arcs))]
    pairs = np.empty((len(n), 2), dtype=int)
    for t, (k, nt) in enumerate(zip(sheet, n)):
        i, j = adjacent[k]
        pairs[t] = (i, j) if centers[i] @ nt < 0 else (j, i)
    bm = boundary_mesh(dom, resolution)
    return LabeledSurface(mesh, pairs, bm.mesh, bm.face_labels.copy(), spec.singular_dirs.copy())


@dataclass(frozen=True)
class CalibrationResult:
    flux: float
    bound: float
    boundary_projection: float
    closure_defect: float

    @property
    def ratio(self) -> float:
        return self.flux / self.bound


def calibration_functional(ls: LabeledSurface, closure_tol: float = 1e-6) -> CalibrationResult:
    """Flux of the region fields through the interfaces and the area bound.

    An interface triangle between regions ``i`` and ``j`` with normal ``n`` out
    of ``i`` contributes ``<n, a_i - a_j>`` times its area to the flux and
    ``|a_i - a_j|`` times its area to the bound.
    """
    defects = ls.closure_defects()
    if np.any(defects > closure_tol):
        raise CheckError(f"region boundaries are not closed: flux defect {defects.max():.3g}")
    va = ls.interior.vector_areas()
    A = ls.directions
    diff = A[ls.pairs[:, 0]] - A[ls.pairs[:, 1]]
    flux = float(np.einsum("ij,ij->i", va, diff).sum())
    bound = float((np.linalg.norm(diff, axis=1) * ls.interior.areas).sum())
    vb = ls.boundary.vector_areas()
    proj = float(sum(np.abs(vb[ls.regions == r] @ A[r]).sum() for r in range(ls.n_regions)))
    return CalibrationResult(flux, bound, proj, float(defects.max()))
