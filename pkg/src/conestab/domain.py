"""The convex domain U(K, eta) around a cone and the pieces of its boundary.

The domain is the closed set of points ``x`` with

* ``|x| <= 1``,
* ``<x, y> <= 1 - eta`` for every unit vector ``y`` of the cone,
* ``<x, a_j> <= 1 - 2 eta`` for every singular direction ``a_j``.

Every constraint is a positively homogeneous convex function, so the
Minkowski functional is the largest of the normalized constraint values.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cones import ConeSpec, build_cone
from .geom import GeometryError, SphericalArc

logger = logging.getLogger(__name__)

ACTIVE_TOL = 1e-10
ETA1_MARGIN = 1e-3


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryRegion:
    """Which piece of the boundary a point lies on.

    ``kind`` is ``"plate"`` (index ``(j,)``), ``"band"`` (index ``(j, l)``,
    the endpoints of the generating arc), ``"circle_band"`` (index ``(k,)``)
    or ``"sphere"``.  ``sheet`` is the generating sheet for bands.
    """

    kind: str
    index: tuple = ()
    sheet: int | None = None

    def __str__(self) -> str:
        if self.kind == "sphere":
            return "sphere"
        name = f"{self.kind}{'-'.join(str(i) for i in self.index)}"
        # Y bands share their endpoints, so the sheet disambiguates them
        return name if self.kind != "band" else f"{name}/s{self.sheet}"


@dataclass(frozen=True)
class Membership:
    status: str  # "interior", "boundary" or "exterior"
    region: BoundaryRegion | None = None

    @property
    def inside(self) -> bool:
        return self.status != "exterior"


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    spec: ConeSpec
    eta: float
    validate: bool = True

    def __post_init__(self):
        eta = float(self.eta)
        object.__setattr__(self, "eta", eta)
        if not 0 < eta < 1:
            raise DomainError(f"eta={eta} must lie in (0, 1)")
        if self.spec.m and eta >= 0.5:
            raise DomainError(f"eta={eta} must be < 1/2 for cones with singular directions "
                              "(the plate level 1 - 2 eta must stay positive)")
        if self.validate:
            limit = eta_limit(self.spec)
            if eta >= limit:
                raise DomainError(f"eta={eta} is outside the admissible range eta < {limit:.6g} "
                                  f"for the {self.spec.kind} cone")

    @property
    def n(self) -> int:
        return self.spec.ambient_dim

    @property
    def plate_level(self) -> float:
        return 1 - 2 * self.eta

    @property
    def band_level(self) -> float:
        return 1 - self.eta

    @property
    def R(self) -> float:
        """Radius of the disk cut from the sphere at plate level."""
        return float(np.sqrt(1 - self.plate_level ** 2))

    @property
    def R1(self) -> float:
        """Band half-width: the band reaches distance R1 from the cone."""
        return float(np.sqrt(1 - self.band_level ** 2))

    @property
    def rim_offset(self) -> float:
        """Distance from a plate center to the chords where the plate meets the bands."""
        return float(np.sqrt(self.band_level ** 2 - self.plate_level ** 2))

    # -- constraint evaluation -------------------------------------------------

    def _points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n:
            raise DomainError(f"points must have dimension {self.n}")
        return np.atleast_2d(X)

    def sheet_support(self, X) -> tuple[np.ndarray, np.ndarray]:
        """``sup <x, y>`` over each sheet's arc, shape ``(N, n_sheets)``, with maximizers."""
        X = self._points(X)
        sheets = self.spec.sheets
        vals = np.empty((len(X), len(sheets)))
        args = np.empty((len(X), len(sheets)))
        for k, arc in enumerate(sheets):
            vals[:, k], args[:, k] = arc.support(X)
        return vals, args

    def normalized_constraints(self, X) -> np.ndarray:
        """Columns: sphere, plates ``a_j``, sheets; each scaled so the level is 1."""
        X = self._points(X)
        cols = [np.linalg.norm(X, axis=1)[:, None]]
        if self.spec.m:
            cols.append(X @ self.spec.singular_dirs.T / self.plate_level)
        if self.spec.sheets:
            cols.append(self.sheet_support(X)[0] / self.band_level)
        return np.hstack(cols)

    def gauge(self, X) -> np.ndarray:
        return self.normalized_constraints(X).max(axis=1)

    def contains(self, X, tol: float = ACTIVE_TOL) -> np.ndarray:
        return self.gauge(X) <= 1 + tol

    @property
    def regions(self) -> list[BoundaryRegion]:
        """Boundary regions in constraint-column order (sphere last)."""
        out = [BoundaryRegion("plate", (j,)) for j in range(self.spec.m)]
        for k, (i, j) in enumerate(self.spec.arc_ends):
            out.append(BoundaryRegion("band", (i, j), sheet=k))
        na = len(self.spec.arcs)
        for c in range(len(self.spec.circles)):
            out.append(BoundaryRegion("circle_band", (c,), sheet=na + c))
        out.append(BoundaryRegion("sphere"))
        return out

    def region_codes(self, X, tol: float = ACTIVE_TOL) -> np.ndarray:
        """Index into :attr:`regions` of the boundary piece for points on the boundary.

        Points not on the boundary get -1.  Ties go to plates, then bands, then the sphere.
        """
        vals = self.normalized_constraints(X)
        g = vals.max(axis=1)
        m = self.spec.m
        plates = vals[:, 1:1 + m]
        bands = vals[:, 1 + m:]
        codes = np.full(len(vals), -1)
        on = np.abs(g - 1) <= tol
        sphere_code = m + bands.shape[1]
        codes[on] = sphere_code
        if bands.shape[1]:
            hit = on & (bands.max(axis=1) >= g - tol)
            codes[hit] = m + bands[hit].argmax(axis=1)
        if m:
            hit = on & (plates.max(axis=1) >= g - tol)
            codes[hit] = plates[hit].argmax(axis=1)
        return codes

    def classify_directions(self, U) -> np.ndarray:
        """Region codes of the boundary points ``u / gauge(u)``."""
        U = self._points(U)
        return self.region_codes(U / self.gauge(U)[:, None], tol=1e-9)

    def to_dict(self) -> dict:
        return {"cone": self.spec.to_dict(), "eta": self.eta,
                "plate_level": self.plate_level, "band_level": self.band_level}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def membership(dom: ConvexDomain, x, tol: float = ACTIVE_TOL) -> Membership:
    x = np.asarray(x, dtype=float)
    g = float(dom.gauge(x)[0])
    if g < 1 - tol:
        return Membership("interior")
    if g > 1 + tol:
        return Membership("exterior")
    code = int(dom.region_codes(x, tol)[0])
    return Membership("boundary", dom.regions[code])


def minkowski_functional(dom: ConvexDomain, x) -> float | np.ndarray:
    """The gauge ``r_x`` with ``x / r_x`` on the boundary of the domain."""
    X = np.asarray(x, dtype=float)
    if np.any(np.linalg.norm(np.atleast_2d(X), axis=1) == 0):
        raise DomainError("the Minkowski functional is undefined at the origin")
    g = dom.gauge(X)
    return float(g[0]) if X.ndim == 1 else g


def project_to_boundary(dom: ConvexDomain, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X / dom.gauge(X)[:, None]


def boundary_normals(dom: ConvexDomain, X) -> np.ndarray:
    """Outward unit normal of the active constraint at (near-)boundary points ``X``.

    At creases the normal of the piece chosen by the region tie-breaking is used.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, ns = dom.spec.m, len(dom.spec.sheets)
    codes = dom.region_codes(X / dom.gauge(X)[:, None], tol=1e-9)
    normals = X / np.linalg.norm(X, axis=1, keepdims=True)
    for j in range(m):
        normals[codes == j] = dom.spec.singular_dirs[j]
    if ns:
        _, args = dom.sheet_support(X)
        for k, arc in enumerate(dom.spec.sheets):
            sel = codes == m + k
            if np.any(sel):
                normals[sel] = arc.point(args[sel, k])
    return normals


def distance_to_cone(spec: ConeSpec, X) -> np.ndarray:
    """Euclidean distance from points to the (untranslated, unclipped) cone."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sq = np.einsum("ij,ij->i", X, X)
    best = np.full(len(X), np.inf)
    for arc in spec.sheets:
        a = X @ arc.start
        b = X @ arc.tangent
        perp = np.maximum(sq - a * a - b * b, 0.0)
        if arc.full_circle:
            d2 = perp
        else:
            phi = np.arctan2(b, a)
            inside = (phi >= 0) & (phi <= arc.angle)
            rays = []
            for d in (arc.start, arc.end):
                p = X @ d
                rays.append(np.where(p > 0, np.maximum(sq - p * p, 0.0), sq))
            d2 = np.where(inside, perp, np.minimum(*rays))
        best = np.minimum(best, d2)
    return np.sqrt(best)


@dataclass(frozen=True, eq=False)
class SlidingNeighborhood:
    """Boundary points within distance ``delta`` of the cone."""

    parent: ConvexDomain
    delta: float

    def __post_init__(self):
        if not 0 < self.delta <= self.parent.R1 + 1e-12:
            raise DomainError(f"delta={self.delta} must lie in (0, R1={self.parent.R1:.6g}]")


def sliding_neighborhood_contains(nbhd: SlidingNeighborhood, x, tol: float = 1e-8) -> bool | np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    g = nbhd.parent.gauge(X)
    if np.any(np.abs(g - 1) > tol):
        raise DomainError("point is not on the boundary of the domain")
    inside = distance_to_cone(nbhd.parent.spec, X) <= nbhd.delta
    return bool(inside[0]) if np.ndim(x) == 1 else inside


# -- breakpoints of boundary pieces along a sheet ---------------------------------

def find_switches(label_fn, lo: float, hi: float, samples: int, tol: float = 1e-13) -> list[float]:
    """Parameters in ``[lo, hi]`` where an integer-valued function changes value.

    ``label_fn`` maps an array of parameters to integer labels.  The interval is
    scanned on ``samples`` points and all changes are refined together by bisection.
    """
    s = np.linspace(lo, hi, samples)
    lab = np.asarray(label_fn(s))
    idx = np.nonzero(lab[1:] != lab[:-1])[0]
    if not len(idx):
        return []
    a, b, la = s[idx].copy(), s[idx + 1].copy(), lab[idx]
    while np.max(b - a) > tol:
        mid = 0.5 * (a + b)
        same = np.asarray(label_fn(mid)) == la
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    return (0.5 * (a + b)).tolist()


def sheet_breakpoints(dom: ConvexDomain, sheet: int, samples: int = 513) -> list[float]:
    """Parameters where the boundary piece under the untranslated sheet changes."""
    arc = dom.spec.sheets[sheet]
    return find_switches(lambda s: dom.normalized_constraints(arc.point(s)).argmax(axis=1),
                         0.0, arc.angle, samples)


def sheet_grid(dom: ConvexDomain, sheet: int, level: int, base_step: float = 0.3) -> np.ndarray:
    """Arc parameters used by all boundary-conforming meshes of the domain.

    Breakpoints are always grid points; each piece between breakpoints is
    divided uniformly into ``ceil(len/base_step) * 2**level`` segments.  Open
    arcs include both ends; full circles omit the repeated end.
    """
    arc = dom.spec.sheets[sheet]
    knots = [0.0, *_cached_breakpoints(dom, sheet), arc.angle]
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        k = max(1, int(np.ceil((b - a) / base_step))) * 2 ** level
        pieces.append(np.linspace(a, b, k + 1)[:-1])
    grid = np.concatenate(pieces + [[arc.angle]])
    return grid[:-1] if arc.full_circle else grid


_BREAKS: dict = {}


def sheet_knots(dom: ConvexDomain, sheet: int) -> tuple[float, ...]:
    """Breakpoints of the untranslated sheet, cached per domain parameters."""
    return _cached_breakpoints(dom, sheet)


def _cached_breakpoints(dom: ConvexDomain, sheet: int) -> tuple[float, ...]:
    key = (dom.spec.kind, dom.spec.ambient_dim, dom.eta, sheet)
    if key not in _BREAKS:
        _BREAKS[key] = tuple(sheet_breakpoints(dom, sheet))
    return _BREAKS[key]


# -- admissible eta ----------------------------------------------------------------

def fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _separation_ok(dom: ConvexDomain, U: np.ndarray, tol: float) -> bool:
    X = U / dom.gauge(U)[:, None]
    vals = dom.normalized_constraints(X)
    m = dom.spec.m
    plates = vals[:, 1:1 + m] >= 1 - tol
    bands = vals[:, 1 + m:] >= 1 - tol
    if m and np.any(plates.sum(axis=1) >= 2):
        return False
    free = ~plates.any(axis=1) if m else np.ones(len(X), bool)
    return not np.any(bands[free].sum(axis=1) >= 3)


def eta1_estimate(spec: ConeSpec, grid: int = 200, samples: int = 40000) -> float:
    """Conservative estimate of the largest admissible eta.

    Scans ``eta`` upward over a uniform grid of ``(0, 1)`` and stops at the
    first value where two plates share a boundary sample or three bands do,
    where "share" means every involved constraint is within a tolerance of
    one sample spacing of being active.  Returns the last passing grid value
    minus a margin; ``0`` if even the first grid value fails.
    """
    if spec.ambient_dim != 3:
        spec = build_cone(spec.kind, 3)
    U = fibonacci_sphere(samples)
    tol = 1.5 * np.sqrt(4 * np.pi / samples)
    etas = np.arange(1, grid) / grid
    last = 0.0
    for eta in etas:
        if spec.m and eta >= 0.5:
            break
        if not _separation_ok(ConvexDomain(spec, float(eta), validate=False), U, tol):
            break
        last = float(eta)
    return max(last - ETA1_MARGIN, 0.0)


# The largest eta covered by the stability statements for each cone type.
ETA_CAP = {"plane": 1.0, "y": 0.5, "t": 0.5}


@lru_cache(maxsize=None)
def _eta1_cached(kind: str) -> float:
    return eta1_estimate(build_cone(kind, 3))


def eta_limit(spec: ConeSpec) -> float:
    """Upper bound for admissible eta: the eta1 estimate, capped where the plates degenerate."""
    return min(_eta1_cached(spec.kind), ETA_CAP[spec.kind])


def arc_of(spec: ConeSpec, sheet: int) -> SphericalArc:
    try:
        return spec.sheets[sheet]
    except IndexError:
        raise GeometryError(f"sheet index {sheet} out of range") from None
