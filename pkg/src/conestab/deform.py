"""Sliding deformations of clipped cone meshes and constrained area descent.

Boundary vertices of a competitor must stay on the boundary of the domain and
within ``delta`` of where they started; interior vertices move freely.
Boundary motion is tangential followed by radial re-projection ``x / gauge(x)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix, identity
from scipy.sparse.linalg import splu

from .cones import ConeSpec
from .domain import ConvexDomain, boundary_normals, sheet_grid
from .geom import TriangleMesh, merge_close_vertices, triangle_areas
from .measure import clipped_cone_area

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-8
MIN_TRIANGLE = 1e-12
RING_STEP = 0.3


class DeformError(RuntimeError):
    pass


# -- cone meshes -------------------------------------------------------------------

def cone_mesh(dom: ConvexDomain, spec: ConeSpec | None = None, resolution: int = 1) -> TriangleMesh:
    """Triangulate ``K ∩ U`` sheet by sheet on rays from the apex.

    Along each sheet the arc parameters are those of
    :func:`conestab.domain.sheet_grid`, so the boundary vertices coincide with
    the trace vertices of a boundary mesh at the same resolution.  Rings sit at
    equal fractions of the exit distance.
    """
    spec = dom.spec if spec is None else spec
    if resolution < 0:
        raise DeformError("resolution must be >= 0")
    n_rings = int(np.ceil(1.0 / RING_STEP)) * 2 ** resolution
    frac = np.arange(1, n_rings + 1) / n_rings
    verts = [np.zeros((1, dom.n))]
    tris = []
    base = 1
    for k, arc in enumerate(spec.sheets):
        s = sheet_grid(dom, k, resolution)
        if not arc.full_circle and len(s) < 3:
            raise DeformError(f"resolution {resolution} is too coarse for sheet {k}")
        U = arc.point(s)
        rim = U / dom.gauge(U)[:, None]
        K = len(s)
        verts.append((frac[:, None, None] * rim[None]).reshape(-1, dom.n))
        idx = base + np.arange(n_rings * K).reshape(n_rings, K)
        base += n_rings * K
        nxt = np.arange(1, K + 1) % K if arc.full_circle else np.arange(1, K)
        cur = np.arange(K) if arc.full_circle else np.arange(K - 1)
        tris.append(np.stack([np.zeros(len(cur), dtype=int), idx[0, cur], idx[0, nxt]], 1))
        for r in range(n_rings - 1):
            a, b = idx[r, cur], idx[r, nxt]
            c, d = idx[r + 1, nxt], idx[r + 1, cur]
            tris += [np.stack([a, d, c], 1), np.stack([a, c, b], 1)]
    verts = np.vstack(verts)
    tris = np.vstack(tris)
    verts, remap = merge_close_vertices(verts, tol=1e-9)
    tris = remap[tris]
    return TriangleMesh(verts, tris)


def boundary_flags(dom: ConvexDomain, mesh: TriangleMesh, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Vertices on the boundary of the domain."""
    V = mesh.vertices
    flags = np.zeros(len(V), dtype=bool)
    nz = np.linalg.norm(V, axis=1) > 0
    flags[nz] = np.abs(dom.gauge(V[nz]) - 1) <= tol
    return flags


# -- area gradient -----------------------------------------------------------------

def area_gradient(mesh: TriangleMesh) -> np.ndarray:
    """Gradient of the total area with respect to every vertex position (any dimension)."""
    V, T = mesh.vertices, mesh.triangles
    p0, p1, p2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    u, w = p1 - p0, p2 - p0
    uu = np.einsum("ij,ij->i", u, u)
    ww = np.einsum("ij,ij->i", w, w)
    uw = np.einsum("ij,ij->i", u, w)
    four_a = 2 * np.sqrt(np.maximum(uu * ww - uw * uw, 1e-300))
    g1 = (ww[:, None] * u - uw[:, None] * w) / four_a[:, None]
    g2 = (uu[:, None] * w - uw[:, None] * u) / four_a[:, None]
    g0 = -(g1 + g2)
    G = np.zeros_like(V)
    for col, g in ((0, g0), (1, g1), (2, g2)):
        np.add.at(G, T[:, col], g)
    return G


def _cotan_laplacian(mesh: TriangleMesh) -> "coo_matrix":
    V, T = mesh.vertices, mesh.triangles
    rows, cols, vals = [], [], []
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        a, b = V[T[:, j]] - V[T[:, i]], V[T[:, k]] - V[T[:, i]]
        dot = np.einsum("ij,ij->i", a, b)
        cross = np.sqrt(np.maximum(np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b) - dot ** 2, 1e-300))
        wgt = np.maximum(0.5 * dot / cross, 1e-3)  # weight for the edge opposite vertex i
        rows += [T[:, j], T[:, k]]
        cols += [T[:, k], T[:, j]]
        vals += [wgt, wgt]
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    n = len(V)
    W = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    deg = np.asarray(W.sum(axis=1)).ravel()
    return (coo_matrix((deg, (np.arange(n), np.arange(n))), shape=(n, n)) - W).tocsc()


# -- sliding states ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SlidingState:
    mesh: TriangleMesh
    reference: TriangleMesh
    boundary: np.ndarray
    delta: float
    dom: ConvexDomain
    pinned: np.ndarray | None = None  # vertices that may not move at all
    crease_normals: dict = field(default_factory=dict)  # vertex -> orthonormal rows to remove
    trace_neighbors: np.ndarray | None = None  # (N, 2) neighbors along the mesh boundary, -1 if none

    @classmethod
    def start(cls, dom: ConvexDomain, mesh: TriangleMesh, delta: float, pin_boundary: bool = False):
        if not 0 < delta <= dom.R1 + 1e-12:
            raise DeformError(f"delta={delta} must lie in (0, R1={dom.R1:.6g}]")
        flags = boundary_flags(dom, mesh)
        return cls(mesh, mesh, flags, float(delta), dom, flags.copy() if pin_boundary else None,
                   crease_bases(dom, mesh.vertices, flags), trace_neighbors(mesh))

    @property
    def drift(self) -> np.ndarray:
        d = np.linalg.norm(self.mesh.vertices - self.reference.vertices, axis=1)
        return d[self.boundary]

    @property
    def max_boundary_drift(self) -> float:
        d = self.drift
        return float(d.max()) if d.size else 0.0

    @property
    def area(self) -> float:
        return self.mesh.area

    def check(self) -> None:
        """Raise unless boundary vertices are on the boundary and within ``delta``."""
        V = self.mesh.vertices[self.boundary]
        off = float(np.abs(self.dom.gauge(V) - 1).max()) if len(V) else 0.0
        if off > BOUNDARY_TOL:
            raise DeformError(f"boundary vertex off the domain boundary by {off:.3g}")
        if self.max_boundary_drift >= self.delta:
            raise DeformError(f"boundary drift {self.max_boundary_drift:.6g} >= delta={self.delta}")

    def with_vertices(self, V: np.ndarray) -> "SlidingState":
        return replace(self, mesh=self.mesh.with_vertices(V))


def crease_bases(dom: ConvexDomain, V: np.ndarray, flags: np.ndarray, tol: float = 1e-9) -> dict:
    """Normals of all active plate and band constraints at vertices where two or more are active.

    Such vertices sit on a crease of the boundary; a chord-edged mesh could cut
    the corner there, so they are kept on the crease.
    """
    out = {}
    idx = np.nonzero(flags)[0]
    if not len(idx) or not dom.spec.m:
        return out
    X = V[idx]
    vals = dom.normalized_constraints(X)
    m = dom.spec.m
    active = vals[:, 1:] >= 1 - tol
    _, args = dom.sheet_support(X)
    for row in np.nonzero(active.sum(axis=1) >= 2)[0]:
        normals = [dom.spec.singular_dirs[c] if c < m else dom.spec.sheets[c - m].point(args[row, c - m])
                   for c in np.nonzero(active[row])[0]]
        q, _ = np.linalg.qr(np.array(normals).T)
        out[int(idx[row])] = q.T
    return out


def trace_neighbors(mesh: TriangleMesh) -> np.ndarray:
    """The two neighbors of each vertex along the mesh boundary (-1 at junctions and inside)."""
    nbrs = [[] for _ in range(len(mesh.vertices))]
    for a, b in mesh.boundary_edges.tolist():
        nbrs[a].append(b)
        nbrs[b].append(a)
    out = np.full((len(nbrs), 2), -1, dtype=np.int64)
    for v, nb in enumerate(nbrs):
        if len(nb) == 2:
            out[v] = nb
    return out


def _tangential(dom: ConvexDomain, X: np.ndarray, D: np.ndarray) -> np.ndarray:
    n = boundary_normals(dom, X)
    return D - np.einsum("ij,ij->i", D, n)[:, None] * n


def _constrain(state: "SlidingState", D: np.ndarray) -> np.ndarray:
    """Restrict a displacement field to the motions allowed at each vertex."""
    D = D.copy()
    b = state.boundary
    if b.any():
        V = state.mesh.vertices
        N = boundary_normals(state.dom, V[b])
        D[b] -= np.einsum("ij,ij->i", D[b], N)[:, None] * N
        # motion along the trace only reparametrizes the boundary curve; drop it
        nb = state.trace_neighbors
        if nb is not None:
            rows = np.nonzero(b)[0]
            sel = nb[rows, 0] >= 0
            r = rows[sel]
            t = V[nb[r, 1]] - V[nb[r, 0]]
            t -= np.einsum("ij,ij->i", t, N[sel])[:, None] * N[sel]
            t /= np.linalg.norm(t, axis=1, keepdims=True)
            D[r] -= np.einsum("ij,ij->i", D[r], t)[:, None] * t
    for v, Q in state.crease_normals.items():
        D[v] = D[v] - Q.T @ (Q @ D[v])
    if state.pinned is not None:
        D[state.pinned] = 0.0
    return D


def _place_boundary(state: SlidingState, V: np.ndarray) -> tuple[np.ndarray, bool]:
    """Re-project boundary rows of ``V`` onto the boundary and clamp their drift.

    Returns the new positions and whether the drift constraint was active.
    """
    V = V.copy()
    b = state.boundary
    ref = state.reference.vertices[b]
    X = V[b]
    X = X / state.dom.gauge(X)[:, None]
    hit = False
    limit = state.delta * (1 - 1e-6)
    for _ in range(5):
        d = X - ref
        dist = np.linalg.norm(d, axis=1)
        over = dist >= limit
        if not over.any():
            break
        hit = True
        X[over] = ref[over] + d[over] * (0.999 * limit / dist[over])[:, None]
        X[over] = X[over] / state.dom.gauge(X[over])[:, None]
    V[b] = X
    return V, hit


def random_sliding_perturbation(state: SlidingState, amplitude: float, seed: int = 0,
                                modes: int = 6, max_retries: int = 10) -> SlidingState:
    """Displace vertices by a smooth random field of sup-norm ``amplitude``.

    Boundary vertices keep only the tangential part of the field and are then
    re-projected; pinned vertices do not move.  If re-projection pushes the
    drift to ``delta`` the amplitude is halved and the draw repeated.
    """
    if amplitude < 0 or amplitude >= state.delta:
        raise DeformError(f"amplitude {amplitude} must lie in [0, delta={state.delta})")
    if amplitude == 0:
        return state
    rng = np.random.default_rng(seed)
    V0 = state.mesh.vertices
    n = V0.shape[1]
    freq = rng.normal(size=(modes, n)) * 2.0
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    coef = rng.normal(size=(modes, n))
    field_ = np.sin(V0 @ freq.T + phase) @ coef
    field_ /= np.abs(field_).max() or 1.0
    amp = amplitude
    for _ in range(max_retries):
        D = _constrain(state, amp * field_)
        b = state.boundary
        V = V0 + D
        if state.pinned is None:
            V[b] = V[b] / state.dom.gauge(V[b])[:, None]
        new = state.with_vertices(V)
        if new.max_boundary_drift < state.delta and new.mesh.areas.min() > MIN_TRIANGLE:
            new.check()
            return new
        amp *= 0.5
    raise DeformError("could not keep the perturbation within delta")


# -- descent -----------------------------------------------------------------------

@dataclass
class DescentTrace:
    iterations: list[tuple[float, float, float, float]] = field(default_factory=list)
    terminal_reason: str = "MaxIter"

    @property
    def areas(self) -> np.ndarray:
        return np.array([row[1] for row in self.iterations])

    def rows(self) -> list[tuple[int, float, float, float, float]]:
        return [(i, *row) for i, row in enumerate(self.iterations)]


def projected_gradient(state: SlidingState) -> np.ndarray:
    """Area gradient with boundary rows restricted to the boundary's tangent planes."""
    return _constrain(state, area_gradient(state.mesh))


def area_descent(state: SlidingState, max_iter: int = 200, tol_grad: float = 1e-8,
                 precondition: bool = True) -> tuple[DescentTrace, SlidingState]:
    """Decrease the area by projected, preconditioned gradient steps with backtracking.

    A step is accepted only when the area strictly decreases and no triangle
    becomes smaller than ``1e-12``.  The preconditioner is the cotangent
    Laplacian of the current mesh plus a small multiple of the identity.
    """
    trace = DescentTrace()
    area = state.area
    step = 1.0
    for _ in range(max_iter):
        G = projected_gradient(state)
        gnorm = float(np.linalg.norm(G))
        trace.iterations.append((step, area, gnorm, state.max_boundary_drift))
        if gnorm < tol_grad:
            trace.terminal_reason = "Converged"
            return trace, state
        D = -G
        if precondition:
            L = _cotan_laplacian(state.mesh)
            P = (L + 1e-3 * identity(L.shape[0], format="csc")).tocsc()
            D = _constrain(state, -splu(P).solve(G))
            if np.vdot(D, G) >= 0:
                D = -G
        V0 = state.mesh.vertices
        accepted, clamped = False, False
        for _ in range(40):
            V = V0 + step * D
            if state.boundary.any() and state.pinned is None:
                V, hit = _place_boundary(state, V)
                clamped |= hit
            cand = state.with_vertices(V)
            if cand.mesh.areas.min() > MIN_TRIANGLE and cand.area < area:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            trace.terminal_reason = "ConstraintHit" if clamped else "Converged"
            return trace, state
        state, area = cand, cand.area
        step = min(1.0, 2 * step)
    G = projected_gradient(state)
    trace.iterations.append((step, area, float(np.linalg.norm(G)), state.max_boundary_drift))
    return trace, state


def fd_gradient(mesh: TriangleMesh, vertex: int, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the mesh area at one vertex."""
    out = np.zeros(mesh.dim)
    for c in range(mesh.dim):
        V = mesh.vertices.copy()
        V[vertex, c] += h
        up = triangle_areas(V, mesh.triangles).sum()
        V[vertex, c] -= 2 * h
        down = triangle_areas(V, mesh.triangles).sum()
        out[c] = (up - down) / (2 * h)
    return out


# -- experiments -------------------------------------------------------------------

@dataclass
class ExperimentSummary:
    kind: str
    eta: float
    delta: float
    trials: int
    cone_area: float
    exact_area: float
    final_areas: list[float]
    initial_areas: list[float]
    converged_fraction: float
    tolerance: float
    stationary_gradient: float
    discretization_error: float
    traces: list[DescentTrace] = field(default_factory=list, repr=False)
    counterexample: str | None = None

    @property
    def min_area(self) -> float:
        return float(min(self.final_areas)) if self.final_areas else float("nan")

    @property
    def stationary(self) -> bool:
        return self.stationary_gradient <= 10 * self.discretization_error

    @property
    def passed(self) -> bool:
        return self.min_area >= self.cone_area - self.tolerance and self.stationary

    def to_dict(self) -> dict:
        return {"cone": self.kind, "eta": self.eta, "delta": self.delta, "trials": self.trials,
                "cone_area": self.cone_area, "exact_area": self.exact_area, "min_area": self.min_area,
                "final_areas": self.final_areas, "initial_areas": self.initial_areas,
                "converged_fraction": self.converged_fraction, "tolerance": self.tolerance,
                "stationary_gradient": self.stationary_gradient,
                "discretization_error": self.discretization_error,
                "counterexample": self.counterexample, "pass": self.passed}


DEFAULT_TOLERANCE = {"plane": 1e-3, "y": 1e-3, "t": 2e-3}


def stability_experiment(spec: ConeSpec, eta: float, delta: float | None = None, trials: int = 10,
                         seed: int = 0, amplitude: float = 0.05, resolution: int = 1,
                         max_iter: int = 300, tolerance: float | None = None,
                         out_dir: str | Path | None = None) -> ExperimentSummary:
    """Perturb the clipped cone mesh and descend, ``trials`` times.

    The reference is the area of the unperturbed mesh.  A trial whose final
    area falls below the reference by more than ``tolerance`` is saved as a
    counterexample when ``out_dir`` is given.
    """
    dom = ConvexDomain(spec, eta)
    delta = dom.R1 if delta is None else float(delta)
    tol = DEFAULT_TOLERANCE.get(spec.kind, 1e-3) if tolerance is None else tolerance
    mesh = cone_mesh(dom, spec, resolution)
    start = SlidingState.start(dom, mesh, delta)
    exact = clipped_cone_area(dom).value
    stationary = float(np.linalg.norm(projected_gradient(start)))
    disc = abs(mesh.area - exact)
    finals, initials, traces = [], [], []
    converged = 0
    counterexample = None
    seeds = np.random.SeedSequence(seed).generate_state(trials)
    for i in range(trials):
        amp = min(amplitude, 0.5 * delta)
        perturbed = random_sliding_perturbation(start, amp, seed=int(seeds[i]))
        trace, final = area_descent(perturbed, max_iter=max_iter)
        final.check()
        initials.append(perturbed.area)
        finals.append(final.area)
        traces.append(trace)
        if abs(final.area - mesh.area) <= tol:
            converged += 1
        if final.area < mesh.area - tol and out_dir is not None and counterexample is None:
            from .meshio import write_obj
            path = Path(out_dir) / f"counterexample_{spec.kind}_{i}.obj"
            write_obj(final.mesh, path)
            counterexample = str(path)
        logger.info("trial %d: %.6f -> %.6f (%s)", i, perturbed.area, final.area, trace.terminal_reason)
    return ExperimentSummary(spec.kind, float(eta), delta, trials, mesh.area, exact, finals, initials,
                             converged / trials if trials else 0.0, tol, stationary, disc, traces, counterexample)
