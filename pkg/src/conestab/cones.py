"""The three two-dimensional minimal cones in R^n: plane, Y and T.

A cone is stored through its trace on the unit sphere: the singular
directions, the great-circle arcs joining them and any full circles.  The
sheets of the cone are the cones over the arcs and circles.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geom import GeometryError, SphericalArc, normalize, pad, unit

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class Face:
    """A component of the sphere minus the cone's trace.

    ``loop`` lists ``(sheet_index, forward)`` pairs traversing the face boundary;
    ``center`` is a direction inside the face.
    """

    center: np.ndarray
    loop: tuple[tuple[int, bool], ...]


@dataclass(frozen=True, eq=False)
class ConeSpec:
    kind: str
    ambient_dim: int
    singular_dirs: np.ndarray
    arcs: tuple[SphericalArc, ...]
    arc_ends: tuple[tuple[int, int], ...]
    circles: tuple[SphericalArc, ...]
    faces: tuple[Face, ...] = ()

    def __post_init__(self):
        dirs = np.asarray(self.singular_dirs, dtype=float).reshape(-1, self.ambient_dim)
        dirs.setflags(write=False)
        object.__setattr__(self, "singular_dirs", dirs)
        for arc, (i, j) in zip(self.arcs, self.arc_ends):
            if not (np.allclose(arc.start, dirs[i], atol=1e-12) and np.allclose(arc.end, dirs[j], atol=1e-12)):
                raise GeometryError("arc endpoints must be singular directions")

    @property
    def sheets(self) -> tuple[SphericalArc, ...]:
        """Arcs followed by circles; sheet ``k`` is the cone over ``sheets[k]``."""
        return self.arcs + self.circles

    @property
    def eta0(self) -> float:
        return min(s.angle for s in self.sheets)

    @property
    def m(self) -> int:
        return len(self.singular_dirs)

    def incident_tangents(self, j: int) -> np.ndarray:
        """Unit tangents at singular direction ``j`` of the arcs leaving it."""
        out = []
        for arc, (a, b) in zip(self.arcs, self.arc_ends):
            if a == j:
                out.append(arc.start_tangent())
            if b == j:
                out.append(arc.end_tangent())
        return np.array(out)

    def incident_arcs(self, j: int) -> list[int]:
        return [k for k, (a, b) in enumerate(self.arc_ends) if j in (a, b)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ambient_dim": self.ambient_dim,
            "singular_dirs": self.singular_dirs.tolist(),
            "arcs": [{"i": i, "j": j, "via": arc.midpoint.tolist()} for arc, (i, j) in zip(self.arcs, self.arc_ends)],
            "circles": [c.to_dict() for c in self.circles],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_cone(kind: str, n: int = 3) -> ConeSpec:
    builders = {"plane": build_plane, "y": build_y, "t": build_t}
    try:
        return builders[kind.lower()](n)
    except KeyError:
        raise GeometryError(f"unknown cone type {kind!r}") from None


def cone_from_dict(doc: dict) -> ConeSpec:
    spec = build_cone(doc["kind"], int(doc["ambient_dim"]))
    if not np.allclose(spec.singular_dirs, np.asarray(doc["singular_dirs"], float).reshape(spec.singular_dirs.shape)):
        raise GeometryError("serialized cone does not match its canonical frame")
    return spec


def build_plane(n: int = 3) -> ConeSpec:
    """The plane spanned by the first two coordinate axes."""
    if n < 2:
        raise GeometryError("the plane needs ambient dimension >= 2")
    e1, e2 = np.eye(n)[0], np.eye(n)[1]
    circle = SphericalArc.circle(e1, e2)
    faces = ()
    if n == 3:
        e3 = np.eye(3)[2]
        faces = (Face(e3, ((0, True),)), Face(-e3, ((0, False),)))
    return ConeSpec("plane", n, np.zeros((0, n)), (), (), (circle,), faces)


def y_horizontal_dirs() -> np.ndarray:
    return np.array([[1.0, 0.0, 0.0], [-0.5, SQRT3 / 2, 0.0], [-0.5, -SQRT3 / 2, 0.0]])


def build_y(n: int = 3) -> ConeSpec:
    """Three half-planes meeting at 120 degrees along the vertical spine."""
    if n < 3:
        raise GeometryError("the Y cone needs ambient dimension >= 3")
    e3 = pad([0.0, 0.0, 1.0], n)
    horiz = pad(y_horizontal_dirs(), n)
    arcs = tuple(SphericalArc(e3, h, np.pi, exact_end=-e3) for h in horiz)
    faces = ()
    if n == 3:
        faces = tuple(Face(normalize(horiz[k] + horiz[(k + 1) % 3]), ((k, True), ((k + 1) % 3, False)))
                      for k in range(3))
    return ConeSpec("y", n, np.stack([e3, -e3]), arcs, ((0, 1),) * 3, (), faces)


def t_vertices() -> np.ndarray:
    return np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float) / SQRT3


T_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def build_t(n: int = 3) -> ConeSpec:
    """Cone over the edges of the regular tetrahedron inscribed in the sphere."""
    if n < 3:
        raise GeometryError("the T cone needs ambient dimension >= 3")
    verts = pad(t_vertices(), n)
    arcs = tuple(SphericalArc.between(verts[i], verts[j]) for i, j in T_PAIRS)
    faces = ()
    if n == 3:
        faces = []
        for i in range(4):
            j, k, l = (x for x in range(4) if x != i)
            loop = ((T_PAIRS.index((j, k)), True), (T_PAIRS.index((k, l)), True), (T_PAIRS.index((j, l)), False))
            faces.append(Face(-verts[i], loop))
        faces = tuple(faces)
    return ConeSpec("t", n, verts, arcs, T_PAIRS, (), faces)


@dataclass(frozen=True, eq=False)
class Translation:
    """The translation vector ``magnitude * direction``."""

    direction: np.ndarray
    magnitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "direction", unit(self.direction, 1e-10))
        if self.magnitude < 0:
            raise GeometryError("translation magnitude must be >= 0")

    @classmethod
    def signed(cls, q, t: float) -> "Translation":
        """Translation by ``t*q`` for a signed ``t``."""
        q = np.asarray(q, dtype=float)
        return cls(q if t >= 0 else -q, abs(float(t)))

    @classmethod
    def zero(cls, n: int) -> "Translation":
        return cls(np.eye(n)[0], 0.0)

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * self.direction


def sheet_parametrization(spec: ConeSpec, arc_index: int,
                          translation: Translation | None = None) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Map ``(r, s) -> t q + r u(s)`` for sheet ``arc_index``; area element ``r dr ds``."""
    sheets = spec.sheets
    if not 0 <= arc_index < len(sheets):
        raise IndexError(f"sheet index {arc_index} out of range")
    arc = sheets[arc_index]
    shift = np.zeros(spec.ambient_dim) if translation is None else translation.vector

    def param(r, s):
        r = np.asarray(r, dtype=float)
        return shift + r[..., None] * arc.point(s)

    return param
