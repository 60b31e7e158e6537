import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conestab.boundary import boundary_mesh
from conestab.cones import build_plane
from conestab.deform import SlidingState, cone_mesh, random_sliding_perturbation
from conestab.domain import ConvexDomain
from conestab.geom import TriangleMesh
from conestab.measure import SliceProfile, slice_cone
from conestab.stability import (BandSpec, CheckError, LabeledSurface, PlateSpec, RimLine, band_constant_check,
                                calibration_functional, fermat_lower_bound, fermat_point, measure_stability_scan,
                                plate_cells, plate_constant_check, projected_face_areas, recentered_cone_gap,
                                slice_connectivity, t_calibration_identity, t_labeled_surface, viviani_sum,
                                y_rim_lines)

E3 = np.array([0.0, 0.0, 1.0])
Q = np.array([0.48, 0.6, 0.64])
TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])


# -- translation scans

def test_scan_y_along_spine(dom_y):
    scan = measure_stability_scan(dom_y, E3, [-0.05, -0.025, 0, 0.025, 0.05])
    assert scan.passed
    assert scan.max_relative_variation <= 1e-4
    ts = [t for t, _, _ in scan.samples]
    assert ts == sorted(ts)
    assert np.allclose(scan.center_offsets, np.outer(ts, E3))


def test_scan_plane_normal_direction_is_constant(dom_plane):
    scan = measure_stability_scan(dom_plane, E3, np.linspace(-0.05, 0.05, 5))
    assert np.ptp(scan.areas) < 1e-12 and scan.passed


def test_scan_t_random_direction(dom_t, rng):
    q = rng.normal(size=3)
    scan = measure_stability_scan(dom_t, q, np.linspace(-0.05, 0.05, 11))
    assert scan.passed and scan.max_relative_variation <= 1e-4
    assert abs(scan.fitted_quadratic[1]) <= scan.tol_slope


def test_scan_rejects_large_translations(dom_y):
    with pytest.raises(CheckError):
        measure_stability_scan(dom_y, E3, [0.0, 0.1])


# -- quadratic remainder

@pytest.fixture(scope="module")
def remainder(dom_y):
    return recentered_cone_gap(dom_y, Q, 0.02, [0.04, 0.02, 0.01, 0.005])


def test_remainder_is_quadratic(remainder):
    assert remainder.passed and remainder.slope >= 1.9
    quarters = remainder.gaps[:-1] / remainder.gaps[1:]
    assert np.all(np.abs(quarters / 4 - 1) < 0.2)


def test_remainder_plate_bound(remainder, dom_y):
    assert remainder.plate_bound_coefficient == pytest.approx(2 * 3 * dom_y.rim_offset / 2)
    assert remainder.plate_bound_holds
    per_region_total = [sum(g.values()) for g in remainder.region_gaps]
    assert np.allclose(np.abs(per_region_total), remainder.gaps, atol=1e-12)


def test_remainder_zero_shift(dom_y):
    r = recentered_cone_gap(dom_y, Q, 0.0, [0.0, 0.01, 0.02], points_per_piece=500)
    assert r.gaps[0] == 0.0


def test_remainder_input_checks(dom_y):
    with pytest.raises(CheckError):
        recentered_cone_gap(dom_y, Q, 0.02, [0.01, 0.02])
    with pytest.raises(CheckError):
        recentered_cone_gap(dom_y, Q, 0.05, [0.01, 0.02, 0.06])


# -- Viviani and Fermat

def test_viviani_height_and_center():
    h = np.sqrt(3) / 2
    assert viviani_sum(TRI, [0.3, 0.2]) == pytest.approx(h, abs=1e-15)
    center = TRI.mean(axis=0)
    inradius = h / 3
    assert viviani_sum(TRI, center) == pytest.approx(3 * inradius, abs=1e-15)


def test_viviani_random_points(rng):
    P = rng.dirichlet(np.ones(3), size=1000) @ TRI
    sums = np.array([viviani_sum(TRI, p) for p in P])
    assert np.ptp(sums) <= 1e-12


def test_viviani_errors():
    with pytest.raises(CheckError):
        viviani_sum(TRI, [2.0, 2.0])
    with pytest.raises(CheckError):
        viviani_sum(np.array([[0, 0], [2.0, 0], [0.5, 1]]), [0.5, 0.3])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_fermat_point_matches_weiszfeld(xs):
    P = np.array(xs).reshape(3, 2)
    if np.min(np.linalg.norm(P - np.roll(P, 1, axis=0), axis=1)) < 1e-2:
        return
    c = fermat_point(P)
    _, best = oracles.weiszfeld(P)
    assert np.linalg.norm(P - c, axis=1).sum() <= best + 1e-9


def test_fermat_obtuse_returns_vertex():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.1]])
    assert np.array_equal(fermat_point(P), P[0])


def unit_lines(offset=1.0):
    dirs = np.array([[np.cos(a), np.sin(a)] for a in (0, 2 * np.pi / 3, 4 * np.pi / 3)])
    return dirs, [RimLine(d, offset) for d in dirs]


def test_fermat_bound_equilateral_gates():
    dirs, lines = unit_lines()
    assert fermat_lower_bound(dirs, lines) == pytest.approx(3.0, abs=1e-14)


def test_fermat_bound_for_y_slice(dom_y):
    for h in (0.0, 0.3, -0.55):
        p = slice_cone(dom_y, E3, h)
        lines = y_rim_lines(dom_y, h)
        rho = np.sqrt(0.81 - h * h)
        gates = np.array([ln.normal * rho for ln in lines])
        assert fermat_lower_bound(gates, lines) == pytest.approx(p.length, abs=1e-12)


def test_fermat_bound_below_steiner_trees(rng):
    dirs, lines = unit_lines(0.9)
    half = np.sqrt(0.19)  # half-length of each rim segment
    for _ in range(200):
        offs = rng.uniform(-half, half, 3)
        gates = np.array([0.9 * d + o * np.array([-d[1], d[0]]) for d, o in zip(dirs, offs)])
        _, steiner = oracles.weiszfeld(gates)
        assert steiner >= fermat_lower_bound(gates, lines) - 1e-9


def test_fermat_bound_errors():
    dirs, lines = unit_lines()
    with pytest.raises(CheckError):
        fermat_lower_bound(np.array([dirs[0], dirs[0], dirs[2]]), [lines[0], lines[0], lines[2]])
    with pytest.raises(CheckError):
        fermat_lower_bound(2 * dirs, lines)
    with pytest.raises(CheckError):
        fermat_lower_bound(dirs, [RimLine(np.array([1.0, 0]), 1.0)] * 3)
    with pytest.raises(CheckError):
        y_rim_lines(ConvexDomain(build_plane(3), 0.1), 0.0)


# -- slice connectivity

def test_slice_connectivity_of_y(dom_y):
    p = slice_cone(dom_y, E3, 0.2)
    assert slice_connectivity(p, p.gates)


def test_slice_connectivity_missing_sheet(dom_y):
    p = slice_cone(dom_y, E3, 0.2)
    cut = SliceProfile(p.height, p.curve_pieces[1:], p.gates, 0.0, p.segments[1:])
    assert not slice_connectivity(cut, p.gates)


def test_slice_connectivity_empty():
    empty = SliceProfile(0.0, [], np.zeros((0, 3)), 0.0)
    assert not slice_connectivity(empty, np.eye(3))


# -- band constant

def test_band_example_half_circle():
    band = BandSpec.from_eta(np.pi, np.pi / 2, 0.1)
    lhs, rhs = band_constant_check(band, np.ones((16, 2), dtype=int))
    R1 = np.sqrt(0.19)
    assert rhs == pytest.approx(4 * R1, rel=1e-14)
    assert lhs == pytest.approx(4 * R1, rel=1e-12)
    assert rhs == pytest.approx(oracles.band_rhs(np.pi, np.pi / 2, 0.1), rel=1e-14)


def test_band_all_plus_equals_all_minus():
    band = BandSpec.from_eta(np.pi / 2, np.pi / 4, 0.1)
    plus = band_constant_check(band, np.ones((20, 3), dtype=int))[0]
    minus = band_constant_check(band, -np.ones((20, 3), dtype=int))[0]
    assert plus == pytest.approx(minus, rel=1e-15)


def test_band_random_partitions(rng):
    band = BandSpec.from_eta(np.pi / 2, np.pi / 6, 0.1)
    lhs = np.array([band_constant_check(band, rng.choice([-1, 1], (24, 4)))[0] for _ in range(100)])
    rhs = oracles.band_rhs(np.pi / 2, np.pi / 6, 0.1)
    assert np.ptp(lhs) / rhs < 1e-6
    assert np.max(np.abs(lhs - rhs)) / rhs < 1e-6


def test_band_errors():
    with pytest.raises(CheckError):
        BandSpec(0.0, 0.3, 0.2)
    with pytest.raises(CheckError):
        BandSpec(1.0, 2.0, 0.2)
    with pytest.raises(CheckError):
        BandSpec(1.0, 0.3, 0.2, v=np.array([1.0, 0, 0]))
    band = BandSpec(1.0, 0.3, 0.2)
    with pytest.raises(CheckError):
        band_constant_check(band, np.zeros((3, 3)))
    with pytest.raises(CheckError):
        band_constant_check(band, np.ones(4))


def test_band_planes_orthonormal():
    band = BandSpec(2.0, 0.7, 0.3)
    for s in (1, -1):
        P = band.plane(s)
        assert np.allclose(P @ P.T, np.eye(2), atol=1e-15)


# -- plate constant

@pytest.fixture(scope="module")
def plate(dom_y):
    return PlateSpec.from_domain(dom_y, np.pi / 5)


def test_plate_geometry(plate, expected):
    assert plate.area == pytest.approx(expected["plate_area/0.1"], abs=1e-14)
    cells = plate_cells(plate, 36, 6)
    assert cells.sum() == pytest.approx(plate.area, abs=1e-12)
    assert len(plate.angle_knots()) == 6
    for P in plate.planes():
        assert np.allclose(P @ P.T, np.eye(2), atol=1e-15)


def test_plate_alpha_zero(dom_y):
    p0 = PlateSpec.from_domain(dom_y, 0.0)
    cells = plate_cells(p0, 24, 4)
    lhs, rhs = plate_constant_check(p0, np.zeros(cells.shape, int))
    assert lhs == pytest.approx(p0.area, abs=1e-12) and rhs == pytest.approx(p0.area, abs=1e-15)


def test_plate_single_color(plate):
    cells = plate_cells(plate, 24, 4)
    lhs, rhs = plate_constant_check(plate, np.zeros(cells.shape, int), cells)
    assert lhs == pytest.approx(np.cos(np.pi / 5) * plate.area, abs=1e-12)
    assert rhs == pytest.approx(np.cos(np.pi / 5) * plate.area, abs=1e-15)


def test_plate_random_colorings(plate, rng):
    cells = plate_cells(plate, 40, 5)
    lhs = np.array([plate_constant_check(plate, rng.integers(0, 3, cells.shape), cells)[0] for _ in range(100)])
    assert np.ptp(lhs) <= 1e-10
    assert np.max(np.abs(lhs - np.cos(np.pi / 5) * plate.area)) <= 1e-10


def test_plate_errors(plate, dom_t):
    cells = plate_cells(plate, 24, 4)
    with pytest.raises(CheckError):
        plate_constant_check(plate, np.full(cells.shape, 3))
    with pytest.raises(CheckError):
        plate_constant_check(plate, np.zeros((5, 5), int), cells)
    with pytest.raises(CheckError):
        plate_constant_check(plate, np.zeros(cells.shape, int), 0.5 * cells)
    with pytest.raises(CheckError):
        PlateSpec.from_domain(dom_t, 0.3)


# -- tetrahedral calibration

@pytest.fixture(scope="module")
def identity(dom_t):
    return t_calibration_identity(dom_t, 3)


def test_calibration_identity(identity):
    assert identity.gap <= 1e-3
    assert identity.minority_flux_fraction == 0.0
    assert identity.lhs_error < 1e-10


def test_calibration_identity_refines(dom_t, identity):
    fine = t_calibration_identity(dom_t, 4)
    assert fine.gap <= identity.gap / 2


def test_calibration_identity_scaling(dom_t):
    bm = boundary_mesh(dom_t, 2)
    A = dom_t.spec.singular_dirs
    base = projected_face_areas(bm, A)[0].sum()
    lam = 1.7
    scaled = type(bm)(bm.mesh.with_vertices(lam * bm.mesh.vertices), bm.region_codes, bm.regions, bm.face_labels,
                      bm.trace_edges, bm.level)
    assert projected_face_areas(scaled, A)[0].sum() == pytest.approx(lam ** 2 * base, rel=1e-13)


def test_calibration_identity_needs_t(dom_y):
    with pytest.raises(CheckError):
        t_calibration_identity(dom_y)


@pytest.fixture(scope="module")
def labeled(dom_t):
    return t_labeled_surface(dom_t, 2)


def test_labeled_surface_invariants(labeled, dom_t):
    bm = boundary_mesh(dom_t, 2)
    assert labeled.boundary.area == pytest.approx(bm.mesh.area, rel=1e-12)
    assert set(np.unique(labeled.regions)) == {0, 1, 2, 3}
    for j in range(4):
        codes = bm.region_codes[labeled.regions == j]
        assert j not in codes  # D_j avoids plate j
    pairs = labeled.pairs
    assert np.all(pairs[:, 0] != pairs[:, 1])


def test_calibration_equality_at_t(labeled):
    r = calibration_functional(labeled)
    assert abs(1 - r.ratio) <= 1e-3
    assert r.flux == pytest.approx(r.boundary_projection, rel=1e-12)
    assert r.closure_defect < 1e-10


def test_calibration_bulged_competitor(dom_t):
    ref = cone_mesh(dom_t, resolution=2)
    state = SlidingState.start(dom_t, ref, dom_t.R1, pin_boundary=True)
    for seed in range(3):
        m = random_sliding_perturbation(state, 0.05, seed).mesh
        r = calibration_functional(t_labeled_surface(dom_t, 2, interior=m, reference=ref))
        assert r.flux < r.bound
        assert 1 - r.ratio > 1e-3


def test_constant_field_closure(labeled, rng):
    vi, vb = labeled.interior.vector_areas(), labeled.boundary.vector_areas()
    for _ in range(5):
        c = rng.normal(size=3)
        for r in range(4):
            flux = (vb[labeled.regions == r] @ c).sum() + (vi[labeled.pairs[:, 0] == r] @ c).sum() \
                - (vi[labeled.pairs[:, 1] == r] @ c).sum()
            assert abs(flux) < 1e-10


def test_calibration_rejects_open_regions(labeled):
    keep = np.arange(len(labeled.boundary.triangles)) % 50 != 0
    holes = LabeledSurface(labeled.interior, labeled.pairs, labeled.boundary.submesh(keep), labeled.regions[keep],
                           labeled.directions)
    with pytest.raises(CheckError):
        calibration_functional(holes)


def test_labeled_surface_validation(labeled, dom_t):
    with pytest.raises(CheckError):
        LabeledSurface(labeled.interior, labeled.pairs[:-1], labeled.boundary, labeled.regions, labeled.directions)
    bad = labeled.pairs.copy()
    bad[0, 1] = bad[0, 0]
    with pytest.raises(CheckError):
        LabeledSurface(labeled.interior, bad, labeled.boundary, labeled.regions, labeled.directions)
    other = TriangleMesh(np.eye(3), np.array([[0, 1, 2]]))
    with pytest.raises(CheckError):
        t_labeled_surface(dom_t, 2, interior=other)
