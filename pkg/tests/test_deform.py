import json

import numpy as np
import pytest

from conestab.cones import build_cone
from conestab.deform import (DeformError, SlidingState, area_descent, area_gradient, boundary_flags, cone_mesh,
                             fd_gradient, projected_gradient, random_sliding_perturbation, stability_experiment)
from conestab.measure import clipped_cone_area, slice_mesh
from conestab.stability import slice_connectivity

E3 = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def states(domains):
    return {k: SlidingState.start(d, cone_mesh(d, resolution=1), d.R1) for k, d in domains.items()}


def test_cone_mesh_y_converges(dom_y, expected):
    areas = [cone_mesh(dom_y, resolution=r).area for r in (1, 3, 5)]
    assert np.all(np.diff(areas) > 0)
    assert abs(areas[-1] - expected["y_analytic/0.1"]) < 1e-3


def test_cone_mesh_plane_boundary_circle(dom_plane):
    mesh = cone_mesh(dom_plane, resolution=2)
    loops = mesh.boundary_loops
    assert len(loops) == 1
    V = mesh.vertices[loops[0]]
    assert np.allclose(np.linalg.norm(V, axis=1), 0.9, atol=1e-14) and np.allclose(V[:, 2], 0)


def test_cone_mesh_t_spines(dom_t):
    mesh = cone_mesh(dom_t, resolution=1)
    T = mesh.triangles
    # count triangles per edge: spine edges carry three sheets
    keys = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    spine = uniq[counts == 3]
    P = mesh.vertices[np.unique(spine)]
    A = dom_t.spec.singular_dirs
    along = np.abs(P @ A.T).argmax(axis=1)
    for j in range(4):
        pts = P[along == j]
        assert np.allclose(np.linalg.norm(np.cross(pts, A[j]), axis=1), 0, atol=1e-12)
        assert np.max(pts @ A[j]) == pytest.approx(dom_t.plate_level, abs=1e-12)
    # each spine is a chain of edges from the apex to the plate
    assert len(spine) == 4 * int(np.sum((along == 0) & (np.linalg.norm(P, axis=1) > 0)))
    assert np.allclose(dom_t.gauge(mesh.vertices[boundary_flags(dom_t, mesh)]), 1, atol=1e-12)


def test_cone_mesh_area_below_exact(domains):
    for dom in domains.values():
        assert cone_mesh(dom, resolution=1).area < clipped_cone_area(dom).value


def test_cone_mesh_rejects_negative_resolution(dom_y):
    with pytest.raises(DeformError):
        cone_mesh(dom_y, resolution=-1)


@pytest.mark.parametrize("kind", ["plane", "y", "t"])
def test_gradient_matches_finite_differences(states, kind):
    rng = np.random.default_rng(7)
    st = random_sliding_perturbation(states[kind], 0.05, seed=2)
    G = area_gradient(st.mesh)
    for v in rng.choice(len(st.mesh.vertices), 20, replace=False):
        fd = fd_gradient(st.mesh, int(v))
        assert np.linalg.norm(G[v] - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-3)


def test_perturbation_amplitude_zero_is_identity(states):
    st = states["y"]
    assert random_sliding_perturbation(st, 0.0, seed=1) is st


@pytest.mark.parametrize("kind", ["plane", "y", "t"])
def test_perturbation_respects_sliding_constraints(states, kind):
    st = states[kind]
    new = random_sliding_perturbation(st, 0.01, seed=3)
    new.check()
    assert 0 < new.max_boundary_drift < st.delta
    assert new.max_boundary_drift <= 0.01 * 1.5
    assert np.abs(new.mesh.vertices - st.mesh.vertices).max() <= 0.01 + 1e-12


def test_perturbation_bad_amplitude(states):
    with pytest.raises(DeformError):
        random_sliding_perturbation(states["y"], states["y"].delta, seed=0)


def test_perturbed_y_slices_still_connect(states):
    new = random_sliding_perturbation(states["y"], 0.03, seed=4)
    for h in (-0.4, 0.0, 0.35):
        p = slice_mesh(new.mesh, E3, h)
        assert len(p.gates) == 3
        assert slice_connectivity(p, p.gates)


def test_pinned_boundary_does_not_move(dom_t):
    st = SlidingState.start(dom_t, cone_mesh(dom_t, resolution=1), dom_t.R1, pin_boundary=True)
    new = random_sliding_perturbation(st, 0.05, seed=0)
    assert new.max_boundary_drift == 0.0
    assert new.area > st.area


def test_state_rejects_bad_delta(dom_y):
    with pytest.raises(DeformError):
        SlidingState.start(dom_y, cone_mesh(dom_y, resolution=0), 0.5)


@pytest.mark.parametrize("kind", ["plane", "y", "t"])
def test_unperturbed_cone_is_stationary(states, domains, kind):
    st = states[kind]
    g = float(np.linalg.norm(projected_gradient(st)))
    disc = abs(st.area - clipped_cone_area(domains[kind]).value)
    assert g <= 10 * disc
    trace, final = area_descent(st, max_iter=100)
    assert abs(final.area - st.area) < 1e-6


@pytest.mark.parametrize("kind", ["plane", "y", "t"])
def test_descent_returns_to_cone(states, kind):
    st = states[kind]
    pert = random_sliding_perturbation(st, 0.05, seed=11)
    trace, final = area_descent(pert, max_iter=300)
    final.check()
    assert np.all(np.diff(trace.areas) <= 1e-15)
    assert final.area >= st.area - 1e-3
    assert abs(final.area - st.area) < 1e-3
    assert trace.terminal_reason in ("Converged", "MaxIter", "ConstraintHit")
    rows = trace.rows()
    assert rows[0][0] == 0 and len(rows[0]) == 5


def test_stability_experiment_summary(tmp_path):
    s = stability_experiment(build_cone("y"), 0.1, trials=2, seed=5, out_dir=tmp_path)
    assert s.passed and len(s.final_areas) == 2 and s.stationary
    d = s.to_dict()
    assert d["pass"] is True and d["min_area"] == s.min_area
    json.dumps(d)
    assert s.min_area >= s.cone_area - 1e-3
