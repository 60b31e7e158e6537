"""Numerical verification of stability properties of the minimal cones plane, Y and T."""
from .cones import ConeSpec, Translation, build_cone, build_plane, build_t, build_y, sheet_parametrization
from .deform import SlidingState, area_descent, cone_mesh, random_sliding_perturbation, stability_experiment
from .domain import BoundaryRegion, ConvexDomain, SlidingNeighborhood, membership, minkowski_functional
from .geom import Polyline, SphericalArc, TriangleMesh, arc_sample, cone_fan_area, mesh_area, orthogonal_project
from .measure import ClippedConeMeasure, SliceProfile, clipped_cone_area, coarea_lower_bound, mc_cone_area_oracle
from .stability import (BandSpec, LabeledSurface, PlateSpec, band_constant_check, calibration_functional,
                        fermat_lower_bound, measure_stability_scan, plate_constant_check, recentered_cone_gap,
                        slice_connectivity, t_calibration_identity, viviani_sum)

__all__ = [
    "BandSpec", "BoundaryRegion", "ClippedConeMeasure", "ConeSpec", "ConvexDomain", "LabeledSurface", "PlateSpec",
    "Polyline", "SliceProfile", "SlidingNeighborhood", "SlidingState", "SphericalArc", "Translation",
    "TriangleMesh", "arc_sample", "area_descent", "band_constant_check", "build_cone", "build_plane", "build_t",
    "build_y", "calibration_functional", "clipped_cone_area", "coarea_lower_bound", "cone_fan_area", "cone_mesh",
    "fermat_lower_bound", "mc_cone_area_oracle", "measure_stability_scan", "membership", "mesh_area",
    "minkowski_functional", "orthogonal_project", "plate_constant_check", "random_sliding_perturbation",
    "recentered_cone_gap", "sheet_parametrization", "slice_connectivity", "stability_experiment",
    "t_calibration_identity", "viviani_sum",
]
