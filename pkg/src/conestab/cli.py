"""Command-line front end: ``conestab build|verify|minimize``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .boundary import boundary_mesh
from .cones import build_cone
from .deform import DeformError, SlidingState, cone_mesh, random_sliding_perturbation, stability_experiment
from .domain import ConvexDomain, DomainError
from .geom import GeometryError, cylinder_mesh, normalize
from .measure import MeasureError, coarea_lower_bound
from .meshio import write_obj
from . import stability as st

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

CHECKS = ("viviani", "band-constant", "plate-constant", "measure-scan", "quadratic-remainder", "coarea",
          "calibration-identity", "calibration-bound")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    cone: str = "y"
    dim: int = 3
    eta: float = 0.1
    delta: float | None = None
    budget: int = 20
    resolution: int = 3
    seed: int = 0
    checks: tuple[str, ...] = CHECKS
    trials: int = 10
    out_dir: str = "out"
    amplitude: float = 0.05
    tol_rel: float = 1e-4
    tolerance: float | None = None

    def validate(self) -> ConvexDomain:
        """Check the parameter regime and return the domain."""
        if self.cone not in ("plane", "y", "t"):
            raise UsageError(f"unknown cone {self.cone!r}; choose plane, y or t")
        if self.dim < 3:
            raise UsageError("ambient dimension must be at least 3")
        try:
            dom = ConvexDomain(build_cone(self.cone, self.dim), self.eta)
        except DomainError as exc:
            raise UsageError(str(exc)) from None
        if self.delta is not None and not 0 < self.delta <= dom.R1 + 1e-12:
            raise UsageError(f"delta={self.delta} must lie in (0, R1(eta)={dom.R1:.6g}]")
        for name in ("tol_rel", "amplitude"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive")
        if self.tolerance is not None and self.tolerance <= 0:
            raise UsageError("tolerance must be positive")
        unknown = [c for c in self.checks if c not in CHECKS]
        if unknown:
            raise UsageError(f"unknown check(s) {', '.join(unknown)}; available: {', '.join(CHECKS)}")
        return dom


def _coerce(name: str, raw):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise UsageError(f"unknown config key {name!r}")
    if raw is None or isinstance(raw, (int, float, tuple)) and not isinstance(raw, bool):
        return raw
    raw = str(raw).strip().strip('"').strip("'")
    kind = kinds[name]
    try:
        if name == "checks":
            return tuple(c.strip() for c in raw.split(",") if c.strip())
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return None if raw.lower() in ("", "none") else float(raw)
    except ValueError:
        raise UsageError(f"bad value {raw!r} for {name}") from None
    return raw


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment, ``[section]`` headers are ignored."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def make_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(read_config(args.config))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _coerce(f.name, v)
    return RunConfig(**values)


# -- reports ---------------------------------------------------------------------

@dataclass
class VerificationReport:
    """Result of one check.  ``pass`` is ``all(value <= limit)`` over ``comparisons``."""

    check: str
    paper_ref: str
    params: dict
    quantities: dict
    tolerance: float
    comparisons: dict[str, tuple[float, float]] = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(np.isfinite(v) and v <= lim for v, lim in self.comparisons.values())

    def to_dict(self, with_runtime: bool = False) -> dict:
        d = {"check": self.check, "paper_ref": self.paper_ref, "params": self.params,
             "quantities": self.quantities, "tolerance": self.tolerance,
             "comparisons": {k: {"value": v, "limit": lim} for k, (v, lim) in self.comparisons.items()},
             "pass": self.passed}
        if with_runtime:
            d["runtime"] = self.runtime
        return d


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r] for r in rows])


def _random_directions(rng, count: int, n: int) -> np.ndarray:
    Q = rng.normal(size=(count, n))
    return Q / np.linalg.norm(Q, axis=1, keepdims=True)


# -- checks ----------------------------------------------------------------------

def check_viviani(cfg: RunConfig, dom: ConvexDomain, out: Path) -> VerificationReport:
    rng = np.random.default_rng(cfg.seed)
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    w = rng.dirichlet(np.ones(3), size=1000)
    sums = np.array([st.viviani_sum(tri, p) for p in w @ tri])
    spread = float(np.ptp(sums))
    err = float(np.max(np.abs(sums - np.sqrt(3) / 2)))
    return VerificationReport("viviani", "distance sum to the sides of an equilateral triangle is constant",
                              {"points": 1000, "side": 1.0}, {"spread": spread, "max_error_vs_height": err},
                              1e-12, {"spread": (spread, 1e-12), "max_error_vs_height": (err, 1e-12)})


def check_band(cfg: RunConfig, dom: ConvexDomain, out: Path) -> VerificationReport:
    rng = np.random.default_rng(cfg.seed)
    rows, spread, err = [], 0.0, 0.0
    for alpha in (np.pi / 6, np.pi / 4, np.pi / 2):
        for theta in (np.pi / 2, np.pi):
            band = st.BandSpec.from_eta(theta, alpha, cfg.eta)
            lhs = []
            for _ in range(100):
                lhs_i, rhs = st.band_constant_check(band, rng.choice([-1, 1], size=(32, 4)))
                lhs.append(lhs_i)
            lhs = np.array(lhs)
            s, e = float(np.ptp(lhs) / rhs), float(np.max(np.abs(lhs - rhs)) / rhs)
            spread, err = max(spread, s), max(err, e)
            rows.append({"alpha": alpha, "theta": theta, "rhs": rhs, "lhs_mean": float(lhs.mean()),
                         "spread": s, "error": e})
    return VerificationReport("band-constant", "projected band area equals 2 sin(alpha) sin(theta/2)/theta "
                              "times the band area for every +/- partition",
                              {"eta": cfg.eta, "partitions": 100}, {"cases": rows, "spread": spread, "error": err},
                              1e-6, {"spread": (spread, 1e-6), "error": (err, 1e-6)})


def check_plate(cfg: RunConfig, dom: ConvexDomain, out: Path) -> VerificationReport:
    y = dom if dom.spec.kind == "y" and dom.n == 3 else ConvexDomain(build_cone("y", 3), cfg.eta)
    rng = np.random.default_rng(cfg.seed)
    alpha = np.pi / 5
    plate = st.PlateSpec.from_domain(y, alpha)
    cells = st.plate_cells(plate, 48, 8)
    lhs = np.array([st.plate_constant_check(plate, rng.integers(0, 3, cells.shape), cells)[0]
                    for _ in range(100)])
    rhs = float(np.cos(alpha) * plate.area)
    spread, err = float(np.ptp(lhs)), float(np.max(np.abs(lhs - rhs)))
    return VerificationReport("plate-constant", "projected plate area over three tilted planes equals "
                              "cos(alpha) times the plate area for every 3-coloring",
                              {"eta": cfg.eta, "alpha": alpha, "colorings": 100},
                              {"rhs": rhs, "plate_area": plate.area, "spread": spread, "error": err},
                              1e-10, {"spread": (spread, 1e-10), "error": (err, 1e-10)})


def check_scan(cfg: RunConfig, dom: ConvexDomain, out: Path) -> VerificationReport:
    rng = np.random.default_rng(cfg.seed)
    grid = np.linspace(-dom.eta / 2, dom.eta / 2, 11)
    rows, worst, worst_slope = [], 0.0, 0.0
    tol = cfg.tol_rel
    for k, q in enumerate(_random_directions(rng, 5, dom.n)):
        scan = st.measure_stability_scan(dom, q, grid, cfg.budget, cfg.tol_rel)
        worst = max(worst, scan.max_relative_variation)
        tol = max(tol, scan.tol_rel)
        worst_slope = max(worst_slope, abs(scan.fitted_quadratic[1]) / scan.tol_slope)
        rows += [(k, *q, t, a, e) for t, a, e in scan.samples]
    _write_csv(out / f"scan_{dom.spec.kind}.csv", ["scan", *[f"q{i}" for i in range(dom.n)], "t", "area", "error"],
               rows)
    return VerificationReport("measure-scan", "clipped cone area is invariant under small translations",
                              {"cone": dom.spec.kind, "eta": dom.eta, "directions": 5, "grid": grid,
                               "budget": cfg.budget},
                              {"max_relative_variation": worst, "max_slope_over_tolerance": worst_slope},
                              tol, {"max_relative_variation": (worst, tol), "max_slope_over_tolerance": (worst_slope, 1.0)})


REMAINDER_DIRECTION = (0.48, 0.6, 0.64)


def check_remainder(cfg: RunConfig, dom: ConvexDomain, out: Path) -> VerificationReport:
    q = normalize(np.pad(REMAINDER_DIRECTION, (0, dom.n - 3)))
    s_list = [0.04, 0.02, 0.01, 0.005]
    t0 = 0.02
    if t0 + max(s_list) >= dom.eta:
        scale = 0.8 * dom.eta / (t0 + max(s_list))
        t0, s_list = t0 * scale, [s * scale for s in s_list]
    r = st.recentered_cone_gap(dom, q, t0, s_list)
    _write_csv(out / f"remainder_{dom.spec.kind}.csv", ["s", "gap", "plate_gap"],
               zip(r.s_values, r.gaps, r.plate_gaps))
    comps = {"slope_deficit": (1.9 - r.slope, 0.0)}
    if dom.spec.m:
        excess = float(np.max(np.abs(r.plate_gaps) / (r.plate_bound_coefficient * r.s_values ** 2)))
        comps["plate_gap_over_bound"] = (excess, 1.0)
    return VerificationReport("quadratic-remainder", "area gap between re-centred cones is quadratic in s",
                              {"cone": dom.spec.kind, "eta": dom.eta, "t0": t0, "s": s_list, "q": q},
                              {"gaps": r.gaps, "slope": r.slope, "plate_gaps": r.plate_gaps,
                               "plate_bound_coefficient": r.plate_bound_coefficient}, 1.9, comps)


def check_coarea(cfg: RunConfig, dom: ConvexDomain, out: Path, meshes: int = 100) -> VerificationReport:
    axis = np.zeros(dom.n)
    axis[0 if dom.spec.kind == "plane" else 2] = 1.0  # the Y spine; any in-plane axis for the plane
    if dom.n != 3:
        raise UsageError("the coarea check runs in R^3")
    ref = cone_mesh(dom, resolution=1)
    state = SlidingState.start(dom, ref, dom.R1 if cfg.delta is None else cfg.delta)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(meshes)
    ratios = []
    for s in seeds:
        m = random_sliding_perturbation(state, min(cfg.amplitude, 0.5 * state.delta), int(s)).mesh
        ratios.append(coarea_lower_bound(m, axis).value / m.area)
    cyl = cylinder_mesh(0.5, 1.0, 64, 8)
    c = coarea_lower_bound(cyl, np.eye(3)[2])
    cyl_err = abs(c.value - cyl.area) / cyl.area
    worst = float(max(ratios))
    return VerificationReport("coarea", "integral of slice lengths is at most the surface area",
                              {"cone": dom.spec.kind, "eta": dom.eta, "meshes": meshes, "axis": axis},
                              {"max_ratio": worst, "min_ratio": float(min(ratios)), "cylinder_error": cyl_err},
                              1e-3, {"max_ratio": (worst, 1 + 1e-3), "cylinder_error": (cyl_err, 1e-3)})


def _require_t(dom: ConvexDomain, check: str) -> None:
    if dom.spec.kind != "t" or dom.n != 3:
        raise UsageError(f"{check} applies to the T cone in R^3 (use --cone t)")


def check_identity(cfg: RunConfig, dom: ConvexDomain, out: Path) -> VerificationReport:
    _require_t(dom, "calibration-identity")
    ci = st.t_calibration_identity(dom, cfg.resolution)
    fine = st.t_calibration_identity(dom, cfg.resolution + 1)
    ratio = fine.gap / ci.gap if ci.gap > 0 else 0.0
    return VerificationReport("calibration-identity", "clipped T area equals the scaled projected areas of "
                              "the four boundary faces",
                              {"eta": dom.eta, "resolution": cfg.resolution},
                              {"lhs": ci.lhs, "rhs": ci.rhs, "gap": ci.gap, "rhs_error": ci.rhs_error,
                               "gap_refined": fine.gap, "refinement_ratio": ratio,
                               "minority_flux_fraction": ci.minority_flux_fraction},
                              1e-3, {"gap": (ci.gap, 1e-3), "refinement_ratio": (ratio, 0.5),
                                     "minority_flux_fraction": (ci.minority_flux_fraction, 1e-9)})


def check_bound(cfg: RunConfig, dom: ConvexDomain, out: Path, competitors: int = 20) -> VerificationReport:
    _require_t(dom, "calibration-bound")
    res = min(cfg.resolution, 2)
    ref = cone_mesh(dom, resolution=res)
    base = st.calibration_functional(st.t_labeled_surface(dom, res, reference=ref))
    state = SlidingState.start(dom, ref, dom.R1, pin_boundary=True)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(competitors)
    rows = []
    for s in seeds:
        m = random_sliding_perturbation(state, cfg.amplitude, int(s)).mesh
        r = st.calibration_functional(st.t_labeled_surface(dom, res, interior=m, reference=ref))
        rows.append((r.flux, r.bound, r.closure_defect))
    flux, bound, _ = np.array(rows).T
    excess = float(np.max(flux - bound))
    min_slack = float(np.min(1 - flux / bound))
    base_gap = abs(1 - base.ratio)
    return VerificationReport("calibration-bound", "flux of the region fields is at most the scaled "
                              "interface area, with equality only for T",
                              {"eta": dom.eta, "resolution": res, "competitors": competitors,
                               "amplitude": cfg.amplitude},
                              {"unperturbed_flux": base.flux, "unperturbed_bound": base.bound,
                               "unperturbed_gap": base_gap, "max_flux_minus_bound": excess,
                               "min_relative_slack": min_slack, "max_closure_defect": float(np.max(rows, axis=0)[2])},
                              1e-3, {"max_flux_minus_bound": (excess, 1e-12), "unperturbed_gap": (base_gap, 1e-3),
                                     "strictness": (-min_slack, -1e-3)})


CHECK_FUNCS = {"viviani": check_viviani, "band-constant": check_band, "plate-constant": check_plate,
               "measure-scan": check_scan, "quadratic-remainder": check_remainder, "coarea": check_coarea,
               "calibration-identity": check_identity, "calibration-bound": check_bound}


# -- commands --------------------------------------------------------------------

def cmd_build(cfg: RunConfig) -> int:
    dom = cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.cone}.json").write_text(dom.spec.to_json() + "\n")
    (out / "domain.json").write_text(dom.to_json() + "\n")
    if dom.n == 3:
        bm = boundary_mesh(dom, cfg.resolution)
        write_obj(bm.mesh, out / "boundary.obj")
        _write_csv(out / "boundary_labels.csv", ["triangle", "region", "face"], bm.label_rows())
    else:
        logger.warning("boundary mesh skipped: meshes are built in R^3 only")
    print(f"built {cfg.cone} (n={dom.n}, eta={dom.eta}) in {out}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    dom = cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for name in cfg.checks:
        t = time.perf_counter()
        report = CHECK_FUNCS[name](cfg, dom, out)
        report.runtime = time.perf_counter() - t
        _dump(out / f"report_{name}.json", report.to_dict())
        print(f"{'PASS' if report.passed else 'FAIL'} {name} ({report.runtime:.2f} s)")
        if not report.passed:
            status = EXIT_FAIL
    return status


def cmd_minimize(cfg: RunConfig) -> int:
    dom = cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = stability_experiment(dom.spec, dom.eta, cfg.delta, cfg.trials, cfg.seed, cfg.amplitude,
                                   tolerance=cfg.tolerance, out_dir=out)
    rows = [(i, *r) for i, trace in enumerate(summary.traces) for r in trace.rows()]
    _write_csv(out / f"trace_{cfg.cone}.csv", ["trial", "iteration", "step", "area", "grad_norm", "drift"], rows)
    _dump(out / f"minimize_{cfg.cone}.json", summary.to_dict())
    print(f"{'PASS' if summary.passed else 'FAIL'} minimize {cfg.cone}: min final area {summary.min_area:.8f}, "
          f"cone area {summary.cone_area:.8f}, tolerance {summary.tolerance:g}")
    return EXIT_OK if summary.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conestab", description="Stability checks for the minimal cones plane, Y, T.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cone", choices=("plane", "y", "t"))
    common.add_argument("--dim", type=int)
    common.add_argument("--eta", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--budget", type=int)
    common.add_argument("--resolution", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--config", help="key = value file; flags override it")
    sub.add_parser("build", parents=[common], help="write cone, domain and boundary mesh files")
    v = sub.add_parser("verify", parents=[common], help="run verification checks")
    v.add_argument("--checks", help=f"comma-separated subset of {','.join(CHECKS)}")
    v.add_argument("--tol-rel", dest="tol_rel", type=float)
    m = sub.add_parser("minimize", parents=[common], help="perturb and descend the cone mesh")
    m.add_argument("--trials", type=int)
    m.add_argument("--amplitude", type=float)
    m.add_argument("--tolerance", type=float)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    commands = {"build": cmd_build, "verify": cmd_verify, "minimize": cmd_minimize}
    try:
        cfg = make_config(args)
        return commands[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DeformError, DomainError, MeasureError, GeometryError, st.CheckError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
