"""
Command Handlers for funkrad

One handler per subcommand. Each takes its resolved RunConfig, writes any file
artifacts and returns the report text that follows the config echo line.
"""

import math
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
import structlog

from ..funk_engine.errors import FunkValidationError, NoConvergenceError
from ..funk_engine.fields import (
    PhantomSpec,
    Sinogram,
    make_phantom,
    named_mask,
    read_grid,
    read_sinogram,
    write_grid,
    write_sinogram,
)
from ..funk_engine.geometry import (
    ScanGeometry,
    SphericalIncidence,
    conjugate_gap,
    phi_determinant,
    sufficient_condition,
)
from ..funk_engine.kaczmarz import KaczmarzConfig, reconstruct
from ..funk_engine.range_conditions import (
    build_annihilator,
    hyperplane_check,
    range_residual,
    read_annihilators,
    write_annihilators,
)
from ..funk_engine.transform import adjoint_residual, backproject, forward, kernel_probe, spectrum_probe
from ..utils.helpers import format_float, format_table
from .models import (
    AdjointCheckRun,
    BackprojectRun,
    ForwardRun,
    GeomCheckRun,
    KernelProbeRun,
    PhantomRun,
    RangeBuildRun,
    RangeCheckRun,
    ReconstructRun,
    RunConfig,
    SpectrumRun,
)

logger = structlog.get_logger(__name__)

# interior sampling radius for diagnostics that need points strictly inside the ball
INTERIOR = 0.999


def run_phantom(run: PhantomRun) -> str:
    if run.spec is not None:
        spec = PhantomSpec.parse(run.spec, mask=run.mask)
    else:
        spec = PhantomSpec.random(run.random, run.seed, mask=run.mask)
    write_grid(make_phantom(spec, run.nx, run.ny), run.out)
    return ""


def run_forward(run: ForwardRun) -> str:
    geom = ScanGeometry.parse(run.geom)
    f = read_grid(run.input)
    write_sinogram(forward(f, geom), run.out)
    return ""


def run_backproject(run: BackprojectRun) -> str:
    g = read_sinogram(run.input)
    write_grid(backproject(g, g.geom, run.nx, run.ny), run.out)
    return ""


def smooth_weight(geom: ScanGeometry, seed: int) -> Sinogram:
    """Low-order trigonometric profile in t times a gaussian in r, fixed by the seed."""
    rng = np.random.default_rng(seed)
    cos_amps = rng.uniform(-1.0, 1.0, 3)
    sin_amps = rng.uniform(-1.0, 1.0, 3)
    t = geom.detector_angles()[:, None]
    r = geom.radii()[None, :]
    angular = sum(cos_amps[k] * np.cos(k * t) + sin_amps[k] * np.sin(k * t) for k in range(3))
    radial = np.exp(-(((r - geom.detector_radius) / 0.5) ** 2))
    return Sinogram(geom, angular * radial, "density")


def run_adjoint_check(run: AdjointCheckRun) -> str:
    base = ScanGeometry.parse(run.geom)
    previous: Dict[int, float] = {}
    rows = []
    for level in range(run.levels):
        scale = 2 ** level
        geom = ScanGeometry(
            **{**base.model_dump(), "n_detectors": base.n_detectors * scale, "n_radii": base.n_radii * scale}
        )
        nx, ny = run.nx * scale, run.ny * scale
        for pair in range(run.pairs):
            seed = run.seed + pair
            f = make_phantom(PhantomSpec.random(3, seed), nx, ny)
            residual = adjoint_residual(f, smooth_weight(geom, seed), geom)
            ratio = previous[pair] / residual if pair in previous and residual > 0.0 else None
            previous[pair] = residual
            rows.append((level, nx, geom.n_detectors, geom.n_radii, pair, residual, ratio))
            logger.info("Adjoint check", level=level, pair=pair, residual=residual)
    return format_table(["level", "nx", "n_detectors", "n_radii", "pair", "residual", "ratio"], rows)


def run_reconstruct(run: ReconstructRun) -> str:
    data = read_sinogram(run.input)
    truth = read_grid(run.truth) if run.truth else None
    mask = named_mask(run.mask, run.nx, run.ny)
    cfg = KaczmarzConfig(**run.solver_fields())

    f, report = reconstruct(data, cfg, data.geom, run.nx, run.ny, truth=truth, mask=mask)
    if run.fatal_cg and report.warnings:
        raise NoConvergenceError(report.warnings[0])

    if run.out is not None:
        write_grid(f, run.out)
    return report.to_table() + "# summary: " + report.to_summary_json() + "\n"


def run_range_build(run: RangeBuildRun) -> str:
    annihilator = build_annihilator(run.deg, run.freq, run.amps, run.detector_radius, run.sine)
    if run.out is not None:
        write_annihilators([annihilator], run.out)
        return ""
    return annihilator.to_json() + "\n"


def run_range_check(run: RangeCheckRun) -> str:
    g = read_sinogram(run.input)
    if run.annihilators is not None:
        annihilators = read_annihilators(run.annihilators)
    else:
        annihilators = [build_annihilator(run.deg, run.freq, run.amps, g.geom.detector_radius, run.sine)]

    rows = []
    for index, annihilator in enumerate(annihilators):
        frequencies = "/".join(str(q) for q in sorted({term.frequency for term in annihilator.terms})) or "-"
        rows.append((index, annihilator.degree, frequencies, range_residual(g, annihilator)))
    return format_table(["index", "degree", "frequencies", "residual"], rows)


def run_kernel_probe(run: KernelProbeRun) -> str:
    geom = ScanGeometry.parse(run.geom)
    summary = []
    details: List[str] = []
    for point in run.points:
        report = kernel_probe(point, run.direction, run.distances, geom)
        summary.append((point[0], point[1], report.slope, report.constant, report.residual))
        details.append(f"# point {format_float(point[0])} {format_float(point[1])}\n" + report.to_table())
    return format_table(["x", "y", "slope", "constant", "residual"], summary) + "".join(details)


def run_spectrum(run: SpectrumRun) -> str:
    geom = ScanGeometry.parse(run.geom)
    mask = named_mask(run.mask, run.nx, run.ny)
    return spectrum_probe(geom, run.nx, run.ny, mask, (run.kmin, run.kmax)).to_table()


def _sample_angle(rng: np.random.Generator, geom: ScanGeometry) -> float:
    half = geom.arc_half_angle
    return float(rng.uniform(-half, half))


def run_geom_check(run: GeomCheckRun) -> str:
    geom = ScanGeometry.parse(run.geom)
    model = SphericalIncidence(geom.detector_radius)
    rng = np.random.default_rng(run.seed)

    # det Φ at half-ball points, detector pairs with |y + z| > 2
    det_min = math.inf
    accepted = 0
    for _ in range(1000 * run.samples):
        if accepted == run.samples:
            break
        t_y, t_z = _sample_angle(rng, geom), _sample_angle(rng, geom)
        if not sufficient_condition(t_y, t_z, geom):
            continue
        radius = math.sqrt(float(rng.uniform(0.0, 1.0)))
        angle = float(rng.uniform(-0.5 * math.pi, 0.5 * math.pi))
        x = np.array([radius * math.cos(angle), radius * math.sin(angle)])
        y = geom.detector_radius * np.array([math.cos(t_y), math.sin(t_y)])
        det_min = min(det_min, abs(phi_determinant(model, x, (t_y, float(np.hypot(*(y - x)))))))
        accepted += 1
    if accepted < run.samples:
        raise FunkValidationError("Too few detector pairs satisfy |y + z| > 2 on this arc")

    gap_min = math.inf
    defect_max = 0.0
    for _ in range(run.samples):
        points = []
        for _ in range(2):
            radius = INTERIOR * math.sqrt(float(rng.uniform(0.0, 1.0)))
            angle = float(rng.uniform(0.0, 2.0 * math.pi))
            points.append(np.array([radius * math.cos(angle), radius * math.sin(angle)]))
        gap_min = min(gap_min, conjugate_gap(model, points[0], points[1], geom))
        defect_max = max(defect_max, hyperplane_check(points[0], _sample_angle(rng, geom), geom))

    rows = [
        ("phi_determinant_min_abs", accepted, det_min),
        ("conjugate_gap_min", run.samples, gap_min),
        ("hyperplane_defect_max", run.samples, defect_max),
    ]
    return format_table(["check", "samples", "value"], rows)


COMMANDS: Dict[str, Callable[[RunConfig], str]] = {
    "phantom": run_phantom,
    "forward": run_forward,
    "backproject": run_backproject,
    "adjoint-check": run_adjoint_check,
    "reconstruct": run_reconstruct,
    "range-build": run_range_build,
    "range-check": run_range_check,
    "kernel-probe": run_kernel_probe,
    "spectrum": run_spectrum,
    "geom-check": run_geom_check,
}


def output_path(run: RunConfig):
    """Where the report goes; None means standard output."""
    report = getattr(run, "report", None)
    return Path(report) if report else None
