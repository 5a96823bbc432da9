"""
The Funk Transform and its Companions

Forward transform M (circle integrals of a grid density), the signed dual M°,
backprojection, the discrete adjoint used by the solver, the normal-operator
kernel and the eigenvalue-decay probe.

The discrete forward map is assembled once per (grid, geometry, mask) as a
sparse matrix whose entries are circle-quadrature weights times bilinear
interpolation weights. Every other discrete operator is derived from that one
matrix, so forward and adjoint are exact transposes of each other.
"""

import math
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import structlog
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import LinearOperator

from ..utils.helpers import format_float, format_table, loglog_slope
from .config import get_config
from .errors import (
    ConjugateFailureError,
    DegenerateInputError,
    FunkValidationError,
    GeometryMismatchError,
    TooLargeError,
)
from .fields import (
    TINY,
    GridDensity,
    Sinogram,
    ball_mask,
    bilinear_weights,
    cell_centers,
    inner_product_Sigma,
    inner_product_X,
)
from .geometry import (
    ScanGeometry,
    SphericalIncidence,
    cutoff_eval,
    shared_surfaces,
    wedge_coefficient,
)

logger = structlog.get_logger(__name__)

MIN_CIRCLE_POINTS = 64
POINTS_PER_CELL = 4
# |w| below this means the wedge form degenerates at a shared surface
WEDGE_TOL = 1e-12


def circle_points(radius: float, grid_step: float) -> int:
    """N_q(r) = max(64, ceil(4·2πr/h))."""
    return max(MIN_CIRCLE_POINTS, int(math.ceil(POINTS_PER_CELL * 2.0 * math.pi * radius / grid_step)))


# ---------------------------------------------------------------------------
# Assembled forward operator
# ---------------------------------------------------------------------------


class FunkOperator:
    """
    Sparse discrete M on an nx × ny grid for one scan geometry.

    Row index is i·n_radii + j for sample (t_i, r_j); column index is iy·nx + ix.
    With a support mask the columns off K are zeroed, so the operator acts on
    K-supported densities only.
    """

    def __init__(
        self,
        geom: ScanGeometry,
        nx: int,
        ny: int,
        mask: Optional[np.ndarray] = None,
        threads: int = 1,
    ):
        if nx <= 0 or ny <= 0:
            raise FunkValidationError(f"Grid dimensions must be positive, got {nx}×{ny}")
        if geom.r_max <= 0.0:
            raise GeometryMismatchError("Radius window lies entirely at r ≤ 0")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (ny, nx):
                raise FunkValidationError(f"Mask shape {mask.shape} does not match grid {(ny, nx)}")

        self.geom = geom
        self.nx = nx
        self.ny = ny
        self.mask = mask
        self.cell_area = (2.0 / nx) * (2.0 / ny)
        self.grid_step = min(2.0 / nx, 2.0 / ny)

        # densities live in the open ball; cells outside it are never unknowns
        self.support = ball_mask(nx, ny) if mask is None else mask & ball_mask(nx, ny)

        start = time.time()
        matrix = self._assemble(max(1, int(threads)))
        matrix = (matrix @ sp.diags(self.support.ravel().astype(float))).tocsr()
        matrix.eliminate_zeros()
        self.matrix: sp.csr_matrix = matrix
        self.matrix_t: sp.csr_matrix = matrix.T.tocsr()

        # quadrature weights of dΣ, with and without the cutoff ε
        self.sigma_weights = geom.sample_weights().ravel()
        self.energy_weights = (geom.sample_weights() * geom.cutoff_values()[:, None]).ravel()

        logger.info(
            "Forward operator assembled",
            nx=nx,
            ny=ny,
            n_detectors=geom.n_detectors,
            n_radii=geom.n_radii,
            nnz=int(matrix.nnz),
            masked=mask is not None,
            threads=threads,
            seconds=round(time.time() - start, 3),
        )

    # -- assembly -----------------------------------------------------------

    def _assemble_detector(self, index: int) -> sp.csr_matrix:
        geom = self.geom
        t = float(geom.detector_angles()[index])
        center = geom.detector_radius * np.array([math.cos(t), math.sin(t)])
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        data: List[np.ndarray] = []

        for j, r in enumerate(geom.radii()):
            # circles that miss the unit ball carry no mass
            if r <= geom.detector_radius - 1.0 or r >= geom.detector_radius + 1.0:
                continue
            n_points = circle_points(r, self.grid_step)
            angles = t + 2.0 * np.pi * np.arange(n_points) / n_points
            points = center + r * np.stack([np.cos(angles), np.sin(angles)], axis=1)
            points = points[points[:, 0] ** 2 + points[:, 1] ** 2 < 1.0]
            if points.shape[0] == 0:
                continue
            indices, weights = bilinear_weights(self.nx, self.ny, points)
            weights = weights * (2.0 * np.pi * r / n_points)
            keep = weights != 0.0
            cols.append(indices[keep])
            data.append(weights[keep])
            rows.append(np.full(int(keep.sum()), j, dtype=np.int64))

        shape = (geom.n_radii, self.nx * self.ny)
        if not rows:
            return sp.csr_matrix(shape)
        block = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        )
        # coo → csr sums duplicate (row, col) entries
        return block.tocsr()

    def _assemble(self, threads: int) -> sp.csr_matrix:
        detectors = range(self.geom.n_detectors)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                blocks = list(pool.map(self._assemble_detector, detectors))
        else:
            blocks = [self._assemble_detector(i) for i in detectors]
        return sp.vstack(blocks, format="csr")

    # -- applications on raw arrays -------------------------------------------

    @property
    def domain_shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def range_shape(self) -> Tuple[int, int]:
        return self.geom.shape

    def forward_values(self, values: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(values, dtype=float).ravel()).reshape(self.range_shape)

    def adjoint_values(self, values: np.ndarray) -> np.ndarray:
        """
        Transpose of M for ⟨·,·⟩_X on the grid and the ε-weighted ⟨·,·⟩_Σ.

        ⟨M f, ε u⟩_Σ = ⟨f, M* u⟩_X holds exactly.
        """
        weighted = self.energy_weights * np.asarray(values, dtype=float).ravel()
        return (self.matrix_t @ weighted).reshape(self.domain_shape) / self.cell_area

    def normal_values(self, values: np.ndarray) -> np.ndarray:
        """M*εM f."""
        return self.adjoint_values(self.forward_values(values))

    def normal_operator(self) -> LinearOperator:
        """M*εM on flattened grids as a scipy LinearOperator (self-adjoint in ⟨·,·⟩_X)."""
        size = self.nx * self.ny
        return LinearOperator(
            shape=(size, size),
            matvec=lambda v: self.normal_values(v.reshape(self.domain_shape)).ravel(),
            rmatvec=lambda v: self.normal_values(v.reshape(self.domain_shape)).ravel(),
            dtype=float,
        )

    def support_cells(self) -> np.ndarray:
        """Flat indices of the cells the operator acts on."""
        return np.flatnonzero(self.support.ravel())

    def normal_matrix(self, cells: Optional[np.ndarray] = None) -> np.ndarray:
        """Dense symmetric M*εM restricted to `cells` (flat indices)."""
        if cells is None:
            cells = self.support_cells()
        block = self.matrix[:, cells].toarray()
        gram = block.T @ (self.energy_weights[:, None] * block) / self.cell_area
        return 0.5 * (gram + gram.T)

    # -- typed applications -----------------------------------------------

    def _check_grid(self, f: GridDensity) -> None:
        if f.shape != self.domain_shape:
            raise GeometryMismatchError(f"Grid {f.shape} does not match operator grid {self.domain_shape}")

    def _check_sinogram(self, u: Sinogram) -> None:
        if u.geom != self.geom:
            raise GeometryMismatchError("Sinogram geometry differs from the operator geometry")

    def apply(self, f: GridDensity) -> Sinogram:
        self._check_grid(f)
        return Sinogram(self.geom, self.forward_values(f.values), "function")

    def adjoint(self, u: Sinogram) -> GridDensity:
        self._check_sinogram(u)
        return GridDensity(self.adjoint_values(u.values), self.mask)


_operator_cache: "OrderedDict[tuple, FunkOperator]" = OrderedDict()
_operator_lock = threading.Lock()


def get_operator(
    geom: ScanGeometry,
    nx: int,
    ny: int,
    mask: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> FunkOperator:
    """
    Assembled operator for (geometry, grid, mask), from a small LRU cache.

    Args:
        geom: scan geometry
        nx, ny: grid size
        mask: optional boolean (ny, nx) support mask K
        threads: assembly threads (defaults to the runtime setting)

    Returns:
        FunkOperator
    """
    runtime = get_config().runtime
    mask_key = None if mask is None else np.asarray(mask, dtype=bool).tobytes()
    key = (geom.to_json(), nx, ny, mask_key)

    with _operator_lock:
        cached = _operator_cache.get(key)
        if cached is not None:
            _operator_cache.move_to_end(key)
            return cached

    operator = FunkOperator(geom, nx, ny, mask, threads or runtime.threads)

    with _operator_lock:
        _operator_cache[key] = operator
        while len(_operator_cache) > runtime.operator_cache_size:
            _operator_cache.popitem(last=False)
    return operator


def clear_operator_cache() -> None:
    with _operator_lock:
        _operator_cache.clear()


# ---------------------------------------------------------------------------
# Forward, dual and backprojection
# ---------------------------------------------------------------------------


def forward(f: GridDensity, geom: ScanGeometry) -> Sinogram:
    """
    Mf(t_i, r_j): integral of f₀ over the circle |x − y(t_i)| = r_j.

    Each circle is sampled at N_q(r) equispaced angles with arc-length weight
    2πr/N_q and f₀ is interpolated bilinearly.
    """
    if geom.r_max <= 0.0:
        raise GeometryMismatchError("Radius window lies entirely at r ≤ 0")
    return get_operator(geom, f.nx, f.ny).apply(f)


def _detector_sum(values: np.ndarray, geom: ScanGeometry, nx: int, ny: int) -> np.ndarray:
    """Σ_i R_det·Δt_i · values(t_i, |x − y_i|) at every cell centre inside the ball."""
    xs, ys = cell_centers(nx, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    inside = gx ** 2 + gy ** 2 < 1.0
    px, py = gx[inside], gy[inside]

    radii = geom.radii()
    total = np.zeros(px.shape)
    # ascending detector index keeps the summation order fixed
    for weight, position, row in zip(geom.detector_weights(), geom.detector_positions(), values):
        distance = np.hypot(px - position[0], py - position[1])
        total += weight * np.interp(distance, radii, row, left=0.0, right=0.0)

    result = np.zeros((ny, nx))
    result[inside] = total
    return result


def dual(u: Sinogram, geom: ScanGeometry, nx: int, ny: int) -> GridDensity:
    """
    M°u(x) = −∫ u(t, |x − y(t)|) dS(y) for a density u on Σ.

    Args:
        u: sinogram of kind "density"
        geom: geometry u was sampled on
        nx, ny: output grid

    Returns:
        GridDensity, zero outside the unit ball
    """
    if u.geom != geom:
        raise GeometryMismatchError("Sinogram geometry differs from the requested geometry")
    if u.kind != "density":
        raise FunkValidationError("dual expects a sinogram of kind 'density'")
    return GridDensity(-_detector_sum(u.values, geom, nx, ny))


def backproject(u: Sinogram, geom: ScanGeometry, nx: int, ny: int) -> GridDensity:
    """M*u = M°(u·ε·dΣ): the dual applied to the cutoff-weighted function u."""
    if u.geom != geom:
        raise GeometryMismatchError("Sinogram geometry differs from the requested geometry")
    if u.kind != "function":
        raise FunkValidationError("backproject expects a sinogram of kind 'function'")
    weighted = u.values * geom.cutoff_values()[:, None]
    return dual(Sinogram(geom, weighted, "density"), geom, nx, ny)


def adjoint_residual(f: GridDensity, u: Sinogram, geom: ScanGeometry) -> float:
    """
    |⟨Mf, u⟩_Σ + ⟨f, M°u⟩_X| / (‖f‖‖u‖): the discrete defect of the duality M ↔ −M°.
    """
    image = forward(f, geom)
    lhs = inner_product_Sigma(image, u.as_kind("function"))
    rhs = inner_product_X(f, dual(u, geom, f.nx, f.ny))
    residual = abs(lhs + rhs) / (f.norm() * u.norm() + TINY)
    logger.debug("Adjoint residual", pairing=lhs, dual_pairing=rhs, residual=residual)
    return residual


# ---------------------------------------------------------------------------
# Normal-operator kernel
# ---------------------------------------------------------------------------


def normal_kernel(x, y, geom: ScanGeometry) -> float:
    """
    A(y, x) = Σ ε(t)/|w(σ)| over σ = (t, r) in F(x) ∩ F(y).

    w is the wedge of d_σI(y, σ) and d_σI(x, σ) relative to R_det dt ∧ dr. The
    magnitude fixes the orientation so that A > 0; an empty intersection gives 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if float(np.hypot(*(x - y))) == 0.0:
        raise DegenerateInputError("normal_kernel needs x ≠ y")

    model = SphericalIncidence(geom.detector_radius)
    profile = geom.cutoff
    total = 0.0
    for sigma in shared_surfaces(x, y, geom):
        w = wedge_coefficient(model, x, y, sigma, geom)
        if abs(w) < WEDGE_TOL:
            raise ConjugateFailureError(
                f"Wedge form vanishes at t={sigma[0]:.6g}, r={sigma[1]:.6g}; x and y are conjugate"
            )
        total += cutoff_eval(profile, sigma[0], geom) / abs(w)
    return total


class NormalProbeReport(BaseModel):
    """Kernel samples A(y₀, y₀ + d·u) and the fit A ≈ a(y₀)·d^slope."""

    base_point: Tuple[float, float]
    direction: Tuple[float, float]
    distances: List[float]
    values: List[float]
    slope: float
    constant: float
    residual: float

    model_config = ConfigDict(frozen=True)

    def to_table(self) -> str:
        rows = list(zip(self.distances, self.values))
        summary = (
            f"# slope {format_float(self.slope)} constant {format_float(self.constant)} "
            f"residual {format_float(self.residual)}\n"
        )
        return format_table(["distance", "kernel"], rows) + summary


def kernel_probe(y0, direction, distances, geom: ScanGeometry) -> NormalProbeReport:
    """
    Sample the normal kernel along a ray from y₀ and fit a log-log slope.

    The fit covers only the sampled distances.
    """
    y0 = np.asarray(y0, dtype=float).reshape(2)
    u = np.asarray(direction, dtype=float).reshape(2)
    length = float(np.hypot(*u))
    if length == 0.0:
        raise FunkValidationError("Probe direction must be nonzero")
    u = u / length
    distances = [float(d) for d in distances]
    if any(d <= 0.0 for d in distances):
        raise FunkValidationError("Probe distances must be positive")

    values = [normal_kernel(y0 + d * u, y0, geom) for d in distances]
    positive = [(d, v) for d, v in zip(distances, values) if v > 0.0]
    if len(positive) < 2:
        raise FunkValidationError("Kernel vanishes along the probe ray; nothing to fit")
    slope, constant, residual = loglog_slope(*zip(*positive))

    logger.info("Kernel probe finished", base_point=y0.tolist(), samples=len(distances), slope=slope)

    return NormalProbeReport(
        base_point=(float(y0[0]), float(y0[1])),
        direction=(float(u[0]), float(u[1])),
        distances=distances,
        values=values,
        slope=slope,
        constant=constant,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# Spectrum probe
# ---------------------------------------------------------------------------


class SpectrumReport(BaseModel):
    """Eigenvalues of the discrete normal operator, decreasing, with a decay fit."""

    eigenvalues: List[float]
    k_window: Tuple[int, int]
    slope: float
    constant: float
    residual: float
    cells: int

    model_config = ConfigDict(frozen=True)

    def to_table(self) -> str:
        rows = [(k, value) for k, value in enumerate(self.eigenvalues, start=1)]
        summary = (
            f"# slope {format_float(self.slope)} over k in [{self.k_window[0]}, {self.k_window[1]}] "
            f"residual {format_float(self.residual)}\n"
        )
        return format_table(["k", "lambda"], rows) + summary


def spectrum_probe(
    geom: ScanGeometry,
    nx: int,
    ny: int,
    mask: Optional[np.ndarray] = None,
    k_window: Tuple[int, int] = (10, 100),
) -> SpectrumReport:
    """
    Assemble M*εM on the masked cells densely and fit log λ_k against log k.

    Args:
        geom: scan geometry
        nx, ny: grid size
        mask: support K (defaults to the open unit ball)
        k_window: inclusive 1-based index window of the fit

    Returns:
        SpectrumReport
    """
    operator = get_operator(geom, nx, ny, mask)
    cells = operator.support_cells()
    limit = get_config().runtime.spectrum_max_cells
    if cells.size > limit:
        raise TooLargeError(f"{cells.size} support cells exceed the dense assembly limit of {limit}")
    if cells.size == 0:
        raise FunkValidationError("Support mask selects no cells")

    k_lo, k_hi = int(k_window[0]), int(k_window[1])
    if not 1 <= k_lo < k_hi:
        raise FunkValidationError(f"Bad eigenvalue window [{k_lo}, {k_hi}]")
    k_hi = min(k_hi, int(cells.size))
    if k_lo >= k_hi:
        raise FunkValidationError(f"Eigenvalue window starts beyond the {cells.size} available eigenvalues")

    eigenvalues = scipy.linalg.eigvalsh(operator.normal_matrix(cells))[::-1]
    ks = np.arange(k_lo, k_hi + 1)
    window = eigenvalues[k_lo - 1:k_hi]
    keep = window > 0.0
    slope, constant, residual = loglog_slope(ks[keep], window[keep])

    logger.info("Spectrum probe finished", cells=int(cells.size), lambda_max=float(eigenvalues[0]), slope=slope)

    return SpectrumReport(
        eigenvalues=[float(v) for v in eigenvalues],
        k_window=(k_lo, k_hi),
        slope=slope,
        constant=constant,
        residual=residual,
        cells=int(cells.size),
    )
