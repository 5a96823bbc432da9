"""
Discrete Fields on X and Σ

Cell-centred densities on the unit ball's bounding box, sampled functions on the
measurement grid, their quadrature inner products, bilinear interpolation,
phantom construction and the plain-text grid/sinogram file formats.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from .errors import (
    DimensionMismatchError,
    FunkValidationError,
    MalformedHeaderError,
    NonFiniteValueError,
    ShapeMismatchError,
    SupportViolationError,
)
from .geometry import ScanGeometry
from ..utils.helpers import format_float

logger = structlog.get_logger(__name__)

GRID_MAGIC = "funkgrid"
SINO_MAGIC = "funksino"
TINY = 1e-300

MaskName = Literal["ball", "half-ball"]
SinogramKind = Literal["function", "density"]


# ---------------------------------------------------------------------------
# Grids and masks
# ---------------------------------------------------------------------------


def cell_centers(nx: int, ny: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cell-centre coordinates of an nx × ny grid over [−1, 1]²."""
    xs = -1.0 + (np.arange(nx) + 0.5) * (2.0 / nx)
    ys = -1.0 + (np.arange(ny) + 0.5) * (2.0 / ny)
    return xs, ys


def _center_mesh(nx: int, ny: int) -> Tuple[np.ndarray, np.ndarray]:
    xs, ys = cell_centers(nx, ny)
    return np.meshgrid(xs, ys, indexing="xy")


def ball_mask(nx: int, ny: int) -> np.ndarray:
    """Cells whose centre lies in the open unit ball."""
    gx, gy = _center_mesh(nx, ny)
    return gx ** 2 + gy ** 2 < 1.0


def half_ball_mask(nx: int, ny: int) -> np.ndarray:
    """K = {|x| ≤ 1, x₁ ≥ 0} restricted to the open ball's cells."""
    gx, _ = _center_mesh(nx, ny)
    return ball_mask(nx, ny) & (gx >= 0.0)


def named_mask(name: Optional[str], nx: int, ny: int) -> Optional[np.ndarray]:
    if name is None:
        return None
    if name == "ball":
        return ball_mask(nx, ny)
    if name == "half-ball":
        return half_ball_mask(nx, ny)
    raise FunkValidationError(f"Unknown support mask: {name}")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=array.dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GridDensity:
    """
    Density f = f₀ dX sampled at cell centres, values[iy, ix] (y-major rows).

    With a support mask the values vanish off the mask.
    """

    values: np.ndarray
    support_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or min(values.shape) <= 0:
            raise ShapeMismatchError(f"Grid values must be a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("Grid values contain NaN or infinity")
        object.__setattr__(self, "values", _frozen(values))
        if self.support_mask is not None:
            mask = np.asarray(self.support_mask, dtype=bool)
            if mask.shape != values.shape:
                raise ShapeMismatchError("Support mask shape differs from the grid")
            if np.any(values[~mask] != 0.0):
                raise SupportViolationError("Density does not vanish off its support mask")
            object.__setattr__(self, "support_mask", _frozen(mask))

    @classmethod
    def zeros(cls, nx: int, ny: int, support_mask: Optional[np.ndarray] = None) -> "GridDensity":
        return cls(np.zeros((ny, nx)), support_mask)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def cell_area(self) -> float:
        return (2.0 / self.nx) * (2.0 / self.ny)

    def norm(self) -> float:
        return math.sqrt(inner_product_X(self, self))

    def with_values(self, values: np.ndarray) -> "GridDensity":
        """Same grid and mask, new values (zeroed off the mask)."""
        values = np.asarray(values, dtype=float)
        if self.support_mask is not None:
            values = np.where(self.support_mask, values, 0.0)
        return GridDensity(values, self.support_mask)


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Samples g(t_i, r_j) on the measurement grid of `geom`."""

    geom: ScanGeometry
    values: np.ndarray
    kind: SinogramKind = "function"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.geom.shape:
            raise ShapeMismatchError(
                f"Sinogram shape {values.shape} does not match geometry {self.geom.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("Sinogram contains NaN or infinity")
        if self.kind not in ("function", "density"):
            raise FunkValidationError(f"Unknown sinogram kind: {self.kind}")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, geom: ScanGeometry, kind: SinogramKind = "function") -> "Sinogram":
        return cls(geom, np.zeros(geom.shape), kind)

    def as_kind(self, kind: SinogramKind) -> "Sinogram":
        return Sinogram(self.geom, self.values, kind)

    def with_values(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(self.geom, values, self.kind)

    def norm(self) -> float:
        return math.sqrt(inner_product_Sigma(self, self))


# ---------------------------------------------------------------------------
# Interpolation and quadrature
# ---------------------------------------------------------------------------


def bilinear_weights(nx: int, ny: int, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bilinear stencil of the cell-centred grid with zero padding.

    Points outside the open unit ball get an all-zero stencil.

    Args:
        nx, ny: grid size
        points: (N, 2) array

    Returns:
        (indices, weights), both (N, 4); indices are flat (iy * nx + ix)
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    u = (points[:, 0] + 1.0) * (nx / 2.0) - 0.5
    v = (points[:, 1] + 1.0) * (ny / 2.0) - 0.5
    i0 = np.floor(u).astype(np.int64)
    j0 = np.floor(v).astype(np.int64)
    fu = u - i0
    fv = v - j0

    cols = np.stack([i0, i0 + 1, i0, i0 + 1], axis=1)
    rows = np.stack([j0, j0, j0 + 1, j0 + 1], axis=1)
    weights = np.stack(
        [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv], axis=1
    )
    inside = (points[:, 0] ** 2 + points[:, 1] ** 2 < 1.0)[:, None]
    valid = (cols >= 0) & (cols < nx) & (rows >= 0) & (rows < ny) & inside
    weights = np.where(valid, weights, 0.0)
    indices = np.where(valid, rows * nx + cols, 0)
    return indices, weights


def sample_many(f: GridDensity, points: np.ndarray) -> np.ndarray:
    indices, weights = bilinear_weights(f.nx, f.ny, points)
    return np.sum(f.values.ravel()[indices] * weights, axis=1)


def sample(f: GridDensity, x) -> float:
    """Bilinear interpolation of f₀; zero outside the grid and the unit ball."""
    return float(sample_many(f, np.asarray(x, dtype=float).reshape(1, 2))[0])


def inner_product_X(f: GridDensity, g: GridDensity) -> float:
    """Cell-area weighted sum of f₀ g₀."""
    if f.shape != g.shape:
        raise ShapeMismatchError(f"Grid shapes differ: {f.shape} vs {g.shape}")
    return float(f.cell_area * np.sum(f.values * g.values))


def inner_product_Sigma(u: Sinogram, v: Sinogram) -> float:
    """Quadrature of u v against dΣ = R_det dt dr."""
    if u.geom != v.geom:
        raise ShapeMismatchError("Sinograms live on different measurement grids")
    return float(np.sum(u.geom.sample_weights() * u.values * v.values))


def lambda_support(geom: ScanGeometry, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Samples (t_i, r_j) whose circle meets K, i.e. Λ = π(p⁻¹(K)).

    Without a mask K is the closed unit ball; with a cell mask the circle must pass
    within half a cell diagonal of a masked cell centre.
    """
    radii = geom.radii()
    positions = geom.detector_positions()
    if mask is None:
        near = np.full(geom.n_detectors, geom.detector_radius - 1.0)
        far = np.full(geom.n_detectors, geom.detector_radius + 1.0)
        return (radii[None, :] >= near[:, None]) & (radii[None, :] <= far[:, None])

    ny, nx = mask.shape
    gx, gy = _center_mesh(nx, ny)
    centers = np.stack([gx[mask], gy[mask]], axis=1)
    if centers.size == 0:
        return np.zeros(geom.shape, dtype=bool)
    pad = 0.5 * math.hypot(2.0 / nx, 2.0 / ny)
    support = np.zeros(geom.shape, dtype=bool)
    for i, y in enumerate(positions):
        dist = np.hypot(centers[:, 0] - y[0], centers[:, 1] - y[1])
        support[i] = (radii >= dist.min() - pad) & (radii <= dist.max() + pad)
    return support


# ---------------------------------------------------------------------------
# Phantoms
# ---------------------------------------------------------------------------


class DiskPrimitive(BaseModel):
    kind: Literal["disk"] = "disk"
    center: Tuple[float, float]
    radius: float = Field(gt=0.0)
    amplitude: float = 1.0

    model_config = ConfigDict(frozen=True)

    @property
    def extent(self) -> float:
        return math.hypot(*self.center) + self.radius

    def evaluate(self, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        inside = (gx - self.center[0]) ** 2 + (gy - self.center[1]) ** 2 <= self.radius ** 2
        return np.where(inside, self.amplitude, 0.0)


class GaussianPrimitive(BaseModel):
    """Gaussian bump truncated at three widths."""

    kind: Literal["gaussian"] = "gaussian"
    center: Tuple[float, float]
    width: float = Field(gt=0.0)
    amplitude: float = 1.0

    model_config = ConfigDict(frozen=True)

    @property
    def extent(self) -> float:
        return math.hypot(*self.center) + 3.0 * self.width

    def evaluate(self, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        r2 = (gx - self.center[0]) ** 2 + (gy - self.center[1]) ** 2
        bump = self.amplitude * np.exp(-0.5 * r2 / self.width ** 2)
        return np.where(r2 <= (3.0 * self.width) ** 2, bump, 0.0)


Primitive = Union[DiskPrimitive, GaussianPrimitive]


class PhantomSpec(BaseModel):
    """A sum of disks and truncated gaussians, optionally restricted to a support set K."""

    primitives: List[Primitive] = Field(default_factory=list)
    seed: Optional[int] = None
    mask: Optional[MaskName] = None

    model_config = ConfigDict(frozen=True)

    def check_support(self) -> None:
        for primitive in self.primitives:
            if primitive.extent >= 1.0:
                raise SupportViolationError(
                    f"{primitive.kind} primitive at {primitive.center} leaks outside the unit ball"
                )

    @classmethod
    def parse(cls, text: str, mask: Optional[str] = None) -> "PhantomSpec":
        """
        Parse `disk:cx,cy,radius,amp;gauss:cx,cy,width,amp` (amplitude optional).
        """
        primitives: List[Primitive] = []
        for item in filter(None, (part.strip() for part in text.split(";"))):
            name, _, args = item.partition(":")
            try:
                numbers = [float(a) for a in args.split(",")]
            except ValueError as e:
                raise FunkValidationError(f"Bad phantom primitive '{item}': {e}")
            if len(numbers) not in (3, 4):
                raise FunkValidationError(f"Phantom primitive '{item}' needs 3 or 4 numbers")
            amplitude = numbers[3] if len(numbers) == 4 else 1.0
            center = (numbers[0], numbers[1])
            if name == "disk":
                primitives.append(DiskPrimitive(center=center, radius=numbers[2], amplitude=amplitude))
            elif name in ("gauss", "gaussian"):
                primitives.append(GaussianPrimitive(center=center, width=numbers[2], amplitude=amplitude))
            else:
                raise FunkValidationError(f"Unknown phantom primitive: {name}")
        return cls(primitives=primitives, mask=mask)

    @classmethod
    def random(cls, n_gaussians: int, seed: int, mask: Optional[str] = None) -> "PhantomSpec":
        """Seeded random gaussians, each fully inside the unit ball."""
        rng = np.random.default_rng(seed)
        primitives: List[Primitive] = []
        for _ in range(n_gaussians):
            width = float(rng.uniform(0.05, 0.15))
            reach = 0.95 - 3.0 * width
            radius = reach * math.sqrt(float(rng.uniform(0.0, 1.0)))
            angle = float(rng.uniform(0.0, 2.0 * math.pi))
            primitives.append(
                GaussianPrimitive(
                    center=(radius * math.cos(angle), radius * math.sin(angle)),
                    width=width,
                    amplitude=float(rng.uniform(0.5, 1.5)),
                )
            )
        return cls(primitives=primitives, seed=seed, mask=mask)


def make_phantom(spec: PhantomSpec, nx: int, ny: int) -> GridDensity:
    """Evaluate the primitives at cell centres, zero outside the open ball and off K."""
    spec.check_support()
    gx, gy = _center_mesh(nx, ny)
    values = np.zeros((ny, nx))
    for primitive in spec.primitives:
        values += primitive.evaluate(gx, gy)
    values = np.where(ball_mask(nx, ny), values, 0.0)
    mask = named_mask(spec.mask, nx, ny)
    if mask is not None:
        values = np.where(mask, values, 0.0)
    logger.debug("Phantom evaluated", primitives=len(spec.primitives), nx=nx, ny=ny, mask=spec.mask)
    return GridDensity(values, mask)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _format_rows(values: np.ndarray) -> str:
    return "".join(" ".join(format_float(v) for v in row) + "\n" for row in values)


def _parse_rows(lines: List[str], n_rows: int, n_cols: int, path: Path) -> np.ndarray:
    rows = [line.split() for line in lines if line.strip()]
    if len(rows) != n_rows:
        raise DimensionMismatchError(f"{path}: expected {n_rows} rows, found {len(rows)}")
    for index, row in enumerate(rows):
        if len(row) != n_cols:
            raise DimensionMismatchError(f"{path}: row {index} has {len(row)} values, expected {n_cols}")
    try:
        values = np.array([[float(token) for token in row] for row in rows])
    except ValueError as e:
        raise FunkValidationError(f"{path}: unparseable value ({e})")
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError(f"{path}: file contains NaN or infinity")
    return values


def _positive_int(token: str, name: str, path: Path) -> int:
    try:
        value = int(token)
    except ValueError:
        raise MalformedHeaderError(f"{path}: {name} is not an integer: {token}")
    if value <= 0:
        raise MalformedHeaderError(f"{path}: {name} must be positive, got {value}")
    return value


def write_grid(f: GridDensity, path: Union[str, Path]) -> None:
    path = Path(path)
    header = f"{GRID_MAGIC} 2 {f.nx} {f.ny} -1 1 -1 1\n"
    path.write_text(header + _format_rows(f.values))
    logger.info("Grid written", path=str(path), nx=f.nx, ny=f.ny)


def read_grid(path: Union[str, Path]) -> GridDensity:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise MalformedHeaderError(f"{path}: empty file")
    tokens = lines[0].split()
    if len(tokens) != 8 or tokens[0] != GRID_MAGIC or tokens[1] != "2":
        raise MalformedHeaderError(f"{path}: expected '{GRID_MAGIC} 2 <nx> <ny> -1 1 -1 1'")
    nx = _positive_int(tokens[2], "nx", path)
    ny = _positive_int(tokens[3], "ny", path)
    try:
        bounds = [float(token) for token in tokens[4:]]
    except ValueError:
        raise MalformedHeaderError(f"{path}: bounds are not numbers")
    if bounds != [-1.0, 1.0, -1.0, 1.0]:
        raise MalformedHeaderError(f"{path}: grid bounds must be [-1, 1]^2")
    return GridDensity(_parse_rows(lines[1:], ny, nx, path))


def write_sinogram(g: Sinogram, path: Union[str, Path]) -> None:
    path = Path(path)
    geom = g.geom
    delta = "full" if geom.is_full else format_float(geom.delta)
    header = " ".join(
        [
            SINO_MAGIC,
            str(geom.n_detectors),
            str(geom.n_radii),
            format_float(geom.detector_radius),
            format_float(geom.r_min),
            format_float(geom.r_max),
            delta,
        ]
    )
    path.write_text(header + "\n" + _format_rows(g.values))
    logger.info("Sinogram written", path=str(path), n_detectors=geom.n_detectors, n_radii=geom.n_radii)


def read_sinogram(path: Union[str, Path], kind: SinogramKind = "function") -> Sinogram:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise MalformedHeaderError(f"{path}: empty file")
    tokens = lines[0].split()
    if len(tokens) != 7 or tokens[0] != SINO_MAGIC:
        raise MalformedHeaderError(
            f"{path}: expected '{SINO_MAGIC} <n_detectors> <n_radii> <R_det> <r_min> <r_max> <delta|full>'"
        )
    n_detectors = _positive_int(tokens[1], "n_detectors", path)
    n_radii = _positive_int(tokens[2], "n_radii", path)
    try:
        radius, r_min, r_max = (float(token) for token in tokens[3:6])
        delta = None if tokens[6] == "full" else float(tokens[6])
    except ValueError:
        raise MalformedHeaderError(f"{path}: geometry fields are not numbers")
    try:
        geom = ScanGeometry(
            detector_radius=radius,
            delta=delta,
            n_detectors=n_detectors,
            r_min=r_min,
            r_max=r_max,
            n_radii=n_radii,
        )
    except ValueError as e:
        raise MalformedHeaderError(f"{path}: invalid geometry ({e})")
    return Sinogram(geom, _parse_rows(lines[1:], n_detectors, n_radii, path), kind)
