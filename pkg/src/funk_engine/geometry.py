"""
Incidence Geometry and Scan Configurations

Incidence models I(x, σ) for the circle family centred on the detector circle,
full and partial scan geometries with their cutoff profiles, and the geometric
well-posedness diagnostics: the Φ-determinant of the incidence function and the
conjugate-point gap between two points of the object domain.

The measurement space Σ is parameterised by σ = (t, r): detector angle t on the
circle of radius R_det and circle radius r. Its area form is dΣ = R_det dt ∧ dr.
"""

import json
import math
from abc import ABC, abstractmethod
from typing import List, Literal, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..utils.helpers import parse_key_values
from .config import get_config
from .errors import DegenerateInputError, FunkValidationError

logger = structlog.get_logger(__name__)

# distances below this are treated as coincident points
COINCIDENCE_TOL = 1e-14

CutoffKind = Literal["constant-one", "smooth-partial"]


def _as_point(x) -> np.ndarray:
    point = np.asarray(x, dtype=float).reshape(2)
    return point


def detector_position(t: float, detector_radius: float) -> np.ndarray:
    return detector_radius * np.array([math.cos(t), math.sin(t)])


def detector_tangent(t: float, detector_radius: float) -> np.ndarray:
    """Derivative of y(t) with respect to the detector angle."""
    return detector_radius * np.array([-math.sin(t), math.cos(t)])


# ---------------------------------------------------------------------------
# Incidence models
# ---------------------------------------------------------------------------


class IncidenceModel(ABC):
    """Defining function I(x, σ) of the incidence manifold F ⊂ X × Σ."""

    @abstractmethod
    def evaluate(self, x, sigma) -> float:
        ...

    @abstractmethod
    def grad_x(self, x, sigma) -> np.ndarray:
        ...

    @abstractmethod
    def grad_sigma(self, x, sigma) -> np.ndarray:
        ...

    @abstractmethod
    def mixed_hessian(self, x, sigma) -> np.ndarray:
        """Matrix H[i, j] = ∂²I / ∂x_i ∂σ_j."""


class SphericalIncidence(IncidenceModel):
    """I(x; t, r) = |y(t) − x| − r with y(t) = R_det (cos t, sin t)."""

    def __init__(self, detector_radius: float):
        if detector_radius <= 1.0:
            raise FunkValidationError("Detector radius must exceed the unit ball radius")
        self.detector_radius = float(detector_radius)

    def _offset(self, x, sigma) -> Tuple[np.ndarray, float, np.ndarray]:
        t = float(sigma[0])
        y = detector_position(t, self.detector_radius)
        d = y - _as_point(x)
        rho = float(np.hypot(d[0], d[1]))
        if rho < COINCIDENCE_TOL:
            raise DegenerateInputError("x coincides with the detector y(t); |y - x| is not differentiable")
        return d, rho, detector_tangent(t, self.detector_radius)

    def evaluate(self, x, sigma) -> float:
        t, r = float(sigma[0]), float(sigma[1])
        y = detector_position(t, self.detector_radius)
        return float(np.hypot(*(y - _as_point(x)))) - r

    def grad_x(self, x, sigma) -> np.ndarray:
        d, rho, _ = self._offset(x, sigma)
        return -d / rho

    def grad_sigma(self, x, sigma) -> np.ndarray:
        d, rho, tangent = self._offset(x, sigma)
        return np.array([float(d @ tangent) / rho, -1.0])

    def mixed_hessian(self, x, sigma) -> np.ndarray:
        d, rho, tangent = self._offset(x, sigma)
        unit = -d / rho
        # ∂_t of the unit vector (x - y)/|x - y|; nothing depends on r
        d_unit_dt = (-tangent + unit * float(unit @ tangent)) / rho
        hessian = np.zeros((2, 2))
        hessian[:, 0] = d_unit_dt
        return hessian


class NegatedIncidence(IncidenceModel):
    """The same incidence manifold described by −I."""

    def __init__(self, base: IncidenceModel):
        self.base = base

    def evaluate(self, x, sigma) -> float:
        return -self.base.evaluate(x, sigma)

    def grad_x(self, x, sigma) -> np.ndarray:
        return -self.base.grad_x(x, sigma)

    def grad_sigma(self, x, sigma) -> np.ndarray:
        return -self.base.grad_sigma(x, sigma)

    def mixed_hessian(self, x, sigma) -> np.ndarray:
        return -self.base.mixed_hessian(x, sigma)


# ---------------------------------------------------------------------------
# Cutoff profiles and scan geometry
# ---------------------------------------------------------------------------


def smoothstep(v):
    """C² ramp s(v) = v³(10 − 15v + 6v²) clipped to [0, 1]."""
    v = np.clip(v, 0.0, 1.0)
    return v ** 3 * (10.0 - 15.0 * v + 6.0 * v ** 2)


class CutoffProfile(BaseModel):
    """Cutoff ε(y) = ε₀(y₁) applied in the detector variable."""

    kind: CutoffKind = "constant-one"
    delta: Optional[float] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_delta(self):
        if self.kind == "smooth-partial" and (self.delta is None or self.delta <= 0.0):
            raise ValueError("smooth-partial cutoff needs a finite delta > 0")
        return self

    def values(self, y1):
        """ε₀ evaluated at detector first coordinates y₁ (scalar or array)."""
        y1 = np.asarray(y1, dtype=float)
        if self.kind == "constant-one":
            return np.ones_like(y1)
        return smoothstep(1.0 + y1 / self.delta)


class ScanGeometry(BaseModel):
    """
    Detector circle, admissible arc and radius window of the measurement grid.

    `delta=None` is the full scan. A partial scan keeps detectors on the closed arc
    {t : R_det cos t ≥ −δ}, sampled uniformly including both end points.
    """

    detector_radius: float = Field(default=1.5, gt=1.0)
    delta: Optional[float] = None
    n_detectors: int = Field(default=180, ge=2)
    r_min: Optional[float] = None
    r_max: Optional[float] = None
    n_radii: int = Field(default=160, ge=2)
    cutoff_kind: Optional[CutoffKind] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="before")
    @classmethod
    def fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        delta = data.get("delta")
        if delta is not None and math.isinf(float(delta)) and float(delta) > 0:
            data["delta"] = delta = None
        radius = float(data.get("detector_radius", 1.5))
        if data.get("r_min") is None:
            data["r_min"] = max(1e-6, radius - 1.0)
        if data.get("r_max") is None:
            data["r_max"] = radius + 1.0
        if data.get("cutoff_kind") is None:
            partial = delta is not None and float(delta) > 0.0
            data["cutoff_kind"] = "smooth-partial" if partial else "constant-one"
        return data

    @model_validator(mode="after")
    def validate_window(self):
        if self.delta is not None:
            if self.delta < 0.0:
                raise ValueError("Partial-scan delta must be non-negative")
            if self.delta >= self.detector_radius:
                raise ValueError("delta >= R_det admits the whole circle; use a full scan")
        if self.r_min <= 0.0:
            raise ValueError("Radii must be strictly positive")
        if self.r_min >= self.r_max:
            raise ValueError("r_min must be smaller than r_max")
        if self.cutoff_kind == "smooth-partial" and not self.delta:
            raise ValueError("smooth-partial cutoff needs a partial scan with delta > 0")
        return self

    # -- sampling -----------------------------------------------------------

    @property
    def is_full(self) -> bool:
        return self.delta is None

    @property
    def cutoff(self) -> CutoffProfile:
        return CutoffProfile(kind=self.cutoff_kind, delta=self.delta)

    @property
    def arc_half_angle(self) -> float:
        if self.is_full:
            return math.pi
        return math.acos(-self.delta / self.detector_radius)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_detectors, self.n_radii)

    def detector_angles(self) -> np.ndarray:
        if self.is_full:
            return 2.0 * np.pi * np.arange(self.n_detectors) / self.n_detectors
        half = self.arc_half_angle
        return np.linspace(-half, half, self.n_detectors)

    def detector_positions(self) -> np.ndarray:
        t = self.detector_angles()
        return self.detector_radius * np.stack([np.cos(t), np.sin(t)], axis=1)

    def detector_weights(self) -> np.ndarray:
        """Arc-length weights R_det·Δt: periodic on the full circle, trapezoid on the arc."""
        if self.is_full:
            return np.full(self.n_detectors, self.detector_radius * 2.0 * np.pi / self.n_detectors)
        step = 2.0 * self.arc_half_angle / (self.n_detectors - 1)
        weights = np.full(self.n_detectors, self.detector_radius * step)
        weights[0] *= 0.5
        weights[-1] *= 0.5
        return weights

    def radii(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.n_radii)

    @property
    def radius_step(self) -> float:
        return (self.r_max - self.r_min) / (self.n_radii - 1)

    def radius_weights(self) -> np.ndarray:
        weights = np.full(self.n_radii, self.radius_step)
        weights[0] *= 0.5
        weights[-1] *= 0.5
        return weights

    def sample_weights(self) -> np.ndarray:
        """Quadrature weight of every (t_i, r_j) sample for dΣ."""
        return np.outer(self.detector_weights(), self.radius_weights())

    def cutoff_values(self) -> np.ndarray:
        return self.cutoff.values(self.detector_radius * np.cos(self.detector_angles()))

    def in_arc(self, t: float) -> bool:
        return self.is_full or self.detector_radius * math.cos(t) >= -self.delta

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScanGeometry":
        return cls.model_validate(json.loads(text))

    @classmethod
    def parse(cls, text: str) -> "ScanGeometry":
        """
        Parse `full:R=..,nd=..,nr=..` or `partial:delta=..,R=..,nd=..,nr=..`.

        Both forms accept `rmin=`, `rmax=` and `cutoff=one|smooth`; missing sampling
        fields fall back to the configured geometry defaults.
        """
        try:
            head, pairs = parse_key_values(text)
        except ValueError as e:
            raise FunkValidationError(f"Bad geometry '{text}': {e}")
        if head not in _SCAN_KINDS:
            raise FunkValidationError(f"Geometry must start with 'full:' or 'partial:', got '{text}'")
        unknown = set(pairs) - set(_GEOMETRY_KEYS)
        if unknown:
            raise FunkValidationError(f"Unknown geometry keys: {', '.join(sorted(unknown))}")

        defaults = get_config().geometry
        fields = {
            "detector_radius": defaults.detector_radius,
            "n_detectors": defaults.n_detectors,
            "n_radii": defaults.n_radii,
        }
        try:
            for key, raw in pairs.items():
                name = _GEOMETRY_KEYS[key]
                if name == "cutoff_kind":
                    if raw not in _CUTOFF_ALIASES:
                        raise FunkValidationError(f"cutoff must be 'one' or 'smooth', got '{raw}'")
                    fields[name] = _CUTOFF_ALIASES[raw]
                elif name in ("n_detectors", "n_radii"):
                    fields[name] = int(raw)
                else:
                    fields[name] = float(raw)
        except ValueError as e:
            if isinstance(e, FunkValidationError):
                raise
            raise FunkValidationError(f"Bad geometry value in '{text}': {e}")

        if head == "full":
            if "delta" in fields:
                raise FunkValidationError("A full scan takes no delta")
        elif "delta" not in fields:
            raise FunkValidationError("A partial scan needs delta=")
        return cls(**fields)


_SCAN_KINDS = ("full", "partial")
_GEOMETRY_KEYS = {
    "R": "detector_radius",
    "delta": "delta",
    "nd": "n_detectors",
    "nr": "n_radii",
    "rmin": "r_min",
    "rmax": "r_max",
    "cutoff": "cutoff_kind",
}
_CUTOFF_ALIASES = {"one": "constant-one", "smooth": "smooth-partial"}


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def phi_matrix(model: IncidenceModel, x, sigma) -> np.ndarray:
    """
    Block matrix [[∂²I/∂x∂σ, d_xI], [d_σI, I]] of the incidence function.

    Args:
        model: incidence model
        x: point of X
        sigma: parameter (t, r)

    Returns:
        (n+1)×(n+1) array
    """
    phi = np.empty((3, 3))
    phi[:2, :2] = model.mixed_hessian(x, sigma)
    phi[:2, 2] = model.grad_x(x, sigma)
    phi[2, :2] = model.grad_sigma(x, sigma)
    phi[2, 2] = model.evaluate(x, sigma)
    return phi


def phi_determinant(model: IncidenceModel, x, sigma) -> float:
    """det Φ; nonzero exactly where the local regularity conditions hold."""
    return float(np.linalg.det(phi_matrix(model, x, sigma)))


def incidence_conditions(model: IncidenceModel, x, sigma) -> Tuple[float, float]:
    """Norms of d_xI and d_σI at (x, σ)."""
    return (
        float(np.linalg.norm(model.grad_x(x, sigma))),
        float(np.linalg.norm(model.grad_sigma(x, sigma))),
    )


def sufficient_condition(t_y: float, t_z: float, geom: ScanGeometry) -> bool:
    """|y + z| > 2 for detectors y = y(t_y), z = y(t_z)."""
    total = detector_position(t_y, geom.detector_radius) + detector_position(t_z, geom.detector_radius)
    return bool(np.hypot(*total) > 2.0)


def cutoff_eval(profile: CutoffProfile, t: float, geom: ScanGeometry) -> float:
    """ε at detector angle t: ε₀(R_det cos t)."""
    return float(profile.values(geom.detector_radius * math.cos(t)))


def shared_surfaces(x, y, geom: ScanGeometry) -> List[Tuple[float, float]]:
    """
    F(x) ∩ F(y) inside the scan window.

    Circles through both points are centred on the perpendicular bisector of [x, y],
    so the parameters are the bisector/detector-circle intersections that lie on the
    admissible arc with radius in [r_min, r_max].

    Returns:
        list of (t, r) with t in [0, 2π)
    """
    x, y = _as_point(x), _as_point(y)
    # fixed point order makes the result independent of argument order
    if (x[0], x[1]) > (y[0], y[1]):
        x, y = y, x
    chord = y - x
    length = float(np.hypot(*chord))
    if length < COINCIDENCE_TOL:
        raise DegenerateInputError("x and y coincide; F(x) ∩ F(y) is not a transversal intersection")
    normal = chord / length
    offset = float(normal @ (0.5 * (x + y)))
    ratio = offset / geom.detector_radius
    if abs(ratio) > 1.0:
        return []
    base = math.atan2(normal[1], normal[0])
    spread = math.acos(ratio)
    candidates = [base - spread] if spread == 0.0 else [base - spread, base + spread]

    surfaces = []
    for t in candidates:
        t = t % (2.0 * math.pi)
        if not geom.in_arc(t):
            continue
        r = float(np.hypot(*(detector_position(t, geom.detector_radius) - x)))
        if geom.r_min <= r <= geom.r_max:
            surfaces.append((t, r))
    return sorted(surfaces)


def wedge_coefficient(model: IncidenceModel, x, y, sigma, geom: ScanGeometry) -> float:
    """d_σI(y, σ) ∧ d_σI(x, σ) divided by dΣ = R_det dt ∧ dr."""
    a = model.grad_sigma(y, sigma)
    b = model.grad_sigma(x, sigma)
    return float(a[0] * b[1] - a[1] * b[0]) / geom.detector_radius


def conjugate_gap(model: IncidenceModel, x, y, geom: ScanGeometry) -> float:
    """
    Smallest |d_σI(x,σ) ∧ d_σI(y,σ)| over σ in F(x) ∩ F(y), relative to dΣ.

    A positive gap certifies that x and y are not conjugate within the scan window;
    an empty intersection gives +inf.
    """
    surfaces = shared_surfaces(x, y, geom)
    if not surfaces:
        return math.inf
    gap = min(abs(wedge_coefficient(model, x, y, sigma, geom)) for sigma in surfaces)
    logger.debug("Conjugate gap evaluated", surfaces=len(surfaces), gap=gap)
    return gap
