"""
Range Conditions for the Circular-Mean Transform

Annihilators φ(y, s) = Σ_j φ_j(y)(s − R²)^j with trigonometric coefficients on
the detector circle, the moment system they must satisfy, and consistency
residuals of sampled data against them.
"""

import json
import math
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import (
    FrequencyTooLowError,
    FunkNumericalError,
    FunkValidationError,
    GeometryMismatchError,
    PartialScanUnsupportedError,
)
from .fields import TINY, Sinogram, inner_product_Sigma
from .geometry import ScanGeometry, detector_position

logger = structlog.get_logger(__name__)

CERTIFICATION_TOL = 1e-10


class AnnihilatorTerm(BaseModel):
    """cos_amp·cos(q t) + sin_amp·sin(q t) contributing to φ_j."""

    j: int = Field(ge=0)
    frequency: int = Field(ge=0)
    cos_amp: float = 0.0
    sin_amp: float = 0.0

    model_config = ConfigDict(frozen=True)


class Annihilator(BaseModel):
    degree: int = Field(ge=0)
    detector_radius: float = Field(gt=1.0)
    terms: List[AnnihilatorTerm] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_terms(self):
        for term in self.terms:
            if term.j > self.degree:
                raise ValueError(f"Term with j={term.j} exceeds degree {self.degree}")
        return self

    def coefficient(self, j: int, t) -> np.ndarray:
        """φ_j at detector angles t."""
        t = np.asarray(t, dtype=float)
        value = np.zeros_like(t)
        for term in self.terms:
            if term.j == j:
                value = value + term.cos_amp * np.cos(term.frequency * t) + term.sin_amp * np.sin(term.frequency * t)
        return value

    def evaluate(self, t, s) -> np.ndarray:
        """φ(y(t), s) = Σ_j φ_j(t)(s − R²)^j, broadcasting t against s."""
        t = np.asarray(t, dtype=float)
        shifted = np.asarray(s, dtype=float) - self.detector_radius ** 2
        total = np.zeros(np.broadcast(t, shifted).shape)
        for j in range(self.degree + 1):
            total = total + self.coefficient(j, t) * shifted ** j
        return total

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True)


class MomentResidualReport(BaseModel):
    """E_m(z) for every order m ≤ 2k at 2m + 1 equispaced directions z."""

    degree: int
    entries: List[Tuple[int, float, float]]

    model_config = ConfigDict(frozen=True)

    @property
    def max_abs(self) -> float:
        return max((abs(value) for _, _, value in self.entries), default=0.0)

    def certified(self, tol: float = CERTIFICATION_TOL) -> bool:
        return self.max_abs <= tol

    def order(self, m: int) -> List[float]:
        return [value for order, _, value in self.entries if order == m]


# ---------------------------------------------------------------------------
# Moment system
# ---------------------------------------------------------------------------


def hyperplane_check(x, t: float, geom: ScanGeometry) -> float:
    """|2⟨x, y⟩ + s − |x|² − R²| with s = |x − y(t)|²."""
    x = np.asarray(x, dtype=float).reshape(2)
    y = detector_position(t, geom.detector_radius)
    s = float(np.sum((x - y) ** 2))
    return abs(2.0 * float(x @ y) + s - float(x @ x) - geom.detector_radius ** 2)


def moment_coefficients(m: int, degree: int) -> List[Tuple[int, int, int]]:
    """
    Terms of E_m as (k', power, coefficient): coefficient·∫φ_{k'}⟨z, y⟩^power dS.

    The coefficient of u^m in (u² − 2u⟨z, y⟩)^{k'} is binom(k', 2k'−m)(−2)^{2k'−m}.
    """
    terms = []
    for k_prime in range((m + 1) // 2, min(m, degree) + 1):
        power = 2 * k_prime - m
        terms.append((k_prime, power, math.comb(k_prime, power) * (-2) ** power))
    return terms


def _moment_integral(a: Annihilator, j: int, power: int, beta: float) -> float:
    """
    ∫ φ_j(y)⟨z, y⟩^power dS(y) for z = (cos β, sin β), integrated exactly.

    ⟨z, y⟩ = R cos(t − β) and cos^p expands into harmonics of order p − 2l.
    """
    radius = a.detector_radius
    scale = radius * radius ** power / 2.0 ** power
    total = 0.0
    for term in a.terms:
        if term.j != j:
            continue
        for l in range(power + 1):
            n = abs(power - 2 * l)
            if n != term.frequency:
                continue
            weight = math.comb(power, l)
            if n == 0:
                total += weight * 2.0 * math.pi * term.cos_amp
            else:
                total += weight * math.pi * (term.cos_amp * math.cos(n * beta) + term.sin_amp * math.sin(n * beta))
    return scale * total


def moment_residuals(a: Annihilator) -> MomentResidualReport:
    """Evaluate every E_m(z), m = 0..2k, at z-angles β_l = 2πl/(2m+1)."""
    entries: List[Tuple[int, float, float]] = []
    for m in range(2 * a.degree + 1):
        terms = moment_coefficients(m, a.degree)
        for index in range(2 * m + 1):
            beta = 2.0 * math.pi * index / (2 * m + 1)
            value = sum(c * _moment_integral(a, k_prime, power, beta) for k_prime, power, c in terms)
            entries.append((m, beta, value))
    report = MomentResidualReport(degree=a.degree, entries=entries)
    logger.debug("Moment residuals evaluated", degree=a.degree, max_abs=report.max_abs)
    return report


def build_annihilator(
    k: int,
    q: int,
    amplitudes: Sequence[float],
    detector_radius: float = 1.5,
    sine: bool = False,
) -> Annihilator:
    """
    φ_j(t) = amplitudes[j]·cos(q t) (or sin) for j = 0..k, certified by moment_residuals.

    Every ⟨z, y⟩^p with p ≤ k only carries harmonics of order ≤ k < q, so each moment
    integral vanishes. For k ≥ 1 this also gives φ₁ zero mean as well as zero linear moments.
    """
    if k < 0:
        raise FunkValidationError("Annihilator degree must be non-negative")
    if q <= k:
        raise FrequencyTooLowError(f"Frequency {q} must exceed the degree {k}")
    if len(amplitudes) != k + 1:
        raise FunkValidationError(f"Expected {k + 1} amplitudes, got {len(amplitudes)}")

    terms = [
        AnnihilatorTerm(
            j=j,
            frequency=q,
            cos_amp=0.0 if sine else float(amp),
            sin_amp=float(amp) if sine else 0.0,
        )
        for j, amp in enumerate(amplitudes)
    ]
    annihilator = Annihilator(degree=k, detector_radius=detector_radius, terms=terms)

    report = moment_residuals(annihilator)
    if not report.certified():
        raise FunkNumericalError(f"Annihilator failed certification: max moment {report.max_abs:.3e}")

    logger.info("Annihilator built", degree=k, frequency=q, max_moment=report.max_abs)
    return annihilator


# ---------------------------------------------------------------------------
# Consistency checks against data
# ---------------------------------------------------------------------------


def _require_full(a: Annihilator, geom: ScanGeometry) -> None:
    if not geom.is_full:
        raise PartialScanUnsupportedError("Range conditions are only available for a full scan")
    if not math.isclose(a.detector_radius, geom.detector_radius, rel_tol=1e-12):
        raise GeometryMismatchError(
            f"Annihilator radius {a.detector_radius} differs from detector radius {geom.detector_radius}"
        )


def annihilation_check(a: Annihilator, x, geom: ScanGeometry) -> float:
    """|Σ_i R·Δt·φ(y(t_i), |x − y(t_i)|²)|, the periodic-trapezoid value of ∫_{F(x)} φ dS."""
    _require_full(a, geom)
    x = np.asarray(x, dtype=float).reshape(2)
    positions = geom.detector_positions()
    s = np.sum((positions - x) ** 2, axis=1)
    values = a.evaluate(geom.detector_angles(), s)
    return abs(float(np.sum(geom.detector_weights() * values)))


def sample_annihilator(a: Annihilator, geom: ScanGeometry) -> Sinogram:
    """φ(y(t_i), r_j²) on the measurement grid."""
    _require_full(a, geom)
    t = geom.detector_angles()[:, None]
    s = geom.radii()[None, :] ** 2
    return Sinogram(geom, a.evaluate(t, s), "function")


def range_residual(g: Sinogram, a: Annihilator) -> float:
    """|⟨g, φ⟩_Σ| / (‖g‖‖φ‖): zero for data in the range of M up to quadrature error."""
    phi = sample_annihilator(a, g.geom)
    g = g.as_kind("function")
    return abs(inner_product_Sigma(g, phi)) / (g.norm() * phi.norm() + TINY)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def write_annihilators(annihilators: Sequence[Annihilator], path: Union[str, Path]) -> None:
    """A single annihilator is written as an object, several as an array."""
    path = Path(path)
    payload = [a.model_dump() for a in annihilators]
    document = payload[0] if len(payload) == 1 else payload
    path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n")
    logger.info("Annihilators written", path=str(path), count=len(payload))


def read_annihilators(path: Union[str, Path]) -> List[Annihilator]:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FunkValidationError(f"{path}: not valid JSON ({e})")
    items = document if isinstance(document, list) else [document]
    return [Annihilator.model_validate(item) for item in items]
