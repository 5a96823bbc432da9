"""
Preconditioned Kaczmarz Reconstruction

Implements the iteration f ← f + ω·M*R⁻¹(φ − Mf) with R = MM* + θI, where M* is
the exact transpose of the assembled forward operator (X inner product on the
grid, ε-weighted inner product on Σ). R is solved by conjugate gradients in the
ε-weighted inner product, for which it is symmetric positive definite.
"""

import json
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..utils.helpers import format_processing_time, format_table
from .config import get_config
from .errors import FunkValidationError, GeometryMismatchError, NoConvergenceError
from .fields import TINY, GridDensity, Sinogram
from .geometry import ScanGeometry
from .transform import FunkOperator, get_operator

logger = structlog.get_logger(__name__)


class KaczmarzConfig(BaseModel):
    """Relaxation, regularisation and stopping controls of one reconstruction."""

    omega: float = 1.0
    theta_rel: float = Field(default=1e-3, gt=0.0)
    max_iters: int = Field(default=50, ge=1)
    stop_tol: float = Field(default=1e-6, ge=0.0)
    cg_tol: float = Field(default=1e-8, gt=0.0)
    cg_max_iters: int = Field(default=400, ge=1)
    power_iters: int = Field(default=30, ge=1)
    seed: int = 0

    model_config = ConfigDict(frozen=True)

    @field_validator("omega")
    @classmethod
    def validate_omega(cls, v):
        if not 0.0 < v < 2.0:
            raise ValueError("Relaxation omega must lie strictly between 0 and 2")
        return v

    @classmethod
    def from_settings(cls, **overrides) -> "KaczmarzConfig":
        """Defaults from FUNKRAD_* solver settings, then explicit overrides."""
        values = get_config().solver.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class CGResult:
    """Outcome of one inner solve of R z = b."""

    solution: Sinogram
    iterations: int
    converged: bool
    relative_residual: float
    residual_norms: List[float] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)


@dataclass
class ConvergenceReport:
    """Per-iteration history of a reconstruction; row 0 is the initial iterate."""

    residual_norms: List[float] = field(default_factory=list)
    error_norms: Optional[List[float]] = None
    cg_iterations: List[int] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    converged: bool = False
    theta: float = 0.0
    lambda_max: float = 0.0
    truth_norm: Optional[float] = None
    final: Optional[GridDensity] = None
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.residual_norms) - 1

    @property
    def relative_error(self) -> Optional[float]:
        if self.error_norms is None or self.truth_norm is None:
            return None
        return self.error_norms[-1] / max(self.truth_norm, TINY)

    def to_table(self) -> str:
        errors = self.error_norms or [None] * len(self.residual_norms)
        rows = [
            (k, self.residual_norms[k], errors[k], self.cg_iterations[k])
            for k in range(len(self.residual_norms))
        ]
        return format_table(["iter", "residual", "error", "cg_iters"], rows)

    def to_summary_json(self) -> str:
        summary = {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": self.residual_norms[-1],
            "final_error": None if self.error_norms is None else self.error_norms[-1],
            "relative_error": self.relative_error,
            "theta": self.theta,
            "lambda_max": self.lambda_max,
            "warnings": self.warnings,
            "config": self.config,
        }
        return json.dumps(summary, sort_keys=True)


# ---------------------------------------------------------------------------
# Operator pieces
# ---------------------------------------------------------------------------


def _operator_for(
    geom: ScanGeometry, nx: int, ny: int, mask: Optional[np.ndarray], operator: Optional[FunkOperator]
) -> FunkOperator:
    if operator is not None:
        if operator.geom != geom or operator.domain_shape != (ny, nx):
            raise GeometryMismatchError("Operator was assembled for a different geometry or grid")
        return operator
    return get_operator(geom, nx, ny, mask)


def _energy_inner(weights: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(weights * a * b))


def discrete_adjoint_apply(
    u: Sinogram,
    geom: ScanGeometry,
    nx: int,
    ny: int,
    mask: Optional[np.ndarray] = None,
    operator: Optional[FunkOperator] = None,
) -> GridDensity:
    """
    Exact transpose of the discrete forward map.

    ⟨forward(f), ε·u⟩_Σ = ⟨f, discrete_adjoint_apply(u)⟩_X for every grid f.
    """
    if u.geom != geom:
        raise GeometryMismatchError("Sinogram geometry differs from the requested geometry")
    if u.kind != "function":
        raise FunkValidationError("discrete_adjoint_apply expects a sinogram of kind 'function'")
    return _operator_for(geom, nx, ny, mask, operator).adjoint(u)


def apply_R(
    u: Sinogram,
    theta: float,
    geom: ScanGeometry,
    nx: int,
    ny: int,
    mask: Optional[np.ndarray] = None,
    operator: Optional[FunkOperator] = None,
) -> Sinogram:
    """R u = M(M* u) + θu."""
    if theta <= 0.0:
        raise FunkValidationError("theta must be positive")
    if u.geom != geom:
        raise GeometryMismatchError("Sinogram geometry differs from the requested geometry")
    op = _operator_for(geom, nx, ny, mask, operator)
    return Sinogram(geom, _apply_R_values(op, u.values, theta), "function")


def _apply_R_values(op: FunkOperator, values: np.ndarray, theta: float) -> np.ndarray:
    return op.forward_values(op.adjoint_values(values)) + theta * values


def solve_R(
    b: Sinogram,
    theta: float,
    cfg: KaczmarzConfig,
    nx: int,
    ny: int,
    mask: Optional[np.ndarray] = None,
    operator: Optional[FunkOperator] = None,
) -> CGResult:
    """
    Solve R z = b by conjugate gradients from z = 0.

    CG runs in ⟨a, b⟩_E = Σ w_Σ ε a b. Samples with ε = 0 decouple from the rest
    and are solved directly afterwards. Stops when ‖Rz − b‖_E ≤ cg_tol·‖b‖_E.

    Raises:
        NoConvergenceError: after cg_max_iters; `.result` holds the last iterate
    """
    if theta <= 0.0:
        raise FunkValidationError("theta must be positive")
    geom = b.geom
    op = _operator_for(geom, nx, ny, mask, operator)
    weights = op.energy_weights.reshape(geom.shape)
    active = weights > 0.0

    rhs = np.where(active, b.values, 0.0)
    b_norm = math.sqrt(_energy_inner(weights, rhs, rhs))
    x = np.zeros(geom.shape)
    residual_norms: List[float] = []
    energies: List[float] = []
    converged = True
    iterations = 0

    if b_norm > 0.0:
        r = rhs.copy()
        p = r.copy()
        rr = _energy_inner(weights, r, r)
        residual_norms.append(math.sqrt(rr))
        energies.append(0.0)
        converged = False
        for iterations in range(1, cfg.cg_max_iters + 1):
            Rp = np.where(active, _apply_R_values(op, p, theta), 0.0)
            alpha = rr / _energy_inner(weights, p, Rp)
            x += alpha * p
            r -= alpha * Rp
            rr_new = _energy_inner(weights, r, r)
            residual_norms.append(math.sqrt(rr_new))
            # CG energy ½⟨x, Rx⟩ − ⟨b, x⟩ written with the recursive residual
            energies.append(-0.5 * _energy_inner(weights, x, rhs + r))
            if math.sqrt(rr_new) <= cfg.cg_tol * b_norm:
                converged = True
                break
            p = r + (rr_new / rr) * p
            rr = rr_new

    # rows with ε = 0: R z = b reduces to θ z = b − M M* z there
    correction = b.values - _apply_R_values(op, x, theta)
    x = np.where(active, x, x + correction / theta)

    relative = residual_norms[-1] / b_norm if b_norm > 0.0 else 0.0
    result = CGResult(
        solution=Sinogram(geom, x, "function"),
        iterations=iterations,
        converged=converged,
        relative_residual=relative,
        residual_norms=residual_norms,
        energies=energies,
    )
    logger.debug("CG solve finished", iterations=iterations, relative_residual=relative, converged=converged)

    if not converged:
        raise NoConvergenceError(
            f"CG stopped after {cfg.cg_max_iters} iterations at relative residual {relative:.3e}",
            result=result,
        )
    return result


def estimate_lambda_max(operator: FunkOperator, power_iters: int = 30, seed: int = 0) -> float:
    """
    Power-iteration estimate of the largest eigenvalue of M*εM (equal to that of MM*).

    The start vector is seeded Gaussian noise on the operator's support cells.
    """
    normal = operator.normal_operator()
    cells = operator.support_cells()
    if cells.size == 0 or operator.matrix.nnz == 0:
        return 0.0

    rng = np.random.default_rng(seed)
    v = np.zeros(operator.nx * operator.ny)
    v[cells] = rng.standard_normal(cells.size)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(power_iters):
        w = normal.matvec(v)
        estimate = float(v @ w)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm

    logger.debug("Power iteration finished", iterations=power_iters, lambda_max=estimate)
    return estimate


def regularization(operator: FunkOperator, cfg: KaczmarzConfig) -> Tuple[float, float]:
    """(θ, λ_max) with θ = theta_rel·λ_max; an operator with no range falls back to θ = theta_rel."""
    lambda_max = estimate_lambda_max(operator, cfg.power_iters, cfg.seed)
    theta = cfg.theta_rel * lambda_max if lambda_max > 0.0 else cfg.theta_rel
    return theta, lambda_max


# ---------------------------------------------------------------------------
# Contraction and reconstruction
# ---------------------------------------------------------------------------


def q_contraction_check(
    g: GridDensity,
    cfg: KaczmarzConfig,
    geom: ScanGeometry,
    mask: Optional[np.ndarray] = None,
    theta: Optional[float] = None,
) -> Tuple[float, float]:
    """
    (‖Qg‖, ‖g‖) for Q = I − ω M* R⁻¹ M.

    A CG solve that stops short uses its last iterate, as in reconstruct.

    Returns:
        Tuple of norms in ⟨·,·⟩_X
    """
    op = get_operator(geom, g.nx, g.ny, mask)
    if theta is None:
        theta, _ = regularization(op, cfg)
    image = Sinogram(geom, op.forward_values(g.values), "function")
    try:
        z = solve_R(image, theta, cfg, g.nx, g.ny, mask, operator=op).solution
    except NoConvergenceError as e:
        logger.warning("Inner CG did not converge", relative_residual=e.result.relative_residual)
        z = e.result.solution
    q_values = g.values - cfg.omega * op.adjoint_values(z.values)
    q_norm = math.sqrt(g.cell_area * float(np.sum(q_values * q_values)))
    return q_norm, g.norm()


def reconstruct(
    data: Sinogram,
    cfg: KaczmarzConfig,
    geom: ScanGeometry,
    nx: int,
    ny: int,
    truth: Optional[GridDensity] = None,
    mask: Optional[np.ndarray] = None,
    initial: Optional[GridDensity] = None,
) -> Tuple[GridDensity, ConvergenceReport]:
    """
    Run f^{k+1} = f^k + ω·M*R⁻¹(data − Mf^k) from f⁰ (zero by default).

    Stops when ‖f^{k+1} − f^k‖ ≤ stop_tol·‖f^{k+1}‖ or after max_iters. With a mask
    the operator acts on K-supported densities, so every iterate vanishes off K.
    CG failures are recorded as warnings and the last CG iterate is used.

    Args:
        data: measured sinogram (kind "function")
        cfg: solver configuration
        geom: scan geometry of the data
        nx, ny: reconstruction grid
        truth: optional reference density for error norms
        mask: optional support K
        initial: optional starting density

    Returns:
        Tuple of (final density, ConvergenceReport)
    """
    if data.geom != geom:
        raise GeometryMismatchError("Data geometry differs from the requested geometry")
    if data.kind != "function":
        raise FunkValidationError("reconstruct expects data of kind 'function'")
    if truth is not None and truth.shape != (ny, nx):
        raise GeometryMismatchError(f"Truth grid {truth.shape} differs from {(ny, nx)}")

    start = time.time()
    op = get_operator(geom, nx, ny, mask)
    theta, lambda_max = regularization(op, cfg)

    f = np.zeros((ny, nx)) if initial is None else np.array(initial.values, dtype=float)
    weights = geom.sample_weights()

    def residual_of(values: np.ndarray) -> np.ndarray:
        return data.values - op.forward_values(values)

    def sigma_norm(values: np.ndarray) -> float:
        return math.sqrt(float(np.sum(weights * values * values)))

    def x_norm(values: np.ndarray) -> float:
        return math.sqrt(op.cell_area * float(np.sum(values * values)))

    report = ConvergenceReport(
        theta=theta,
        lambda_max=lambda_max,
        config=cfg.model_dump(),
        truth_norm=None if truth is None else truth.norm(),
        error_norms=None if truth is None else [],
    )

    residual = residual_of(f)
    report.residual_norms.append(sigma_norm(residual))
    report.cg_iterations.append(0)
    if truth is not None:
        report.error_norms.append(x_norm(f - truth.values))

    logger.info(
        "Reconstruction started",
        nx=nx,
        ny=ny,
        omega=cfg.omega,
        theta=theta,
        lambda_max=lambda_max,
        masked=mask is not None,
    )

    for k in range(1, cfg.max_iters + 1):
        rhs = Sinogram(geom, residual, "function")
        try:
            solved = solve_R(rhs, theta, cfg, nx, ny, mask, operator=op)
        except NoConvergenceError as e:
            solved = e.result
            message = f"iteration {k}: {e}"
            report.warnings.append(message)
            logger.warning("Inner CG did not converge", iteration=k, relative_residual=solved.relative_residual)

        update = cfg.omega * op.adjoint_values(solved.solution.values)
        f = f + update
        if mask is not None:
            f = np.where(mask, f, 0.0)
        residual = residual_of(f)

        report.residual_norms.append(sigma_norm(residual))
        report.cg_iterations.append(solved.iterations)
        if truth is not None:
            report.error_norms.append(x_norm(f - truth.values))

        change = x_norm(update) / max(x_norm(f), TINY)
        logger.debug(
            "Kaczmarz step",
            iteration=k,
            residual=report.residual_norms[-1],
            error=None if truth is None else report.error_norms[-1],
            cg_iterations=solved.iterations,
            change=change,
        )
        if change <= cfg.stop_tol:
            report.converged = True
            break

    final = GridDensity(f, mask)
    report.final = final

    logger.info(
        "Reconstruction finished",
        iterations=report.iterations,
        converged=report.converged,
        residual=report.residual_norms[-1],
        relative_error=report.relative_error,
        warnings=len(report.warnings),
        elapsed=format_processing_time(time.time() - start),
    )
    return final, report
