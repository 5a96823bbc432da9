"""
Run Configuration Models for the Command Line

Pydantic models holding the fully resolved parameters of every subcommand. A
model's JSON dump is what each run echoes, and feeding that JSON back through
`--config` reproduces the run.
"""

from typing import Any, Dict, List, Optional, Tuple, Type

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..funk_engine.config import get_config


def default_geometry() -> str:
    geometry = get_config().geometry
    return f"full:R={geometry.detector_radius},nd={geometry.n_detectors},nr={geometry.n_radii}"


class RunConfig(BaseModel):
    """Common base: unknown keys are rejected so typos in config files surface."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class GridOptions(RunConfig):
    nx: int = Field(default=64, ge=1, description="Grid cells along x")
    ny: Optional[int] = Field(default=None, ge=1, description="Grid cells along y (defaults to nx)")

    @model_validator(mode="after")
    def fill_ny(self):
        if self.ny is None:
            object.__setattr__(self, "ny", self.nx)
        return self


class PhantomRun(GridOptions):
    spec: Optional[str] = Field(default=None, description="Primitive list, e.g. disk:0,0,0.5,1")
    random: Optional[int] = Field(default=None, ge=1, description="Number of random gaussians")
    seed: int = Field(default=0, description="Seed for random phantoms")
    mask: Optional[str] = Field(default=None, description="Support K: ball or half-ball")
    out: str = Field(..., description="Output grid file")

    @model_validator(mode="after")
    def validate_source(self):
        if (self.spec is None) == (self.random is None):
            raise ValueError("Give exactly one of spec or random")
        return self


class ForwardRun(RunConfig):
    input: str = Field(..., description="Input grid file")
    geom: str = Field(default_factory=default_geometry, description="Geometry mini-language")
    out: str = Field(..., description="Output sinogram file")


class BackprojectRun(GridOptions):
    input: str = Field(..., description="Input sinogram file")
    out: str = Field(..., description="Output grid file")


class AdjointCheckRun(GridOptions):
    geom: str = Field(default_factory=default_geometry, description="Coarsest geometry")
    levels: int = Field(default=2, ge=1, le=5, description="Refinement levels, each doubling all sizes")
    pairs: int = Field(default=1, ge=1, description="Random phantom/weight pairs per level")
    seed: int = Field(default=0)
    report: Optional[str] = Field(default=None, description="Report file (stdout if omitted)")


class ReconstructRun(GridOptions):
    input: str = Field(..., description="Input sinogram file")
    out: Optional[str] = Field(default=None, description="Output grid file (not written if omitted)")
    truth: Optional[str] = Field(default=None, description="Reference grid for error norms")
    mask: Optional[str] = Field(default=None, description="Support K: ball or half-ball")
    omega: Optional[float] = None
    theta_rel: Optional[float] = None
    max_iters: Optional[int] = None
    stop_tol: Optional[float] = None
    cg_tol: Optional[float] = None
    cg_max_iters: Optional[int] = None
    power_iters: Optional[int] = None
    seed: Optional[int] = None
    fatal_cg: bool = Field(default=False, description="Treat inner CG failure as a numerical error")
    report: Optional[str] = Field(default=None, description="Report file (stdout if omitted)")

    @model_validator(mode="after")
    def fill_solver(self):
        solver = get_config().solver
        for name in ("omega", "theta_rel", "max_iters", "stop_tol", "cg_tol", "cg_max_iters", "power_iters", "seed"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, getattr(solver, name))
        return self

    def solver_fields(self) -> Dict[str, Any]:
        return {
            "omega": self.omega,
            "theta_rel": self.theta_rel,
            "max_iters": self.max_iters,
            "stop_tol": self.stop_tol,
            "cg_tol": self.cg_tol,
            "cg_max_iters": self.cg_max_iters,
            "power_iters": self.power_iters,
            "seed": self.seed,
        }


class RangeBuildRun(RunConfig):
    deg: int = Field(default=1, ge=0, description="Polynomial degree k in s")
    freq: int = Field(default=2, ge=0, description="Harmonic frequency q")
    amps: Optional[List[float]] = Field(default=None, description="k+1 amplitudes (default all ones)")
    detector_radius: Optional[float] = Field(default=None, gt=1.0)
    sine: bool = False
    out: Optional[str] = Field(default=None, description="Output JSON (stdout if omitted)")

    @model_validator(mode="after")
    def fill_defaults(self):
        if self.amps is None:
            object.__setattr__(self, "amps", [1.0] * (self.deg + 1))
        if self.detector_radius is None:
            object.__setattr__(self, "detector_radius", get_config().geometry.detector_radius)
        return self


class RangeCheckRun(RunConfig):
    input: str = Field(..., description="Input sinogram file")
    annihilators: Optional[str] = Field(default=None, description="Annihilator JSON file")
    deg: Optional[int] = Field(default=None, ge=0)
    freq: Optional[int] = Field(default=None, ge=0)
    amps: Optional[List[float]] = None
    sine: bool = False
    report: Optional[str] = Field(default=None, description="Report file (stdout if omitted)")

    @model_validator(mode="after")
    def validate_source(self):
        inline = self.deg is not None or self.freq is not None
        if self.annihilators is None and not inline:
            object.__setattr__(self, "deg", 1)
            object.__setattr__(self, "freq", 2)
        elif self.annihilators is not None and inline:
            raise ValueError("Give either an annihilator file or deg/freq, not both")
        elif inline and (self.deg is None or self.freq is None):
            raise ValueError("deg and freq go together")
        if self.deg is not None and self.amps is None:
            object.__setattr__(self, "amps", [1.0] * (self.deg + 1))
        return self


class KernelProbeRun(RunConfig):
    geom: str = Field(default_factory=default_geometry)
    points: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(0.0, 0.0), (0.3, 0.2), (-0.4, 0.1), (0.2, -0.5), (0.6, 0.0)],
        description="Base points y",
    )
    direction: Tuple[float, float] = (1.0, 0.0)
    distances: List[float] = Field(
        default_factory=lambda: [1e-3, 1.7782794100389228e-3, 3.1622776601683794e-3, 5.623413251903491e-3, 1e-2]
    )
    report: Optional[str] = None

    @field_validator("points")
    @classmethod
    def validate_points(cls, v):
        for x, y in v:
            if x * x + y * y >= 1.0:
                raise ValueError(f"Base point ({x}, {y}) must lie in the open unit ball")
        return v


class SpectrumRun(GridOptions):
    nx: int = Field(default=24, ge=1)
    geom: str = Field(default_factory=default_geometry)
    mask: Optional[str] = Field(default="ball")
    kmin: int = Field(default=10, ge=1)
    kmax: int = Field(default=100, ge=2)
    report: Optional[str] = None


class GeomCheckRun(RunConfig):
    geom: str = Field(default_factory=default_geometry)
    samples: int = Field(default=1000, ge=1)
    seed: int = 0
    report: Optional[str] = None


RUN_MODELS: Dict[str, Type[RunConfig]] = {
    "phantom": PhantomRun,
    "forward": ForwardRun,
    "backproject": BackprojectRun,
    "adjoint-check": AdjointCheckRun,
    "reconstruct": ReconstructRun,
    "range-build": RangeBuildRun,
    "range-check": RangeCheckRun,
    "kernel-probe": KernelProbeRun,
    "spectrum": SpectrumRun,
    "geom-check": GeomCheckRun,
}


def resolve_run_config(command: str, file_values: Dict[str, Any], cli_values: Dict[str, Any]) -> RunConfig:
    """Config-file values first, then every flag given on the command line."""
    model = RUN_MODELS[command]
    values = dict(file_values)
    values.update({k: v for k, v in cli_values.items() if v is not None and k in model.model_fields})
    return model(**values)
