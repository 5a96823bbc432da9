"""
Command-Line Application for funkrad

Builds the argument parser, configures structured logging and maps library
failures to exit codes: 0 on success, 2 for rejected input, 3 when the
numerics fail.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog
from pydantic import ValidationError

from ..funk_engine.config import get_config
from ..funk_engine.errors import FunkError, FunkNumericalError, FunkValidationError
from ..utils.helpers import config_echo, format_processing_time, parse_int_list, resolve_threads
from .commands import COMMANDS, output_path
from .models import resolve_run_config

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

logger = structlog.get_logger(__name__)


def configure_logging(level: str = "WARNING", fmt: str = "json") -> None:
    """Configure structlog over stdlib logging; everything goes to standard error."""
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level.upper()), format="%(message)s", force=True)
    renderer = structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def _float_pair(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"Expected x,y, got '{text}'")
    return (float(parts[0]), float(parts[1]))


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got '{text}'")


def _point_list(text: str):
    return [_float_pair(item) for item in text.split(";") if item.strip()]


def _k_window(text: str):
    values = parse_int_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"Expected kmin,kmax, got '{text}'")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="funkrad", description="Circular-mean (Funk) transform toolkit for thermoacoustic tomography"
    )
    parser.add_argument("--threads", type=int, default=None, help="Cap on assembly threads (FUNKRAD_THREADS)")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR")
    parser.add_argument("--log-format", choices=["json", "console"], default=None)
    parser.add_argument("--config", default=None, help="JSON file with the command's run configuration")
    sub = parser.add_subparsers(dest="command", required=True)

    def grid_args(p, with_ny=True):
        p.add_argument("--nx", type=int, default=None)
        if with_ny:
            p.add_argument("--ny", type=int, default=None)

    p = sub.add_parser("phantom", help="Write a phantom grid")
    p.add_argument("--spec", default=None, help="disk:cx,cy,r,amp;gauss:cx,cy,w,amp")
    p.add_argument("--random", type=int, default=None, help="Number of random gaussians")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mask", choices=["ball", "half-ball"], default=None)
    p.add_argument("--out", default=None)
    grid_args(p)

    p = sub.add_parser("forward", help="Grid → sinogram")
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--geom", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("backproject", help="Sinogram → grid")
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--out", default=None)
    grid_args(p)

    p = sub.add_parser("adjoint-check", help="Duality residual over refinements")
    p.add_argument("--geom", default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", default=None)
    grid_args(p)

    p = sub.add_parser("reconstruct", help="Kaczmarz reconstruction")
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--mask", choices=["ball", "half-ball"], default=None)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--theta-rel", dest="theta_rel", type=float, default=None)
    p.add_argument("--iters", dest="max_iters", type=int, default=None)
    p.add_argument("--stop-tol", dest="stop_tol", type=float, default=None)
    p.add_argument("--cg-tol", dest="cg_tol", type=float, default=None)
    p.add_argument("--cg-max-iters", dest="cg_max_iters", type=int, default=None)
    p.add_argument("--power-iters", dest="power_iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fatal-cg", dest="fatal_cg", action="store_true", default=None)
    p.add_argument("--report", default=None)
    grid_args(p)

    p = sub.add_parser("range-build", help="Write a certified annihilator")
    p.add_argument("--deg", type=int, default=None)
    p.add_argument("--freq", type=int, default=None)
    p.add_argument("--amps", type=_float_list, default=None)
    p.add_argument("--R", dest="detector_radius", type=float, default=None)
    p.add_argument("--sine", action="store_true", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("range-check", help="Range residuals of a sinogram")
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--annihilators", default=None)
    p.add_argument("--deg", type=int, default=None)
    p.add_argument("--freq", type=int, default=None)
    p.add_argument("--amps", type=_float_list, default=None)
    p.add_argument("--sine", action="store_true", default=None)
    p.add_argument("--report", default=None)

    p = sub.add_parser("kernel-probe", help="Normal-kernel singularity probe")
    p.add_argument("--geom", default=None)
    p.add_argument("--points", type=_point_list, default=None, help="x,y;x,y;...")
    p.add_argument("--direction", type=_float_pair, default=None)
    p.add_argument("--distances", type=_float_list, default=None)
    p.add_argument("--report", default=None)

    p = sub.add_parser("spectrum", help="Eigenvalue decay of the normal operator")
    p.add_argument("--geom", default=None)
    p.add_argument("--mask", choices=["ball", "half-ball"], default=None)
    p.add_argument("--k-window", dest="k_window", type=_k_window, default=None, help="kmin,kmax")
    p.add_argument("--report", default=None)
    grid_args(p)

    p = sub.add_parser("geom-check", help="det Φ, conjugate-gap and hyperplane sampling")
    p.add_argument("--geom", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", default=None)

    return parser


def _load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        values = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FunkValidationError(f"{path}: not valid JSON ({e})")
    if not isinstance(values, dict):
        raise FunkValidationError(f"{path}: expected a JSON object")
    return values


def _describe_validation(error: Dict[str, Any]) -> str:
    location = ".".join(str(part) for part in error.get("loc", ()))
    return f"{location}: {error['msg']}" if location else error["msg"]


def _fail(kind: str, message: str, status: int) -> int:
    first_line = str(message).strip().splitlines()[0] if str(message).strip() else kind
    sys.stderr.write(f"error: {kind}: {first_line}\n")
    return status


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, execute one subcommand and return its exit status.

    Args:
        argv: argument list without the program name (defaults to sys.argv[1:])

    Returns:
        0, 2 or 3
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION

    config = get_config()
    runtime = config.runtime
    try:
        level = (args.log_level or runtime.log_level).upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise FunkValidationError(f"Unknown log level: {args.log_level}")
        configure_logging(level, args.log_format or runtime.log_format)
        runtime.threads = resolve_threads(args.threads, runtime.threads)

        cli_values = {k: v for k, v in vars(args).items() if k not in {"command", "config", "threads", "log_level", "log_format"}}
        if "k_window" in cli_values:
            window = cli_values.pop("k_window")
            if window is not None:
                cli_values["kmin"], cli_values["kmax"] = window
        run_config = resolve_run_config(args.command, _load_config_file(args.config), cli_values)

        start = time.time()
        text = COMMANDS[args.command](run_config)
        output = config_echo(run_config.model_dump(mode="json")) + text

        destination = output_path(run_config)
        if destination is not None:
            destination.write_text(output)
        else:
            sys.stdout.write(output)
            sys.stdout.flush()

        logger.info("Command finished", command=args.command, elapsed=format_processing_time(time.time() - start))
        return EXIT_OK

    except FunkNumericalError as e:
        logger.error("Numerical failure", command=args.command, error=str(e))
        return _fail(e.kind, str(e), EXIT_NUMERICAL)
    except FunkError as e:
        return _fail(e.kind, str(e), EXIT_VALIDATION)
    except ValidationError as e:
        errors = e.errors()
        message = _describe_validation(errors[0]) if errors else str(e)
        return _fail("validation", message, EXIT_VALIDATION)
    except (ValueError, OSError) as e:
        return _fail("validation" if isinstance(e, ValueError) else "io", str(e), EXIT_VALIDATION)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
