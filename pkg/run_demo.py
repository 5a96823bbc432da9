#!/usr/bin/env python3
"""
Demo Script for funkrad

Runs the whole pipeline on a small problem in a scratch directory: phantom,
forward data, Kaczmarz reconstruction with a truth comparison, a certified
annihilator and its range check, and the geometry diagnostics.
"""

import sys
import tempfile
import time
from pathlib import Path
from typing import List

# Add src to Python path
sys.path.insert(0, str(Path(__file__).parent))

try:
    from src.cli.app import EXIT_OK, run
    from src.utils.helpers import format_processing_time
except ImportError as e:
    print(f"Import Error: {e}")
    print("Please ensure you have installed all dependencies:")
    print("pip install -r requirements.txt")
    sys.exit(1)

PHANTOM = "disk:0.1,0.1,0.4,1;gauss:-0.3,-0.2,0.15,0.8"
GEOMETRY = "full:R=1.5,nd=90,nr=80"


def print_banner():
    """Print startup banner."""
    banner = """
    ===============================================================
                  funkrad: circular-mean transform demo
    ===============================================================
     phantom -> forward -> Kaczmarz -> range check -> geom-check
    ===============================================================
    """
    print(banner)


def step(title: str, argv: List[str]) -> None:
    print(f"\n--- {title}")
    print("    funkrad " + " ".join(argv))
    start = time.time()
    status = run(argv)
    if status != EXIT_OK:
        print(f"[FAIL] {title} exited with status {status}")
        sys.exit(status)
    print(f"[OK] {title} ({format_processing_time(time.time() - start)})")


def main():
    print_banner()
    with tempfile.TemporaryDirectory(prefix="funkrad-demo-") as scratch:
        work = Path(scratch)
        grid, sino, recon = work / "f.grid", work / "g.sino", work / "recon.grid"
        phi = work / "phi.json"

        step("Phantom", ["phantom", "--spec", PHANTOM, "--nx", "48", "--out", str(grid)])
        step("Forward transform", ["forward", "--in", str(grid), "--geom", GEOMETRY, "--out", str(sino)])
        step(
            "Kaczmarz reconstruction",
            ["reconstruct", "--in", str(sino), "--truth", str(grid), "--nx", "48", "--iters", "20", "--out", str(recon)],
        )
        step("Annihilator", ["range-build", "--deg", "2", "--freq", "3", "--amps", "1,-0.5,0.25", "--out", str(phi)])
        step("Range check", ["range-check", "--in", str(sino), "--annihilators", str(phi)])
        step("Geometry diagnostics", ["geom-check", "--geom", GEOMETRY, "--samples", "200"])

    print("\nDemo finished.")


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\nDemo interrupted")
        sys.exit(1)
