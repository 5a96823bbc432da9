"""Entry point for `python -m src.cli`."""

from .app import main

main()
