"""
funkrad: Circular-Mean Transform Toolkit for Thermoacoustic Tomography

Forward and dual circular-mean (Funk-type) transforms, geometric well-posedness
diagnostics, a preconditioned Kaczmarz reconstruction and constructive range
conditions, with a command-line front end.
"""

__version__ = "1.0.0"
