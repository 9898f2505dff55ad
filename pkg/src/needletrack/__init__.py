"""Optical needle-tip tracking on synthetic scattering images.

A from-scratch CNN regresses physical tip coordinates from the surface
light spot of a sub-surface point source, trained with MSE and AdamW;
includes the scattering simulator, pivot calibration, and a train/eval/
benchmark harness with report figures.
"""

__version__ = "0.1.0"
