"""Simulation of vector vortex beams through Kolmogorov turbulence.

Subpackages cover hybrid OAM/polarisation states and entanglement measures,
sampled optics, phase screens, the one-sided turbulence channel, state
tomography, crosstalk correction with image transmission and an experiment
runner.
"""

__version__ = "0.1.0"
