"""Sound-soft acoustic scattering amplitudes and far-field density experiments."""

from .farfield import FarFieldPattern, ParamSurface, amplitude_from_boundary, herglotz
from .mie import MieModel, build_mie, far_field
from .sphgrid import Direction, HarmonicCoeffs, SphereGrid, grid_for_degree, make_grid
from .synthesis import DirectionSet, SynthesisReport, obstruction_profile, solve_ls, synthesize_sphere

__all__ = [
    "Direction", "DirectionSet", "FarFieldPattern", "HarmonicCoeffs", "MieModel", "ParamSurface",
    "SphereGrid", "SynthesisReport", "amplitude_from_boundary", "build_mie", "far_field",
    "grid_for_degree", "herglotz", "make_grid", "obstruction_profile", "solve_ls", "synthesize_sphere",
]
