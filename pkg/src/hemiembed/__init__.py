"""Uncalibrated photometric stereo by embedding pixel intensity vectors onto
the hemisphere of surface normals.

The pipeline builds a nearest-neighbor graph of normalized intensity
vectors, finds the occluding boundary, solves for Laplace-Beltrami weights,
and reads normals off the first Dirichlet and Neumann eigenvectors. Depth
follows by integrating the normal field.
"""

__version__ = "0.1.0"

from .pipeline import PipelineConfig, Reconstruction, StageError, run_pipeline
from .render import make_sphere_scene, render_stack, sample_spiral_lights, sample_uniform_lights

__all__ = ["PipelineConfig", "Reconstruction", "StageError", "run_pipeline",
           "make_sphere_scene", "render_stack", "sample_spiral_lights",
           "sample_uniform_lights", "__version__"]
