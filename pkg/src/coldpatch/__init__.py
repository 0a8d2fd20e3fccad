"""Adversarial cold-patch synthesis against infrared pedestrian detectors.

The package is organized by pipeline stage:

- ``imaging``: grayscale image container, binary PGM I/O, bilinear resampling
- ``patchgen``: curved-block patch parameters, grid geometry, rasterization
- ``transforms``: physical-robustness transforms (EOT sampling, TPS warps)
- ``oracle``: detector oracles (built-in toy detector, wire-protocol client)
- ``scene``: synthetic thermal pedestrian scenes and dataset I/O
- ``optimizer``: particle-swarm search over patch parameters
- ``evaluation``: attack-success-rate reports
- ``cli``: command-line front end
"""

from coldpatch.imaging import BBox, GrayImage, crop_resize, load_pgm, save_pgm
from coldpatch.patchgen import (
    PatchRaster,
    PatchTheta,
    compose,
    project_delta,
    rasterize_patch,
    validate_theta,
)

__all__ = [
    "BBox",
    "GrayImage",
    "crop_resize",
    "load_pgm",
    "save_pgm",
    "PatchRaster",
    "PatchTheta",
    "compose",
    "project_delta",
    "rasterize_patch",
    "validate_theta",
]

__version__ = "0.1.0"
