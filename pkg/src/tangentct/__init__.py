"""Tangential (exterior) CT reconstruction toolkit.

Exterior scans only measure rays passing outside a central core, so the
sinogram is truncated along the detector. This package quantifies the
minimal sampling needed for exact anisotropic-TV recovery, completes the
truncated sinogram to a full scan, reconstructs slices with FBP and
weighted-ATV iteration, and enforces projection fidelity on externally
denoised slices.
"""

from .geometry import (
    AnnulusSpec,
    ScanGeometry,
    angle_coverage,
    conjugate_ray,
    default_scan_geometry,
    detector_extension,
    ray_annulus_lengths,
    surrogate_geometry,
    tilt_depth_for_angle,
)
from .phantom import PhantomRecipe, SliceImage, downscale, generate_annulus
from .projector import (
    NoiseModel,
    Sinogram,
    apply_poisson_noise,
    forward_project,
    tangential_mask,
)
from .fbp import backproject, fbp_reconstruct
from .projector import adjoint_project, ray_coverage
from .phantom import annulus_roi_mask, phantom_batch
from .lp import LPResult, solve_min_t
from .quantify import (
    LPCertificate,
    SamplingModelParams,
    SamplingSpec,
    build_gradient_matrix,
    build_system_matrix,
    quantify_projection,
    sampling_objective,
    uniqueness_test,
)

__version__ = "0.1.0"
