"""Multi-center-of-projection imaging for large colored point clouds:
projection, patch-bank self-supervision, exemplar-based completion,
reprojection and evaluation."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .container import read_heldout, read_mcop, write_heldout, write_mcop
from .core import McopImage, Patch, PointCloud, derive_mask
from .erosion import erode_image
from .inpaint import (
    InpaintConfig,
    baseline_inpaint,
    consistency_loss,
    export_for_external,
    gram_matrix,
    import_from_external,
    normalize_rotation,
    regularity_loss,
    texture_similarity_loss,
)
from .metrics import EvalConfig, MetricsReport, chamfer, evaluate, mae, patch_fd, psnr, ssim
from .patchbank import PatchBank, apply_random_mask, build_bank, extract_window, load_bank, sample_bank, save_bank
from .ply import read_ply, write_ply
from .projection import SpatialGrid, build_spatial_index, project
from .reproject import reproject
from .sweep import (
    RotationProfile,
    SlitPoses,
    SweepPath,
    build_rotation_profile,
    integrate_slit_poses,
    resample_path,
)
from .synth import StructureSpec, profile_from_structure, synth_erosion_mask, synth_wall

__version__ = "0.1.0"
