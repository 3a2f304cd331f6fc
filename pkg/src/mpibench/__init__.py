"""Reconstruction benchmark toolkit for simulated 3D magnetic particle imaging.

Synthesizes system matrices and measurements, preprocesses them into
reduced linear systems, reconstructs with Kaczmarz, variational and
untrained-network solvers, and scores results with shift-maximized
PSNR/SSIM.
"""

__version__ = "0.1.0"

from .container import (
    ChecksumError,
    ContainerError,
    MissingArrayError,
    UnsupportedVersionError,
    load_arrays,
    load_dataset,
    save_arrays,
    save_dataset,
)
from .dip import (
    Autoencoder,
    AutoencoderSpec,
    DipConfig,
    dip_reconstruct,
    homogeneous_dip,
)
from .kaczmarz import kaczmarz_l1, kaczmarz_l1l2, kaczmarz_l2, select_rows_by_norm
from .linalg import exact_svd, matrix_with_spectrum, project_nonneg, rsvd, soft_shrink
from .metrics import QualityReport, ShiftGrid, eps_metrics, psnr, ssim3d
from .operators import (
    LangevinModel,
    RawDataset,
    SpectralModel,
    sigma_for_snr_db,
    synth_measurement,
    synth_operator,
)
from .phantoms import (
    ConeSpec,
    CuboidUnionSpec,
    FiveTubeSpec,
    phantom_from_dict,
    phantom_to_dict,
    rasterize_phantom,
)
from .preprocess import PreprocessConfig, ProcessedSystem, build_system
from .schedule import (
    CheckpointSchedule,
    SolverTrace,
    default_schedule,
    load_trace,
    save_trace,
)
from .sweep import RunSpec, expand_runs, penalty_grid, run_sweep
from .variational import PenaltyConfig, var_solve
from .volume import GridSpec, Volume

__all__ = [
    "__version__",
    "Autoencoder", "AutoencoderSpec", "CheckpointSchedule", "ChecksumError",
    "ConeSpec", "ContainerError", "CuboidUnionSpec", "DipConfig",
    "FiveTubeSpec", "GridSpec", "LangevinModel", "MissingArrayError",
    "PenaltyConfig", "PreprocessConfig", "ProcessedSystem", "QualityReport",
    "RawDataset", "RunSpec", "ShiftGrid", "SolverTrace", "SpectralModel",
    "UnsupportedVersionError", "Volume", "build_system", "default_schedule",
    "dip_reconstruct", "eps_metrics", "exact_svd", "expand_runs",
    "homogeneous_dip", "kaczmarz_l1", "kaczmarz_l1l2", "kaczmarz_l2",
    "load_arrays", "load_dataset", "load_trace", "matrix_with_spectrum",
    "penalty_grid", "phantom_from_dict", "phantom_to_dict", "project_nonneg",
    "psnr", "rasterize_phantom", "rsvd", "run_sweep", "save_arrays",
    "save_dataset", "save_trace", "select_rows_by_norm", "sigma_for_snr_db",
    "soft_shrink", "ssim3d", "synth_measurement", "synth_operator",
    "var_solve",
]
