"""Ultrasound-to-CT deformable registration with radial fuzzy-entropy edge enhancement."""
from .demons import DemonsParams, DemonsResult, demons_register, run_demons
from .denoise import DenoiseParams, denoise_bm_2d, denoise_bm_3d, denoise_gaussian
from .grid import SectorGeometry, warp
from .infometrics import MIForceParams, joint_histogram, mi_force_field, mutual_information, nmi, nmi_images
from .life import LifeParams, enhance_slice, extract_edges, life_entropy, soft_threshold
from .pipeline import PipelineConfig, PipelineError, RegistrationReport, run_pipeline
from .rigid import AffineTransform3D, RigidSearchParams, register_affine

__version__ = "0.1.0"
