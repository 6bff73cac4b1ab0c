"""Finite-stage convex integration for the incompressible porous media equation."""
import os as _os

# cap BLAS/OpenMP pools before numpy loads them
_threads = _os.environ.get("WILDFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .errors import WildflowError  # noqa: E402
from .lambda_geometry import cone_residual, dist_to_K, in_cone, state, to_matrix  # noqa: E402
from .t4_hull import HullSpec, membership_in_Uz, staircase, t4_for_center  # noqa: E402
from .wave_potential import WavePatch, building_block, patch_field, wave_coefficients  # noqa: E402
from .weak_verifier import FieldGrid, render_grid, verify_subsolution, weak_residuals  # noqa: E402
from .wild_constructor import ConstructionConfig, Subsolution, direct_construction  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "WildflowError", "cone_residual", "dist_to_K", "in_cone", "state", "to_matrix",
    "HullSpec", "membership_in_Uz", "staircase", "t4_for_center",
    "WavePatch", "building_block", "patch_field", "wave_coefficients",
    "FieldGrid", "render_grid", "verify_subsolution", "weak_residuals",
    "ConstructionConfig", "Subsolution", "direct_construction",
]
