"""Portrait animation with an interpretable, orthonormal sparse motion dictionary.

Motion transfer is linear navigation in latent space: an encoder maps the
source portrait to a code and feature pyramid, a coefficient head maps
any driving frame onto a learned orthonormal dictionary of motion
directions, and a flow generator + renderer turn navigated codes into
images. An L1 penalty on the coefficients makes individual directions
interpretable, enabling the edit-warp-render workflow: edit the source
along labeled directions, then transfer motion.
"""

from .latent import (
    EditRecipe,
    MotionDictionary,
    apply_edit,
    motion_difference,
    navigate,
    orthonormal_rows,
    path_from_coefficients,
    sparsity_penalty,
)
from .networks import Animator, NetworkConfig, PRESETS
from .warp import identity_grid, warp, warp_pyramid

__all__ = [
    "Animator",
    "EditRecipe",
    "MotionDictionary",
    "NetworkConfig",
    "PRESETS",
    "apply_edit",
    "identity_grid",
    "motion_difference",
    "navigate",
    "orthonormal_rows",
    "path_from_coefficients",
    "sparsity_penalty",
    "warp",
    "warp_pyramid",
]

__version__ = "0.1.0"
