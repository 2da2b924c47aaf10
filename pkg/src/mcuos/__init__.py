"""Learning unions of subspaces from complete and partially observed data."""
from .datagen import SyntheticSpec, generate_masks, generate_subspaces, synthetic_dataset
from .estimators import AdaptiveMiCUSaL, MCKUSaL, MiCUSaL, RobustMCKUSaL, RobustMiCUSaL
from .exceptions import ConfigError, DataError, McuosError, NumericalError
from .kernel_learning import KernelModel, mckusal, rmckusal
from .kernels import KernelSpec
from .linear import McUosModel, amicusal, micusal
from .missing import ObservedSignal, rmicusal
from .preimage import preimage
from .subspace import Subspace, SubspaceCollection, match_subspaces, subspace_distance

__version__ = "0.1.0"

__all__ = [
    "AdaptiveMiCUSaL", "ConfigError", "DataError", "KernelModel", "KernelSpec", "MCKUSaL",
    "McUosModel", "McuosError", "MiCUSaL", "NumericalError", "ObservedSignal", "RobustMCKUSaL",
    "RobustMiCUSaL", "Subspace", "SubspaceCollection", "SyntheticSpec", "amicusal",
    "generate_masks", "generate_subspaces", "match_subspaces", "mckusal", "micusal", "preimage",
    "rmckusal", "rmicusal", "subspace_distance", "synthetic_dataset",
]
