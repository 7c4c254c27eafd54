"""Phase retrieval from intensity measurements via a convex lifting.

The package provides optical forward models (zonal and modal), the
lifted 2x2-block formulation with its structure-exploiting ADMM solver,
closed-form fixed-point operators for the unitary case, an alternating
projections baseline, quality metrics, and an experiment CLI.
"""

from .admm import AdmmOptions, SolveTrace, nn_admm
from .algorithm import CoprOptions, CoprResult, copr, misfit
from .baselines import alternating_projections
from .errors import (ContainerFormatError, ConvergenceError, CoprError,
                     NumericalFailure, RankDeficiencyError)
from .fixedpoint import (f_i, lambda_root, solution_set_distance, t_identity,
                         t_scalar, t_unitary)
from .forward import (BasisSet, DiversitySet, Measurements, MirrorModel,
                      PropagationMatrix, PupilGrid, add_noise, build_modal_U,
                      build_zonal_U, defocus_phase, fft2c, ifft2c, make_basis,
                      make_defocus_diversities, make_mirror, make_pupil_grid,
                      mirror_phase, simulate_measurements)
from .lifted import (BlockLifted, build_M, nuclear_norm, rank_residuals,
                     svd2x2, svd2x2_stack, svt, svt_stack)
from .metrics import phase_from_coeffs, piston_align, snr_db, strehl

__version__ = "0.1.0"

__all__ = [
    "AdmmOptions", "SolveTrace", "nn_admm",
    "CoprOptions", "CoprResult", "copr", "misfit",
    "alternating_projections",
    "CoprError", "RankDeficiencyError", "ConvergenceError",
    "NumericalFailure", "ContainerFormatError",
    "f_i", "lambda_root", "t_scalar", "t_identity", "t_unitary",
    "solution_set_distance",
    "PupilGrid", "DiversitySet", "BasisSet", "MirrorModel",
    "PropagationMatrix", "Measurements",
    "make_pupil_grid", "defocus_phase", "make_defocus_diversities",
    "make_basis", "build_modal_U", "build_zonal_U", "fft2c", "ifft2c",
    "simulate_measurements", "add_noise", "make_mirror", "mirror_phase",
    "BlockLifted", "build_M", "nuclear_norm", "rank_residuals",
    "svd2x2", "svd2x2_stack", "svt", "svt_stack",
    "piston_align", "snr_db", "strehl", "phase_from_coeffs",
    "__version__",
]
