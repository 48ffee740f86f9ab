"""Spectral Galerkin approximation of HUM optimal controls for 2D waves."""

from .control_kernel import (ControlRegion, GramMatrix, SpaceWeight, TimeKernels, TimeWeight,
                             chi0_eval, gram_matrix, psi_eval, quadrature_oracle, time_kernels)
from .domains import DomainSpec
from .hum_solver import (ControlSolution, condition_number, control_field, kappa_growth,
                         solve_control)
from .mt_operator import (GalerkinSystem, HState, JBlocks, MTMatrix, assemble_mt, dyadic_projector,
                          hnorm, j_blocks, mt_apply)
from .bessel import bessel_j, bessel_zero
from .spectral_basis import (EigenBasis, EigenMode, disc_modes, fd_laplacian,
                             fd_lowest_modes, fd_modes, sample_on_grid, square_modes)

__version__ = "0.1.0"
