"""Numerical toolkit for constrained Willmore surfaces in the 4-sphere.

Surfaces live in the projective light cone of R^{5,1}.  The package builds
the associated family of flat connections of a constrained Willmore surface
and implements its transformation theory: spectral deformation, simple-factor
dressing, permutability of dressing transforms, the untwisted picture on the
normal-lines quadric, and the quaternionic Riccati/Darboux picture.
"""

from .grid import FD2, SPECTRAL, GridSpec
from .lorentz import MINK, MinkowskiSpace
from .surface import (GENERATORS, CSCBundle, MultiplierForm, NVForms,
                      SurfaceGrid, central_sphere, cw_residual_pair,
                      fit_multiplier, generate_surface, quadratic_differential,
                      read_cwsurf, split_connection, willmore_density,
                      willmore_energy, write_cwsurf)
from .connections import (ConnectionFamily, SpectralDeformation,
                          Trivialization, assemble_family, curvature_residual,
                          energy_density, spectral_deform, total_energy,
                          transport_line, transport_tree, trivialize)
from .dressing import (BacklundGauge, DressResult, SimpleFactor,
                       algebraic_backlund, backlund_gauge, conj_star,
                       default_initial_line, dress, dress_family,
                       energy_exactness_field, gamma_factor, intersect_planes,
                       moebius, monodromy_initial_line, permute,
                       plane_isotropy_residual)
from .untwisted import (NormalSplit, UntwistedDressResult, UntwistedFactor,
                        UntwistResult, aq_split, normal_split, pole_orders,
                        pole_scan, retwist, retwist_pole_order, untwist,
                        untwisted_dress, untwisted_moebius)
from .quaternionic import (DarbouxResult, QuaternionicData, QuaternionicModel,
                           RiccatiParams, backlund_line_from_x, build_model,
                           darboux, eigenplane_parallel_residual,
                           first_integral_drift, initial_x, integrate_riccati,
                           integrate_t_riccati, integrate_x_riccati,
                           lift_residual, parallel_plane_line, riccati_params,
                           sphere_residuals, t_first_integral_drift,
                           to_quaternionic)

__version__ = "0.1.0"
