"""Exact three-body scattering for the Calogero-Wolfes family of inverse-square potentials."""

from .coords import (BOUNDARY, JacobiState, ParticleState, PolarState, SectorSpec,
                     cartesian_from_jacobi, cartesian_from_polar, incoming_angle,
                     jacobi_from_cartesian, outgoing_angle, polar_from_jacobi, sector_of,
                     to_cm_frame)
from .dynamics import (IntegratorControls, ScatterReport, TrajectoryRecord, integrate,
                       prepare_scattering_state, random_initial_condition, scatter_experiment)
from .errors import (AsymptoticRegimeError, EigensolverError, IntegrationError, NumericalError,
                     SingularConfigurationError, ThreeBodyError, ValidationError)
from .exact import (OrbitConstants, TransferMatrix, analytic_state, angle_out,
                    canonicalize_delta, orbit_constants, predict_outgoing, transfer_matrix)
from .potentials import (Family, FamilyBVariant, PotentialSpec, conserved_quantities, forces,
                         potential_energy, potential_polar)
from .spectra import (AngularGrid, SpectrumResult, angular_spectrum, confined_spectrum_2d,
                      isospectrality_report)

__version__ = "0.1.0"
