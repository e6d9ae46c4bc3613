from .potential import DressingParams
from .potential import dressed_interaction_exact, dressed_interaction_softcore
from .potential import forster_pair_energy, interaction_range, potential_curve
from .cloud import AtomCloud, BeamProfile, CouplingMatrix
from .cloud import sample_cloud, coupling_matrix, meanfield_chi
from .cloud import interaction_sphere_count
from .sequence import build_spin_echo_sequence, build_floquet_sequence
from .spin import MeanFieldEvolver, ExactEvolver, CollectiveEvolver
from .spin import DecoherenceModel
from .spin import evolve_meanfield, evolve_exact, evolve_collective
from .spin import simulate_fringe
from .floquet import FloquetParams, fixed_points, map_fixed_points, stability
from .floquet import bifurcation_scan
from .analysis import PhaseMap, fit_fringe, fit_twisting, fit_chi
from .analysis import zero_phase_contour
from .config import ExperimentConfig
from .selftest import SelfTest
from .version import __version__
