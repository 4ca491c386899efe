"""Heterodyne trajectories of the quantum contact process and unsupervised phase detection."""

__version__ = "0.1.0"

from .model import ModelParams, build_hamiltonian, jump_operators, local_densities, expect_jump, apply_heff
from .noise import NoiseStream, sample_increment
from .dense import em_step, simulate_trajectory, simulate_batch
from .mps import MpsState, mps_from_product, tebd_trotter_step, stochastic_onsite_step, simulate_trajectory_mps
from .lindblad import lindblad_rhs, integrate_master_equation
from .records import TrajectoryRecord
from .dataset import SlidingAbsAverage, sliding_abs_average, assemble_features, read_trajectory, write_trajectory
from .autoencoder import Autoencoder
from .clustering import PhaseMixture, fit_gmm
from .analysis import PhaseCurve, PowerLawFit, PowerLawRegressor, fit_power_law, sweep_classify

__all__ = [
    "ModelParams", "build_hamiltonian", "jump_operators", "local_densities", "expect_jump", "apply_heff",
    "NoiseStream", "sample_increment", "em_step", "simulate_trajectory", "simulate_batch",
    "MpsState", "mps_from_product", "tebd_trotter_step", "stochastic_onsite_step", "simulate_trajectory_mps",
    "lindblad_rhs", "integrate_master_equation", "TrajectoryRecord", "SlidingAbsAverage",
    "sliding_abs_average", "assemble_features", "read_trajectory", "write_trajectory",
    "Autoencoder", "PhaseMixture", "fit_gmm", "PhaseCurve", "PowerLawFit", "PowerLawRegressor",
    "fit_power_law", "sweep_classify",
]
