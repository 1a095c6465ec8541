"""Restricted Boltzmann machines with Glauber and tethered Monte Carlo sampling."""
from .kernels import BACKEND
from .pca import PcaBasis, compute_pca, magnetizations
from .rbm import RbmParams, SpinState
from .tmc import PotentialEstimate, ScanConfig, TetherGrid, run_potential_scan, tmc_generate_samples
from .train import TrainConfig

__version__ = "0.1.0"

__all__ = ["BACKEND", "PcaBasis", "compute_pca", "magnetizations", "RbmParams", "SpinState",
           "PotentialEstimate", "ScanConfig", "TetherGrid", "run_potential_scan",
           "tmc_generate_samples", "TrainConfig"]
