"""Active fault detection for grid-forming inverters.

A bank of two steady-state Kalman filters (fault-free and faulty inverter
models) tracks the posterior probability of a fault, and a bounded auxiliary
perturbation on the current reference is designed to pull the two modes'
output distributions apart.
"""

__version__ = "0.1.0"

from .model import (InverterParams, Mode, MultiModel, NoiseSpec, assemble_multimodel,
                    build_fault_free, build_faulty, build_multimodel, discretize)
from .kalman import SteadyStateFilter, build_filter, filter_step, solve_dare
from .mmkf import PosteriorState, Residuals, decide, posterior_update, residuals
from .horizon import HorizonStats, horizon_stats, j_hat, phi
from .optimizer import (HarmonicBasis, PerturbationPlan, optimize_free, optimize_harmonic,
                        vertex_oracle)
from .sim import Experiment, run_mmkf, simulate_truth

__all__ = [
    "InverterParams", "Mode", "MultiModel", "NoiseSpec", "assemble_multimodel",
    "build_fault_free", "build_faulty", "build_multimodel", "discretize",
    "SteadyStateFilter", "build_filter", "filter_step", "solve_dare",
    "PosteriorState", "Residuals", "decide", "posterior_update", "residuals",
    "HorizonStats", "horizon_stats", "j_hat", "phi",
    "HarmonicBasis", "PerturbationPlan", "optimize_free", "optimize_harmonic", "vertex_oracle",
    "Experiment", "run_mmkf", "simulate_truth",
]
