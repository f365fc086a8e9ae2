"""Block orthogonal least squares recovery with a blind stopping rule.

Submodules: ``block_model`` (matrices, signals, noise), ``coherence``,
``bounds`` (closed-form MIP bounds), ``recovery`` (greedy solvers) and
``harness`` (Monte Carlo sweeps and theory tables). ``bbols.cli`` is the
command line front end.
"""
from .block_model import (BlockMatrix, BlockSparseSignal, NoiseSpec, calibrate_noise,
                          gen_gaussian_block_orthogonal, gen_hybrid, gen_signal, is_success)
from .bounds import RegimeError, bounds_report
from .coherence import CoherenceProfile, coherence_profile, erc_gamma
from .harness import ExperimentConfig, run_bound_curves, run_sweep
from .io import ConfigError
from .recovery import RecoveryResult, StoppingRule, recover

__version__ = "0.1.0"
