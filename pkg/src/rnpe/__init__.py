"""Robust neural posterior estimation with a spike-and-slab error model."""

from rnpe.denoise import (
    DenoiseResult,
    GaussianMarginal,
    HmcConfig,
    denoise_observation,
    hmc_run,
    joint_z_frequencies,
    misspecification_probabilities,
)
from rnpe.errormodel import (
    SpikeSlabConfig,
    error_log_likelihood,
    posterior_z_given,
    sample_error,
)
from rnpe.flows import BnafSpec, FlowModel, SplineFlowSpec
from rnpe.pipeline import (
    PosteriorHandle,
    TrainedArtifacts,
    npe_posterior,
    nnpe_posterior,
    rnpe_posterior,
    train_phase,
)
from rnpe.standardize import Standardizer, fit_standardizer
from rnpe.tasks import get_task
from rnpe.training import TrainConfig, fit_density_estimator

__version__ = "0.1.0"

__all__ = [
    "BnafSpec",
    "DenoiseResult",
    "FlowModel",
    "GaussianMarginal",
    "HmcConfig",
    "PosteriorHandle",
    "SpikeSlabConfig",
    "SplineFlowSpec",
    "Standardizer",
    "TrainConfig",
    "TrainedArtifacts",
    "denoise_observation",
    "error_log_likelihood",
    "fit_density_estimator",
    "fit_standardizer",
    "get_task",
    "hmc_run",
    "joint_z_frequencies",
    "misspecification_probabilities",
    "nnpe_posterior",
    "npe_posterior",
    "posterior_z_given",
    "rnpe_posterior",
    "sample_error",
    "train_phase",
]
