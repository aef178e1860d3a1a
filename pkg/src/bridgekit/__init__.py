"""bridgekit: a diffusion-bridge toolkit for paired source-to-target translation.

Core pieces: bridge noise schedules with a soft (noise-added) end-point
prior, the closed-form reverse posterior with independent verification
oracles, a self-consistent recursive sampler, small reference networks on a
minimal reverse-mode autodiff engine, and an adversarial training loop --
all exercised on synthetic paired-translation tasks at desk scale.
"""

from .config import ExperimentConfig, load_config, save_config
from .data import PairedDataset, load_tensor, make_synthetic_pairs, normalize_volume, save_tensor
from .forward import sample_endpoint, sample_marginal, sample_step
from .metrics import MetricReport, psnr, ssim, wilcoxon_signed_rank
from .nets import NetConfig, build_discriminator, build_generator, time_embedding
from .posterior import PosteriorCoeffs, bayes_oracle_1d, posterior_coeffs, posterior_sample
from .rng import RngStreams
from .sampler import ChainResult, SamplerOptions, reverse_chain, self_consistent_estimate
from .schedule import ScheduleConfig, ScheduleTable, StepParams, build_schedule, transition_params
from .training import TrainConfig, discriminator_loss, generator_loss, train, train_step

__all__ = [
    "ChainResult",
    "ExperimentConfig",
    "MetricReport",
    "NetConfig",
    "PairedDataset",
    "PosteriorCoeffs",
    "RngStreams",
    "SamplerOptions",
    "ScheduleConfig",
    "ScheduleTable",
    "StepParams",
    "TrainConfig",
    "bayes_oracle_1d",
    "build_discriminator",
    "build_generator",
    "build_schedule",
    "discriminator_loss",
    "generator_loss",
    "load_config",
    "load_tensor",
    "make_synthetic_pairs",
    "normalize_volume",
    "posterior_coeffs",
    "posterior_sample",
    "psnr",
    "reverse_chain",
    "sample_endpoint",
    "sample_marginal",
    "sample_step",
    "save_config",
    "save_tensor",
    "self_consistent_estimate",
    "ssim",
    "time_embedding",
    "train",
    "train_step",
    "transition_params",
    "wilcoxon_signed_rank",
]

__version__ = "0.1.0"
