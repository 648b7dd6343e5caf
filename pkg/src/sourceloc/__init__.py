"""Graph diffusion source localization: simulators, generative model, inference."""

from .autodiff import Tensor, finite_diff_check, grad, log_sum_exp
from .baseline import lpsi_baseline
from .diffusion import (
    EpisodePair,
    SimConfig,
    build_dataset,
    estimate_mc_observation,
    sample_monotone_subsets,
    sample_sources,
    simulate_si,
    simulate_sir,
)
from .forward_model import DeterministicDiffusionOracle, ForwardParams, forward_grad_x, forward_predict, train_forward
from .graphs import Graph, from_edges, load_edge_list, neighbors, row_normalize
from .inference import InferenceConfig, LatentBank, build_latent_bank, infer, loss_init, loss_pred, threshold, trim
from .metrics import MetricsReport, precision_recall_f1, roc_auc
from .vae import TrainConfig, VaeParams, decode, elbo_loss, encode, kl_normal, monotonicity_penalty, reparameterize, train_vae

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "finite_diff_check",
    "grad",
    "log_sum_exp",
    "lpsi_baseline",
    "EpisodePair",
    "SimConfig",
    "build_dataset",
    "estimate_mc_observation",
    "sample_monotone_subsets",
    "sample_sources",
    "simulate_si",
    "simulate_sir",
    "DeterministicDiffusionOracle",
    "ForwardParams",
    "forward_grad_x",
    "forward_predict",
    "train_forward",
    "Graph",
    "from_edges",
    "load_edge_list",
    "neighbors",
    "row_normalize",
    "InferenceConfig",
    "LatentBank",
    "build_latent_bank",
    "infer",
    "loss_init",
    "loss_pred",
    "threshold",
    "trim",
    "MetricsReport",
    "precision_recall_f1",
    "roc_auc",
    "TrainConfig",
    "VaeParams",
    "decode",
    "elbo_loss",
    "encode",
    "kl_normal",
    "monotonicity_penalty",
    "reparameterize",
    "train_vae",
]
