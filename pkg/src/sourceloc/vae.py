"""Encoder/decoder pair over seed vectors and the penalized training objective.

Training minimizes, over encoder, decoder (and optionally the forward
surrogate), the sum of a Gaussian forward-fit term, a Bernoulli
reconstruction term, the closed-form KL to the standard-normal prior, and
a hinge penalty that pushes predictions on sub-seed-sets below predictions
on their supersets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .graphs import Graph

log = logging.getLogger(__name__)

CLAMP = 1e-7  # probability floor/ceiling inside log terms


@dataclass
class VaeParams:
    encoder: nn.MlpParams  # |V| -> hidden -> hidden -> 2k (mean, log-variance)
    decoder: nn.MlpParams  # k -> hidden -> hidden -> |V|, sigmoid head
    latent_dim: int

    def tensors(self) -> list:
        return self.encoder.tensors() + self.decoder.tensors()


@dataclass
class TrainConfig:
    penalty_weight: float = 1.0
    lr: float = 0.002
    epochs: int = 1000
    batch_size: int = 32
    subsets_per_sample: int | None = None  # None = use every stored subset
    latent_dim: int = 16
    hidden: int = 64
    joint_finetune: bool = False
    seed: int | None = None

    def validate(self) -> None:
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def init_vae(num_nodes: int, latent_dim: int, hidden: int, rng: np.random.Generator) -> VaeParams:
    if latent_dim >= num_nodes:
        raise ValueError(f"latent_dim {latent_dim} must be < {num_nodes} nodes")
    encoder = nn.init_mlp([num_nodes, hidden, hidden, 2 * latent_dim], ["relu", "relu", "identity"], rng)
    decoder = nn.init_mlp([latent_dim, hidden, hidden, num_nodes], ["relu", "relu", "sigmoid"], rng)
    return VaeParams(encoder=encoder, decoder=decoder, latent_dim=latent_dim)


def _encode_full(vae: VaeParams, x):
    x_t = x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))
    out = nn.mlp_forward(vae.encoder, x_t)
    k = vae.latent_dim
    mu = ad.slice_cols(out, 0, k)
    logvar = ad.slice_cols(out, k, 2 * k)
    sigma = ad.exp(logvar * 0.5)
    return mu, sigma, logvar


def encode(vae: VaeParams, x):
    """Posterior mean and standard deviation for one x or a batch of rows."""
    mu, sigma, _ = _encode_full(vae, x)
    return mu, sigma


def reparameterize(mu, sigma, eps):
    """z = mu + sigma * eps with eps a standard-normal draw."""
    eps_t = eps if isinstance(eps, Tensor) else ad.constant(np.asarray(eps, dtype=np.float64))
    return ad.add(mu, ad.mul(sigma, eps_t))


def decode(vae: VaeParams, z) -> Tensor:
    """Per-node source probabilities from a latent vector (or batch)."""
    z_t = z if isinstance(z, Tensor) else ad.constant(np.asarray(z, dtype=np.float64))
    return nn.mlp_forward(vae.decoder, z_t)


def kl_normal(mu, sigma):
    """KL(N(mu, diag sigma^2) || N(0, I)), closed form, always >= 0.

    Plain arrays give a float; Tensors stay on the tape.
    """
    if isinstance(mu, Tensor) or isinstance(sigma, Tensor):
        mu_t = mu if isinstance(mu, Tensor) else ad.constant(mu)
        sigma_t = sigma if isinstance(sigma, Tensor) else ad.constant(sigma)
        s2 = ad.mul(sigma_t, sigma_t)
        inner = 1.0 + ad.log(s2) - ad.mul(mu_t, mu_t) - s2
        return ad.reduce_sum(inner) * -0.5
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    return float(-0.5 * np.sum(1.0 + np.log(sigma**2) - mu**2 - sigma**2))


def monotonicity_penalty(y_superset, y_subset):
    """Squared norm of the positive part of (subset prediction - superset prediction)."""
    if isinstance(y_superset, Tensor) or isinstance(y_subset, Tensor):
        yi = y_superset if isinstance(y_superset, Tensor) else ad.constant(y_superset)
        yj = y_subset if isinstance(y_subset, Tensor) else ad.constant(y_subset)
        viol = ad.maximum(yj - yi, ad.constant(np.zeros_like(yj.value)))
        return ad.reduce_sum(ad.mul(viol, viol))
    yi = np.asarray(y_superset, dtype=np.float64)
    yj = np.asarray(y_subset, dtype=np.float64)
    if yi.shape != yj.shape:
        raise ValueError("observation shapes differ")
    viol = np.maximum(yj - yi, 0.0)
    return float(np.sum(viol * viol))


def _bce_sum(target: Tensor, probs: Tensor) -> Tensor:
    """Per-example Bernoulli cross-entropy summed over nodes, averaged over the batch.

    Probabilities are clamped before the logs; summing over nodes keeps the
    reconstruction pressure on the same scale as the node count, which is
    what stops the posterior from collapsing into the prior.
    """
    p = ad.clip(probs, CLAMP, 1.0 - CLAMP)
    ll = ad.add(ad.mul(target, ad.log(p)), ad.mul(1.0 - target, ad.log(1.0 - p)))
    return ad.reduce_mean(ad.reduce_sum(ll, axis=1)) * -1.0


def _batch_arrays(batch, subsets_per_sample=None):
    xs = np.array([ep.source.astype(np.float64) for ep in batch])
    ys = np.array([ep.observation for ep in batch])
    n_sub = min(len(ep.subsets) for ep in batch)
    if subsets_per_sample is not None:
        n_sub = min(n_sub, subsets_per_sample)
    sub_x = [np.array([ep.subsets[s][0].astype(np.float64) for ep in batch]) for s in range(n_sub)]
    sub_y = [np.array([ep.subsets[s][1] for ep in batch]) for s in range(n_sub)]
    return xs, ys, sub_x, sub_y


def _elbo_graph(vae: VaeParams, fwd, g: Graph, x_t: Tensor, ys, sub_xs, eps, penalty_weight: float):
    """Assemble the full training loss on the tape; returns (loss, term dict)."""
    mu, sigma, logvar = _encode_full(vae, x_t)
    z = reparameterize(mu, sigma, eps)
    x_hat = decode(vae, z)
    recon = _bce_sum(x_t, x_hat)

    s2 = ad.exp(logvar)
    kl_rows = ad.reduce_sum(1.0 + logvar - ad.mul(mu, mu) - s2, axis=1) * -0.5
    kl = ad.reduce_mean(kl_rows)

    y_hat = fwd.predict(g, x_t)
    err = y_hat - ad.constant(ys)
    forward_fit = ad.reduce_mean(ad.mul(err, err))

    if sub_xs and penalty_weight > 0:
        per_pair = []
        for sx in sub_xs:
            y_sub = fwd.predict(g, ad.constant(sx))
            viol = ad.maximum(y_sub - y_hat, ad.constant(np.zeros_like(ys)))
            per_pair.append(ad.reduce_mean(ad.reduce_sum(ad.mul(viol, viol), axis=1)))
        penalty = per_pair[0]
        for p in per_pair[1:]:
            penalty = penalty + p
        penalty = penalty / len(per_pair)
    else:
        penalty = ad.constant(0.0)

    loss = forward_fit + recon + kl + penalty * penalty_weight
    terms = {
        "forward": float(forward_fit.value),
        "recon": float(recon.value),
        "kl": float(kl.value),
        "penalty": float(penalty.value),
    }
    return loss, terms


def elbo_loss(
    vae: VaeParams,
    fwd,
    g: Graph,
    batch,
    cfg: TrainConfig,
    rng: np.random.Generator,
    joint: bool = False,
    eps=None,
    wrt_x: bool = False,
):
    """Training loss over a batch of episodes plus gradients.

    One reparameterized latent sample per example.  Returns
    (loss value, term values, gradient dict); gradient keys are "encoder",
    "decoder", optionally "forward" (joint=True) and "x" (wrt_x=True).
    """
    if not batch:
        raise ValueError("empty batch")
    xs, ys, sub_xs, _ = _batch_arrays(batch, cfg.subsets_per_sample)
    if eps is None:
        eps = rng.standard_normal((len(batch), vae.latent_dim))
    x_t = ad.parameter(xs) if wrt_x else ad.constant(xs)
    wrt = vae.tensors()
    if joint:
        wrt = wrt + fwd.mlp.tensors()
    for t in wrt:
        t.grad = None
    loss, terms = _elbo_graph(vae, fwd, g, x_t, ys, sub_xs, eps, cfg.penalty_weight)
    if not np.isfinite(loss.value):
        raise RuntimeError("non-finite training loss")
    loss.backward()
    n_enc = len(vae.encoder.tensors())
    n_dec = len(vae.decoder.tensors())
    grads = [t.grad if t.grad is not None else np.zeros_like(t.value) for t in wrt]
    out = {"encoder": grads[:n_enc], "decoder": grads[n_enc : n_enc + n_dec]}
    if joint:
        out["forward"] = grads[n_enc + n_dec :]
    if wrt_x:
        out["x"] = x_t.grad if x_t.grad is not None else np.zeros_like(xs)
    return float(loss.value), terms, out


def train_vae(g: Graph, dataset, fwd, cfg: TrainConfig, rng: np.random.Generator):
    """Adam over encoder/decoder (and the surrogate when joint_finetune).

    Returns (VaeParams, per-epoch mean loss trace of length cfg.epochs).
    """
    cfg.validate()
    if not dataset:
        raise ValueError("empty dataset")
    vae = init_vae(g.num_nodes, cfg.latent_dim, cfg.hidden, rng)
    tensors = vae.tensors()
    if cfg.joint_finetune:
        tensors = tensors + fwd.mlp.tensors()
    opt = nn.AdamState.for_params(tensors, lr=cfg.lr)
    trace = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [dataset[i] for i in order[start : start + cfg.batch_size]]
            try:
                loss_val, _, grads = elbo_loss(vae, fwd, g, batch, cfg, rng, joint=cfg.joint_finetune)
            except RuntimeError as exc:
                raise RuntimeError(f"training diverged at epoch {epoch}: {exc}") from None
            flat = grads["encoder"] + grads["decoder"] + grads.get("forward", [])
            nn.adam_step(opt, tensors, flat)
            epoch_loss += loss_val * len(batch)
        trace.append(epoch_loss / n)
    return vae, trace


def posterior_mean_spread(vae: VaeParams, sources) -> float:
    """Mean per-dimension variance of posterior means across distinct inputs."""
    xs = np.array([np.asarray(s, dtype=np.float64) for s in sources])
    mu, _ = encode(vae, xs)
    return float(np.mean(np.var(mu.value, axis=0)))
