"""Source recovery from one diffused observation.

Starting from a per-node Bernoulli draw, the candidate seed vector first
descends an initialization loss (forward fit plus cross-entropy against the
decoder applied to the mean training latent), then the prediction loss
(forward fit minus the log-sum-exp mixture likelihood over the latent
bank), with clamping to [0, 1] and optional hard thresholding after every
step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .graphs import Graph
from .vae import CLAMP, VaeParams, decode, encode

log = logging.getLogger(__name__)


@dataclass
class InferenceConfig:
    init_prob: float = 0.5  # success probability of the per-node initial draw
    decision_threshold: float = 0.5
    init_steps: int = 20
    opt_steps: int = 50
    step_size: float = 0.1
    bank_limit: int = 2000
    project_every_step: bool = True

    def validate(self) -> None:
        if not 0.0 < self.init_prob < 1.0:
            raise ValueError("init_prob must be in (0, 1)")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError("decision_threshold must be in (0, 1)")
        if self.init_steps < 0 or self.opt_steps < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.init_steps > 0 and self.opt_steps > 0 and self.init_steps >= self.opt_steps:
            log.warning(
                "init_steps=%d >= opt_steps=%d; the intended regime is init_steps < opt_steps",
                self.init_steps,
                self.opt_steps,
            )


@dataclass
class LatentBank:
    """One reparameterized latent per training source, plus their mean."""

    samples: np.ndarray  # (N, k)
    means: np.ndarray  # (N, k) posterior means, kept for the mean definition
    mean_latent: np.ndarray  # (k,) average of the posterior means

    _decoded: dict = field(default_factory=dict, repr=False)

    def size(self) -> int:
        return len(self.samples)

    def decoded(self, vae: VaeParams):
        """Clamped decoder outputs and their logs for every bank entry (memoized)."""
        key = id(vae)
        if key not in self._decoded:
            d = np.clip(decode(vae, self.samples).value, CLAMP, 1.0 - CLAMP)
            self._decoded = {key: (d, np.log(d), np.log(1.0 - d))}
        return self._decoded[key]


def build_latent_bank(
    vae: VaeParams, sources, rng: np.random.Generator, limit: int | None = None, eps=None
) -> LatentBank:
    """Encode every training source; sample one latent per source.

    `eps` overrides the standard-normal draw (tests pin it to zero).
    """
    xs = np.array([np.asarray(s, dtype=np.float64) for s in sources])
    if len(xs) == 0:
        raise ValueError("empty training source list")
    if limit is not None and len(xs) > limit:
        keep = np.sort(rng.choice(len(xs), size=limit, replace=False))
        log.info("latent bank subsampled from %d to %d sources", len(xs), limit)
        xs = xs[keep]
    mu, sigma = encode(vae, xs)
    if eps is None:
        eps = rng.standard_normal(mu.value.shape)
    samples = mu.value + sigma.value * eps
    return LatentBank(samples=samples, means=mu.value.copy(), mean_latent=mu.value.mean(axis=0))


def trim(x):
    """Clamp entries into [0, 1]; in-range entries pass through unchanged."""
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def threshold(x, delta: float):
    """Binarize: 1 where entry >= delta, else 0."""
    return (np.asarray(x, dtype=np.float64) >= delta).astype(np.float64)


def _forward_fit(x_t: Tensor, y: np.ndarray, fwd, g: Graph) -> Tensor:
    y_hat = fwd.predict(g, x_t)
    diff = y_hat - ad.constant(y)
    return ad.reduce_sum(ad.mul(diff, diff))


def loss_init(x, y, fwd, vae: VaeParams, mean_latent, g: Graph):
    """Squared forward error plus cross-entropy of x against decode(mean latent).

    Tensor x stays on the tape; a plain array gives a float.
    """
    x_t = x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))
    f = np.clip(decode(vae, mean_latent).value, CLAMP, 1.0 - CLAMP)
    fit = _forward_fit(x_t, np.asarray(y, dtype=np.float64), fwd, g)
    ll = ad.add(ad.mul(x_t, ad.constant(np.log(f))), ad.mul(1.0 - x_t, ad.constant(np.log(1.0 - f))))
    loss = fit - ad.reduce_sum(ll)
    return loss if isinstance(x, Tensor) else float(loss.value)


def bernoulli_log_pmf(x_t: Tensor, log_d: np.ndarray, log_1md: np.ndarray) -> Tensor:
    """Per-bank-entry log-probability of x under each decoded Bernoulli vector."""
    return ad.add(ad.matmul(ad.constant(log_d), x_t), ad.matmul(ad.constant(log_1md), 1.0 - x_t))


def loss_pred(x, y, fwd, vae: VaeParams, bank: LatentBank, g: Graph):
    """Squared forward error minus the stabilized mixture log-likelihood.

    The mixture term is log sum over bank entries of the product Bernoulli
    pmf, evaluated as a log-sum-exp so large graphs cannot underflow.
    """
    if bank.size() == 0:
        raise ValueError("empty latent bank")
    x_t = x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))
    _, log_d, log_1md = bank.decoded(vae)
    fit = _forward_fit(x_t, np.asarray(y, dtype=np.float64), fwd, g)
    log_pmf = ad.log_sum_exp(bernoulli_log_pmf(x_t, log_d, log_1md))
    loss = fit - log_pmf
    return loss if isinstance(x, Tensor) else float(loss.value)


def naive_pmf_mixture(x, vae: VaeParams, bank: LatentBank) -> float:
    """Direct product-then-sum mixture likelihood; underflows on large graphs.

    Kept as the readable counterpart of the log-sum-exp path.
    """
    x = np.asarray(x, dtype=np.float64)
    d, _, _ = bank.decoded(vae)
    probs = (d**x) * ((1.0 - d) ** (1.0 - x))
    return float(np.sum(np.prod(probs, axis=1)))


@dataclass
class InferenceResult:
    binary: np.ndarray
    relaxed: np.ndarray  # last-iteration scores before the final threshold
    trace: list  # (phase, iteration, loss)


def infer(
    y,
    fwd,
    vae: VaeParams,
    bank: LatentBank,
    g: Graph,
    cfg: InferenceConfig,
    rng: np.random.Generator,
    callback=None,
) -> InferenceResult:
    """Two-phase projected Adam descent from a Bernoulli(init_prob) draw.

    Every iteration takes the gradient step on the continuous vector, clamps
    to [0, 1], and (when project_every_step) binarizes at the decision
    threshold.  The returned relaxed scores are the clamped values of the
    final iteration, before the closing binarization.  `callback(phase, it,
    x)` observes the post-projection iterate.
    """
    cfg.validate()
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (g.num_nodes,):
        raise ValueError(f"observation length {y.shape} != {g.num_nodes} nodes")
    x = (rng.random(g.num_nodes) < cfg.init_prob).astype(np.float64)
    relaxed = x.copy()
    trace = []

    def phase(name: str, steps: int, loss_builder) -> None:
        nonlocal x, relaxed
        if steps == 0:
            return
        leaf = ad.parameter(x)
        opt = nn.AdamState.for_params([leaf], lr=cfg.step_size)
        for it in range(steps):
            leaf.grad = None
            loss = loss_builder(leaf)
            if not np.isfinite(loss.value):
                raise RuntimeError(f"non-finite {name} loss at iteration {it}")
            loss.backward()
            nn.adam_step(opt, [leaf], [leaf.grad])
            leaf.value = trim(leaf.value)
            relaxed = leaf.value.copy()
            if cfg.project_every_step:
                leaf.value = threshold(leaf.value, cfg.decision_threshold)
            trace.append((name, it, float(loss.value)))
            if callback is not None:
                callback(name, it, leaf.value.copy())
        x = leaf.value

    phase("init", cfg.init_steps, lambda t: loss_init(t, y, fwd, vae, bank.mean_latent, g))
    phase("opt", cfg.opt_steps, lambda t: loss_pred(t, y, fwd, vae, bank, g))
    binary = threshold(relaxed, cfg.decision_threshold)
    return InferenceResult(binary=binary, relaxed=relaxed, trace=trace)
