"""Differentiable forward diffusion estimators.

The trainable surrogate maps a (relaxed) seed vector to per-node infection
probabilities: each node's features are its own seed value, the seed mass
propagated 1..T hops through the normalized adjacency, and its normalized
degree; a shared per-node MLP with sigmoid head turns features into a
probability.  Anything exposing predict/grad_x with the same shapes plugs
into training and inference the same way; the deterministic closure oracle
below is the reference example.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .graphs import Graph

log = logging.getLogger(__name__)

_FWD_MAGIC = b"SRCLOCFWD1\n"


@dataclass
class ForwardParams:
    """Shared per-node MLP over T propagation features plus degree."""

    mlp: nn.MlpParams
    depth: int

    def predict(self, g: Graph, x) -> Tensor:
        return forward_predict(self, g, x)

    def grad_x(self, g: Graph, x, upstream) -> np.ndarray:
        return forward_grad_x(self, g, x, upstream)


def init_forward(depth: int = 3, hidden: int = 32, rng: np.random.Generator | None = None) -> ForwardParams:
    rng = rng if rng is not None else np.random.default_rng(0)
    mlp = nn.init_mlp([depth + 2, hidden, hidden, 1], ["relu", "relu", "sigmoid"], rng)
    return ForwardParams(mlp=mlp, depth=depth)


def _node_features(params: ForwardParams, g: Graph, x: Tensor) -> Tensor:
    cols = [x]
    h = x
    for _ in range(params.depth):
        h = ad.sparse_propagate(h, g.norm_adjacency, g.norm_adjacency_t)
        cols.append(h)
    deg = g.degrees.astype(np.float64) / max(1, int(g.degrees.max()))
    if x.value.ndim == 2:
        deg = np.tile(deg, (x.value.shape[0], 1))
    cols.append(ad.constant(deg))
    return ad.feature_matrix(cols)


def forward_predict(params: ForwardParams, g: Graph, x) -> Tensor:
    """Infection probabilities for one seed vector or a batch of rows."""
    x_t = x if isinstance(x, Tensor) else ad.constant(x)
    if x_t.value.shape[-1] != g.num_nodes:
        raise ValueError(f"seed vector length {x_t.value.shape[-1]} != {g.num_nodes} nodes")
    feats = _node_features(params, g, x_t)
    out = nn.mlp_forward(params.mlp, feats)
    return ad.reshape(out, x_t.value.shape)


def forward_grad_x(params: ForwardParams, g: Graph, x, upstream) -> np.ndarray:
    """Gradient of sum(upstream * predict(x)) with respect to x."""
    leaf = ad.parameter(np.asarray(x, dtype=np.float64))
    y = forward_predict(params, g, leaf)
    ad.reduce_sum(ad.mul(y, ad.constant(upstream))).backward()
    return leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)


def _dataset_matrix(dataset):
    xs, ys = [], []
    for ep in dataset:
        xs.append(ep.source.astype(np.float64))
        ys.append(ep.observation)
        for sub, obs in ep.subsets:
            xs.append(sub.astype(np.float64))
            ys.append(obs)
    return np.array(xs), np.array(ys)


def train_forward(
    g: Graph,
    dataset,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    depth: int = 3,
    hidden: int = 32,
    batch_size: int = 64,
    holdout_fraction: float = 0.1,
):
    """Fit the surrogate to Monte-Carlo targets by minibatch Adam on MSE.

    Returns (params at best held-out MSE, per-epoch (train, holdout) trace).
    """
    if not dataset:
        raise ValueError("empty dataset")
    params = init_forward(depth=depth, hidden=hidden, rng=rng)
    xs, ys = _dataset_matrix(dataset)
    n = len(xs)
    perm = rng.permutation(n)
    n_hold = max(1, int(round(holdout_fraction * n))) if n > 1 else 0
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    if len(train_idx) == 0:
        train_idx = perm
    x_tr, y_tr = xs[train_idx], ys[train_idx]
    x_ho, y_ho = xs[hold_idx], ys[hold_idx]

    tensors = params.mlp.tensors()
    opt = nn.AdamState.for_params(tensors, lr=lr)
    best = (np.inf, params.mlp.copy_values())
    trace = []

    def mse_value(xb, yb) -> float:
        pred = forward_predict(params, g, xb)
        return float(np.mean((pred.value - yb) ** 2))

    for epoch in range(epochs):
        order = rng.permutation(len(x_tr))
        epoch_loss = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            for t in tensors:
                t.grad = None
            pred = forward_predict(params, g, x_tr[idx])
            err = pred - ad.constant(y_tr[idx])
            loss = ad.reduce_mean(ad.mul(err, err))
            if not np.isfinite(loss.value):
                raise RuntimeError(f"non-finite forward-model loss at epoch {epoch}")
            loss.backward()
            nn.adam_step(opt, tensors, [t.grad for t in tensors])
            epoch_loss += float(loss.value) * len(idx)
        train_mse = epoch_loss / len(x_tr)
        hold_mse = mse_value(x_ho, y_ho) if len(x_ho) else train_mse
        trace.append((train_mse, hold_mse))
        if hold_mse < best[0]:
            best = (hold_mse, params.mlp.copy_values())
    params.mlp.load_values(best[1])
    return params, trace


class DeterministicDiffusionOracle:
    """Closure of deterministic single-contact-certain spread within `steps` hops.

    For relaxed seeds treated as independent Bernoulli indicators the exact
    infection probability of node v is 1 - prod over u within distance
    `steps` of (1 - x_u); exactly monotone in the seed set and
    differentiable, so it doubles as a reference forward model in tests.
    """

    def __init__(self, g: Graph, steps: int):
        self.graph = g
        self.steps = steps
        reach = sp.identity(g.num_nodes, dtype=np.float64, format="csr")
        hop = g.adjacency + sp.identity(g.num_nodes, dtype=np.float64, format="csr")
        for _ in range(steps):
            reach = reach @ hop
        reach.data = np.ones_like(reach.data)
        self.reach = reach.tocsr()
        self.reach_t = self.reach.T.tocsr()

    def predict(self, g: Graph, x) -> Tensor:
        x_t = x if isinstance(x, Tensor) else ad.constant(x)
        safe = ad.clip(1.0 - x_t, 1e-12, 1.0)
        log_miss = ad.sparse_propagate(ad.log(safe), self.reach, self.reach_t)
        return 1.0 - ad.exp(log_miss)

    def grad_x(self, g: Graph, x, upstream) -> np.ndarray:
        leaf = ad.parameter(np.asarray(x, dtype=np.float64))
        y = self.predict(g, leaf)
        ad.reduce_sum(ad.mul(y, ad.constant(upstream))).backward()
        return leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)


# persistence --------------------------------------------------------------


def forward_to_bytes(params: ForwardParams) -> bytes:
    return _FWD_MAGIC + struct.pack("<I", params.depth) + nn.params_to_bytes(params.mlp)


def forward_from_bytes(blob: bytes) -> ForwardParams:
    if not blob.startswith(_FWD_MAGIC):
        raise ValueError("bad forward-model magic")
    off = len(_FWD_MAGIC)
    (depth,) = struct.unpack_from("<I", blob, off)
    return ForwardParams(mlp=nn.params_from_bytes(blob[off + 4 :]), depth=depth)
