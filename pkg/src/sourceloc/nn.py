"""Small multilayer perceptrons, Adam, and flat-file parameter persistence."""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

log = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "relu", "sigmoid")

_MAGIC = b"NNPARAMS1\n"


@dataclass
class MlpParams:
    """Per-layer weights/biases plus an activation tag per layer."""

    weights: list
    biases: list
    activations: list

    @property
    def input_dim(self) -> int:
        return self.weights[0].value.shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].value.shape[1]

    def tensors(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy_values(self) -> list:
        return [t.value.copy() for t in self.tensors()]

    def load_values(self, values) -> None:
        for t, v in zip(self.tensors(), values):
            t.value = v.copy()


def init_mlp(dims, activations, rng: np.random.Generator) -> MlpParams:
    """Uniform(-r, r) init with r = sqrt(6 / (fan_in + fan_out)) per layer."""
    if len(activations) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    for a in activations:
        if a not in ACTIVATIONS:
            raise ValueError(f"unknown activation {a!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(ad.parameter(rng.uniform(-r, r, size=(fan_in, fan_out))))
        biases.append(ad.parameter(np.zeros(fan_out)))
    return MlpParams(weights, biases, list(activations))


def mlp_forward(params: MlpParams, x) -> Tensor:
    """Run the MLP on a vector or a batch of row vectors."""
    h = x if isinstance(x, Tensor) else ad.constant(x)
    in_dim = h.value.shape[-1] if h.value.ndim > 0 else 1
    if in_dim != params.input_dim:
        raise ValueError(f"input width {in_dim} != first layer width {params.input_dim}")
    for w, b, act in zip(params.weights, params.biases, params.activations):
        h = ad.add(ad.matmul(h, w), b)
        if act == "relu":
            h = ad.relu(h)
        elif act == "sigmoid":
            h = ad.sigmoid(h)
    return h


@dataclass
class AdamState:
    """Adam moments; shapes mirror the parameter list it was built for."""

    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 0.002, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        s = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        s.m = [np.zeros_like(p.value) for p in params]
        s.v = [np.zeros_like(p.value) for p in params]
        return s


def adam_step(state: AdamState, params, grads) -> None:
    """One bias-corrected Adam update, in place.

    A non-finite gradient skips the whole step (reported via logging) so a
    single bad batch cannot poison the moments.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient lists do not match optimizer state")
    for p, g in zip(params, grads):
        if p.value.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.value.shape}")
    if any(not np.all(np.isfinite(g)) for g in grads):
        log.warning("non-finite gradient at step %d; update skipped", state.step + 1)
        return
    state.step += 1
    b1t = 1.0 - state.beta1 ** state.step
    b2t = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)


# persistence ------------------------------------------------------------

_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}
_ACT_NAME = {i: name for name, i in _ACT_CODE.items()}


def params_to_bytes(params: MlpParams) -> bytes:
    """Versioned flat encoding: magic, dims, little-endian payload, crc32."""
    head = [_MAGIC, struct.pack("<I", len(params.weights))]
    payload = bytearray()
    for w, b, act in zip(params.weights, params.biases, params.activations):
        fan_in, fan_out = w.value.shape
        head.append(struct.pack("<IIB", fan_in, fan_out, _ACT_CODE[act]))
        payload += w.value.astype("<f8").tobytes()
        payload += b.value.astype("<f8").tobytes()
    blob = b"".join(head) + bytes(payload)
    return blob + struct.pack("<I", zlib.crc32(bytes(payload)) & 0xFFFFFFFF)


def params_from_bytes(blob: bytes) -> MlpParams:
    if not blob.startswith(_MAGIC):
        raise ValueError("bad parameter file magic")
    off = len(_MAGIC)
    (n_layers,) = struct.unpack_from("<I", blob, off)
    off += 4
    layers = []
    for _ in range(n_layers):
        fan_in, fan_out, code = struct.unpack_from("<IIB", blob, off)
        off += 9
        layers.append((fan_in, fan_out, _ACT_NAME[code]))
    payload_len = sum(8 * (fi * fo + fo) for fi, fo, _ in layers)
    payload = blob[off : off + payload_len]
    (crc,) = struct.unpack_from("<I", blob, off + payload_len)
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise ValueError("parameter file checksum mismatch")
    weights, biases, acts = [], [], []
    p = 0
    for fan_in, fan_out, act in layers:
        w = np.frombuffer(payload, dtype="<f8", count=fan_in * fan_out, offset=p).reshape(fan_in, fan_out)
        p += 8 * fan_in * fan_out
        b = np.frombuffer(payload, dtype="<f8", count=fan_out, offset=p)
        p += 8 * fan_out
        weights.append(ad.parameter(w.copy()))
        biases.append(ad.parameter(b.copy()))
        acts.append(act)
    return MlpParams(weights, biases, acts)


def save_params(params: MlpParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(params_to_bytes(params))


def load_params(path) -> MlpParams:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
