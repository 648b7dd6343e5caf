"""Model bundle persistence: forward + encoder + decoder blocks plus a manifest."""

from __future__ import annotations

import json
import struct

from . import nn
from .forward_model import ForwardParams, forward_from_bytes, forward_to_bytes
from .vae import VaeParams

_MAGIC = b"SRCLOCMB1\n"


def bundle_to_bytes(fwd: ForwardParams, vae: VaeParams) -> bytes:
    blocks = [forward_to_bytes(fwd), nn.params_to_bytes(vae.encoder), nn.params_to_bytes(vae.decoder)]
    out = [_MAGIC, struct.pack("<I", vae.latent_dim)]
    for blob in blocks:
        out.append(struct.pack("<I", len(blob)))
        out.append(blob)
    return b"".join(out)


def bundle_from_bytes(blob: bytes):
    if not blob.startswith(_MAGIC):
        raise ValueError("bad model bundle magic")
    off = len(_MAGIC)
    (latent_dim,) = struct.unpack_from("<I", blob, off)
    off += 4
    blocks = []
    for _ in range(3):
        (n,) = struct.unpack_from("<I", blob, off)
        off += 4
        blocks.append(blob[off : off + n])
        off += n
    fwd = forward_from_bytes(blocks[0])
    vae = VaeParams(
        encoder=nn.params_from_bytes(blocks[1]),
        decoder=nn.params_from_bytes(blocks[2]),
        latent_dim=latent_dim,
    )
    return fwd, vae


def save_bundle(path, fwd: ForwardParams, vae: VaeParams, manifest: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(bundle_to_bytes(fwd, vae))
    with open(f"{path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(path):
    """Returns (forward params, vae params, manifest dict)."""
    with open(path, "rb") as fh:
        fwd, vae = bundle_from_bytes(fh.read())
    try:
        with open(f"{path}.manifest.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        manifest = {}
    return fwd, vae, manifest
