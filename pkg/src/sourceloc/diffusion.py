"""Ground-truth epidemic processes, training-episode sampling, and cascade I/O.

SI and SIR share one vectorized stepping engine.  Infection and recovery
draws come from two generators derived identically in both processes, so
SIR with recovery probability 0 reproduces SI bit for bit when both are
handed generators seeded the same way.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph

log = logging.getLogger(__name__)

SI = "SI"
SIR = "SIR"

_DS_MAGIC = b"SRCLOCDS1\n"


@dataclass
class SimConfig:
    pattern: str = SI
    beta: float = 0.1  # per-contact infection probability per step
    gamma: float = 0.1  # per-step recovery probability (SIR only)
    max_steps: int = 200
    source_fraction: float = 0.10
    mc_runs: int = 200
    seed: int | None = None

    def validate(self) -> None:
        if self.pattern not in (SI, SIR):
            raise ValueError(f"unknown diffusion pattern {self.pattern!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 < self.source_fraction <= 1.0:
            raise ValueError("source_fraction must be in (0, 1]")
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be >= 1")


@dataclass
class EpisodePair:
    """One training sample: a source set, its observation, and monotone subsets."""

    source: np.ndarray
    observation: np.ndarray
    subsets: list = field(default_factory=list)  # (subset source, subset observation)
    degenerate: bool = False

    def check(self) -> None:
        for sub, _ in self.subsets:
            if np.any(sub > self.source):
                raise AssertionError("subset support escapes the source support")


def _derive_streams(rng: np.random.Generator):
    """Two child generators; SI and SIR derive them identically."""
    seeds = rng.integers(0, 2**63 - 1, size=2)
    return np.random.default_rng(int(seeds[0])), np.random.default_rng(int(seeds[1]))


def sample_sources(g: Graph, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Uniformly pick round(fraction * |V|) seed nodes, at least one."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    count = int(round(fraction * g.num_nodes))
    if count < 1:
        log.warning("fraction %.4f yields zero seeds on %d nodes; clamped to 1", fraction, g.num_nodes)
        count = 1
    seeds = np.zeros(g.num_nodes, dtype=np.int8)
    seeds[rng.choice(g.num_nodes, size=count, replace=False)] = 1
    return seeds


def _simulate_batch(
    g: Graph,
    seeds: np.ndarray,
    pattern: str,
    beta: float,
    gamma: float,
    max_steps: int,
    runs: int,
    rng: np.random.Generator,
    keep_history: bool = False,
):
    """Run `runs` independent chains in parallel rows.

    Per step every infected node exposes each susceptible neighbor
    independently with probability beta, i.e. a susceptible node with k
    infected neighbors turns with probability 1 - (1-beta)^k.  Recovery
    (SIR) rolls over the nodes that entered the step infected, so a node is
    infectious for at least the step it was infected in.
    """
    inf_rng, rec_rng = _derive_streams(rng)
    seeds_bool = seeds.astype(bool)
    if not seeds_bool.any():
        raise ValueError("seed set is empty")
    infected = np.tile(seeds_bool, (runs, 1))
    recovered = np.zeros_like(infected)
    history = [infected.copy()] if keep_history else None
    adj = g.adjacency
    for _ in range(max_steps):
        counts = (adj @ infected.T.astype(np.float64)).T
        susceptible = ~infected & ~recovered
        # a quiet step is not a fixpoint; stop only when no transition is possible
        can_infect = beta > 0.0 and bool(np.any(susceptible & (counts > 0)))
        can_recover = pattern == SIR and gamma > 0.0 and bool(infected.any())
        if not (can_infect or can_recover):
            break
        was_infected = infected.copy()
        p_infect = 1.0 - (1.0 - beta) ** counts
        u = inf_rng.random(infected.shape)
        new_inf = susceptible & (u < p_infect)
        infected |= new_inf
        if pattern == SIR:
            u_rec = rec_rng.random(infected.shape)
            new_rec = was_infected & (u_rec < gamma)
            infected &= ~new_rec
            recovered |= new_rec
        if keep_history:
            history.append(infected.copy())
    return infected, recovered, history


def simulate_si(g: Graph, seeds: np.ndarray, cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """One SI run; returns the final 0/1 infection vector."""
    infected, _, _ = _simulate_batch(g, seeds, SI, cfg.beta, 0.0, cfg.max_steps, 1, rng)
    return infected[0].astype(np.int8)


def simulate_sir(g: Graph, seeds: np.ndarray, cfg: SimConfig, rng: np.random.Generator):
    """One SIR run; returns (status vector with 0=S 1=I 2=R, binary observation).

    The observation marks only currently-infected nodes; recovered nodes
    count as uninfected.
    """
    infected, recovered, _ = _simulate_batch(g, seeds, SIR, cfg.beta, cfg.gamma, cfg.max_steps, 1, rng)
    status = np.zeros(g.num_nodes, dtype=np.int8)
    status[infected[0]] = 1
    status[recovered[0]] = 2
    return status, infected[0].astype(np.int8)


def simulate_observation(g: Graph, seeds: np.ndarray, cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Binary observation under cfg.pattern (SI final state or SIR snapshot)."""
    if cfg.pattern == SI:
        return simulate_si(g, seeds, cfg, rng)
    return simulate_sir(g, seeds, cfg, rng)[1]


def si_step_history(g: Graph, seeds: np.ndarray, cfg: SimConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-step infected indicator vectors of one SI run (step 0 = seeds)."""
    _, _, history = _simulate_batch(g, seeds, SI, cfg.beta, 0.0, cfg.max_steps, 1, rng, keep_history=True)
    return [h[0].astype(np.int8) for h in history]


def estimate_mc_observation(
    g: Graph, seeds: np.ndarray, cfg: SimConfig, runs: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-node empirical infection frequency over independent runs.

    Runs occupy rows of one vectorized batch; the reduction over rows is a
    plain mean, so the result is reproducible for a fixed generator state.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    infected, _, _ = _simulate_batch(g, seeds, cfg.pattern, cfg.beta, cfg.gamma, cfg.max_steps, runs, rng)
    return infected.mean(axis=0)


def sample_monotone_subsets(x: np.ndarray, count: int, rng: np.random.Generator):
    """Strict sub-seed-sets of x: each drops k seeds, k uniform in [1, seeds-1].

    A single-seed x has no strict nonempty subset; copies are returned with
    the degenerate flag set.
    """
    support = np.flatnonzero(x)
    if len(support) == 0:
        raise ValueError("x has no seeds")
    if len(support) == 1:
        return [x.copy() for _ in range(count)], True
    subsets = []
    for _ in range(count):
        k = int(rng.integers(1, len(support)))
        drop = rng.choice(support, size=k, replace=False)
        sub = x.copy()
        sub[drop] = 0
        subsets.append(sub)
    return subsets, False


def build_dataset(
    g: Graph,
    cfg: SimConfig,
    num_episodes: int,
    subsets_per_episode: int,
    rng: np.random.Generator,
) -> list[EpisodePair]:
    """Sample sources, their Monte-Carlo observations, and monotone subsets."""
    if num_episodes < 1:
        raise ValueError("num_episodes must be >= 1")
    cfg.validate()
    episodes = []
    for _ in range(num_episodes):
        source = sample_sources(g, cfg.source_fraction, rng)
        obs = estimate_mc_observation(g, source, cfg, cfg.mc_runs, rng)
        subsets, degenerate = sample_monotone_subsets(source, subsets_per_episode, rng)
        pairs = [(sub, estimate_mc_observation(g, sub, cfg, cfg.mc_runs, rng)) for sub in subsets]
        episodes.append(EpisodePair(source=source, observation=obs, subsets=pairs, degenerate=degenerate))
    return episodes


def load_cascades(
    g: Graph,
    path,
    top_fraction: float = 0.05,
    bottom_fraction: float = 0.30,
    observed: str = "all",
) -> list[EpisodePair]:
    """Episodes from timestamped cascade records ("cascade_id node_id timestamp").

    Per cascade the earliest ceil(top_fraction * n) nodes become sources and
    the latest ceil(bottom_fraction * n) are always marked infected.  With
    observed="all" (default) every participant is infected in the
    observation; observed="bottom-only" restricts it to the late group.
    Ties are broken by node id.  Subset lists are left empty.
    """
    if observed not in ("all", "bottom-only"):
        raise ValueError(f"unknown observed mode {observed!r}")
    cascades: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'cascade node time', got {text!r}")
            cid, node, time = parts[0], int(parts[1]), float(parts[2])
            if not 0 <= node < g.num_nodes:
                raise ValueError(f"{path}:{lineno}: node id {node} outside graph with {g.num_nodes} nodes")
            cascades.setdefault(cid, []).append((time, node))
    if not cascades:
        raise ValueError(f"{path}: no cascade records")
    episodes = []
    for cid in sorted(cascades):
        records = sorted(cascades[cid])  # (time, node): node id breaks time ties
        n = len(records)
        n_src = max(1, math.ceil(top_fraction * n))
        n_bot = max(1, math.ceil(bottom_fraction * n))
        source = np.zeros(g.num_nodes, dtype=np.int8)
        for _, node in records[:n_src]:
            source[node] = 1
        obs = np.zeros(g.num_nodes, dtype=np.float64)
        marked = records if observed == "all" else records[n - n_bot :]
        for _, node in marked:
            obs[node] = 1.0
        for _, node in records[n - n_bot :]:
            if obs[node] != 1.0:
                raise AssertionError("bottom-fraction node not marked infected")
        episodes.append(EpisodePair(source=source, observation=obs, subsets=[], degenerate=False))
    return episodes


# dataset persistence -----------------------------------------------------


def _pack_binary(vec: np.ndarray) -> bytes:
    return np.packbits(vec.astype(np.uint8)).tobytes()


def _unpack_binary(blob: bytes, n: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(blob, dtype=np.uint8), count=n).astype(np.int8)


def save_dataset(path, episodes: list[EpisodePair], num_nodes: int, manifest_extra: dict | None = None) -> str:
    """Write the packed episode file plus a JSON manifest sidecar; returns the hash."""
    nbytes = (num_nodes + 7) // 8
    chunks = [_DS_MAGIC, struct.pack("<II", num_nodes, len(episodes))]
    for ep in episodes:
        chunks.append(struct.pack("<BI", int(ep.degenerate), len(ep.subsets)))
        chunks.append(_pack_binary(ep.source))
        chunks.append(ep.observation.astype("<f8").tobytes())
        for sub, obs in ep.subsets:
            chunks.append(_pack_binary(sub))
            chunks.append(obs.astype("<f8").tobytes())
    blob = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(blob)
    digest = hashlib.sha256(blob).hexdigest()
    manifest = {
        "num_nodes": num_nodes,
        "episodes": len(episodes),
        "sha256": digest,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(f"{path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    assert nbytes > 0
    return digest


def load_dataset(path):
    """Read a packed episode file; returns (episodes, num_nodes, sha256)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_DS_MAGIC):
        raise ValueError(f"{path}: bad dataset magic")
    digest = hashlib.sha256(blob).hexdigest()
    off = len(_DS_MAGIC)
    num_nodes, n_episodes = struct.unpack_from("<II", blob, off)
    off += 8
    nbytes = (num_nodes + 7) // 8
    episodes = []
    for _ in range(n_episodes):
        degenerate, n_subsets = struct.unpack_from("<BI", blob, off)
        off += 5
        source = _unpack_binary(blob[off : off + nbytes], num_nodes)
        off += nbytes
        obs = np.frombuffer(blob, dtype="<f8", count=num_nodes, offset=off).copy()
        off += 8 * num_nodes
        subsets = []
        for _ in range(n_subsets):
            sub = _unpack_binary(blob[off : off + nbytes], num_nodes)
            off += nbytes
            sobs = np.frombuffer(blob, dtype="<f8", count=num_nodes, offset=off).copy()
            off += 8 * num_nodes
            subsets.append((sub, sobs))
        episodes.append(EpisodePair(source=source, observation=obs, subsets=subsets, degenerate=bool(degenerate)))
    return episodes, num_nodes, digest
