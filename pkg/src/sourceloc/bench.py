"""Repeated-trial experiment harness, ablation variants, and the scaling timer."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time

import networkx as nx
import numpy as np

from . import diffusion
from .baseline import lpsi_baseline
from .config import RunConfig, config_to_dict, derive_rng
from .forward_model import train_forward
from .graphs import Graph, from_edges
from .inference import build_latent_bank, infer
from .metrics import MetricsReport, precision_recall_f1, roc_auc
from .vae import train_vae

log = logging.getLogger(__name__)

METHODS = ("vae", "vae-init", "lpsi")


def graph_fingerprint(g: Graph) -> str:
    return hashlib.sha256(g.edges.astype("<i8").tobytes()).hexdigest()


def _model_key(g: Graph, cfg: RunConfig) -> str:
    payload = {
        "graph": graph_fingerprint(g),
        "seed": cfg.seed,
        "sim": dataclasses.asdict(cfg.sim),
        "dataset": dataclasses.asdict(cfg.dataset),
        "forward": dataclasses.asdict(cfg.forward),
        "train": dataclasses.asdict(cfg.train),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def build_training_dataset(g: Graph, cfg: RunConfig):
    rng = derive_rng(cfg.seed, "dataset")
    return diffusion.build_dataset(g, cfg.sim, cfg.dataset.episodes, cfg.dataset.subsets_per_episode, rng)


def train_models(g: Graph, cfg: RunConfig, dataset=None):
    """Forward surrogate first, then the VAE, then the latent bank."""
    if dataset is None:
        dataset = build_training_dataset(g, cfg)
    fwd, fwd_trace = train_forward(
        g,
        dataset,
        epochs=cfg.forward.epochs,
        lr=cfg.forward.lr,
        rng=derive_rng(cfg.seed, "forward"),
        depth=cfg.forward.depth,
        hidden=cfg.forward.hidden,
        batch_size=cfg.forward.batch_size,
        holdout_fraction=cfg.forward.holdout_fraction,
    )
    vae, vae_trace = train_vae(g, dataset, fwd, cfg.train, derive_rng(cfg.seed, "vae"))
    sources = [ep.source for ep in dataset]
    bank = build_latent_bank(vae, sources, derive_rng(cfg.seed, "bank"), limit=cfg.infer.bank_limit)
    return {
        "dataset": dataset,
        "forward": fwd,
        "forward_trace": fwd_trace,
        "vae": vae,
        "vae_trace": vae_trace,
        "bank": bank,
    }


def models_for(g: Graph, cfg: RunConfig, cache: dict | None = None):
    """Train or reuse models cached by (graph, config, seed) fingerprint."""
    if cache is None:
        return train_models(g, cfg)
    key = _model_key(g, cfg)
    if key not in cache:
        cache[key] = train_models(g, cfg)
    return cache[key]


def run_trial(g: Graph, cfg: RunConfig, models: dict, trial: int, methods) -> dict:
    """One observation, every requested method scored against the truth."""
    rng_obs = derive_rng(cfg.seed, "observation", trial)
    truth = diffusion.sample_sources(g, cfg.sim.source_fraction, rng_obs)
    y = diffusion.simulate_observation(g, truth, cfg.sim, rng_obs).astype(np.float64)
    results = {}
    for method in methods:
        if method == "lpsi":
            scores, pred = lpsi_baseline(g, y, alpha=cfg.lpsi.alpha, tol=cfg.lpsi.tol)
        elif method in ("vae", "vae-init"):
            icfg = dataclasses.replace(cfg.infer)
            if method == "vae-init":
                icfg.opt_steps = 0
            res = infer(y, models["forward"], models["vae"], models["bank"], g, icfg, derive_rng(cfg.seed, "infer", trial))
            scores, pred = res.relaxed, res.binary
        else:
            raise ValueError(f"unknown method {method!r}")
        pr, re, f1 = precision_recall_f1(pred, truth)
        auc = roc_auc(scores, truth)
        results[method] = {
            "precision": pr,
            "recall": re,
            "f1": f1,
            "auc": auc,
            "scores": scores,
            "prediction": pred,
            "truth": truth,
            "observation": y,
        }
    return results


def run_experiment(g: Graph, cfg: RunConfig, cache: dict | None = None):
    """Fresh observation per trial against shared trained models.

    Returns (reports by method, per-trial detail list, models).  A report
    with fewer successful trials than requested keeps the failure messages.
    """
    methods = list(cfg.experiment.methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; known: {METHODS}")
    models = models_for(g, cfg, cache)
    reports = {m: MetricsReport(method=m) for m in methods}
    details = []
    for trial in range(cfg.experiment.trials):
        try:
            outcome = run_trial(g, cfg, models, trial, methods)
        except Exception as exc:  # noqa: BLE001 - trial failures are collected, not fatal
            log.warning("trial %d failed: %s", trial, exc)
            for m in methods:
                reports[m].failures.append((trial, str(exc)))
            continue
        for m in methods:
            r = outcome[m]
            reports[m].add_trial(r["precision"], r["recall"], r["f1"], r["auc"])
        details.append(outcome)
    for m, rep in reports.items():
        if rep.trials < cfg.experiment.trials:
            log.warning("method %s completed %d/%d trials", m, rep.trials, cfg.experiment.trials)
    return reports, details, models


def regular_graph(size: int, degree: int, seed: int) -> Graph:
    gx = nx.random_regular_graph(degree, size, seed=seed)
    return from_edges(list(gx.edges()), num_nodes=size)


def time_scaling(cfg: RunConfig):
    """Wall-clock medians over cfg.scale.repeats runs at each synthetic size.

    Returns rows of (num_nodes, train_seconds, infer_seconds).
    """
    sizes = sorted(cfg.scale.sizes)
    rows = []
    for size in sizes:
        g = regular_graph(size, cfg.scale.degree, seed=cfg.seed + size)
        dataset = build_training_dataset(g, cfg)
        train_times, infer_times = [], []
        models = None
        for rep in range(cfg.scale.repeats):
            t0 = time.perf_counter()
            trained = train_models(g, cfg, dataset=dataset)
            train_times.append(time.perf_counter() - t0)
            if models is None:
                models = trained
        rng = derive_rng(cfg.seed, "scale-obs", size)
        truth = diffusion.sample_sources(g, cfg.sim.source_fraction, rng)
        y = diffusion.simulate_observation(g, truth, cfg.sim, rng).astype(np.float64)
        for rep in range(cfg.scale.repeats):
            t0 = time.perf_counter()
            infer(y, models["forward"], models["vae"], models["bank"], g, cfg.infer, derive_rng(cfg.seed, "scale-infer", size, rep))
            infer_times.append(time.perf_counter() - t0)
        rows.append((size, float(np.median(train_times)), float(np.median(infer_times))))
        log.info("size %d: train %.3fs infer %.3fs", size, rows[-1][1], rows[-1][2])
    return rows


def experiment_summary(cfg: RunConfig, reports: dict) -> dict:
    return {
        "config": config_to_dict(cfg),
        "methods": {m: rep.summary() for m, rep in reports.items()},
    }
