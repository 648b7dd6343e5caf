"""Command-line pipeline: gen-data, train, infer, eval, scale.

Every command echoes its fully resolved configuration before running and
exits nonzero exactly when a declared output artifact was not produced.
Verbosity comes from the SOURCELOC_LOG environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, diffusion, report
from .bundle import load_bundle, save_bundle
from .config import RunConfig, config_to_dict, derive_rng, dump_config, load_config
from .graphs import load_edge_list
from .inference import build_latent_bank, infer

log = logging.getLogger("sourceloc")


def _setup_logging() -> None:
    level = os.environ.get("SOURCELOC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.paths.out = args.out
    return cfg


def _echo(cfg: RunConfig) -> None:
    print("resolved config:")
    print(dump_config(cfg))


def _require(cfg: RunConfig, field: str):
    value = getattr(cfg.paths, field)
    if not value:
        raise ValueError(f"config field paths.{field} is required for this command")
    if field in ("graph", "dataset", "model") and not Path(value).exists():
        raise FileNotFoundError(f"config field paths.{field}: no such file {value!r}")
    return value


def _check_artifacts(paths) -> int:
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        print(f"error: missing output artifacts: {missing}", file=sys.stderr)
        return 1
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _resolve(args)
    _echo(cfg)
    g = load_edge_list(_require(cfg, "graph"))
    out = report.ensure_dir(cfg.paths.out)
    dataset_path = cfg.paths.dataset or str(out / "dataset.bin")
    episodes = bench.build_training_dataset(g, cfg)
    digest = diffusion.save_dataset(
        dataset_path,
        episodes,
        g.num_nodes,
        manifest_extra={
            "graph": cfg.paths.graph,
            "seed": cfg.seed,
            "sim": dataclasses.asdict(cfg.sim),
            "subsets_per_episode": cfg.dataset.subsets_per_episode,
        },
    )
    print(f"dataset sha256 {digest}")
    return _check_artifacts([dataset_path, f"{dataset_path}.manifest.json"])


def cmd_train(args) -> int:
    cfg = _resolve(args)
    _echo(cfg)
    g = load_edge_list(_require(cfg, "graph"))
    dataset_path = _require(cfg, "dataset")
    episodes, num_nodes, digest = diffusion.load_dataset(dataset_path)
    if num_nodes != g.num_nodes:
        raise ValueError(f"dataset has {num_nodes} nodes but graph has {g.num_nodes}")
    out = report.ensure_dir(cfg.paths.out)
    models = bench.train_models(g, cfg, dataset=episodes)
    model_path = cfg.paths.model or str(out / "model.bundle")
    manifest = {
        "latent_dim": cfg.train.latent_dim,
        "penalty_weight": cfg.train.penalty_weight,
        "epochs": cfg.train.epochs,
        "forward_epochs": cfg.forward.epochs,
        "lr": cfg.train.lr,
        "seed": cfg.seed,
        "dataset_sha256": digest,
    }
    save_bundle(model_path, models["forward"], models["vae"], manifest)
    fwd_csv = out / "forward_loss.csv"
    vae_csv = out / "vae_loss.csv"
    report.write_loss_csv(fwd_csv, [(i, tr, ho) for i, (tr, ho) in enumerate(models["forward_trace"])], ["epoch", "train_mse", "holdout_mse"])
    report.write_loss_csv(vae_csv, list(enumerate(models["vae_trace"])), ["epoch", "loss"])
    fig = out / "loss_curves.png"
    report.plot_loss_curves(
        fig,
        {
            "forward train": [t for t, _ in models["forward_trace"]],
            "vae train": models["vae_trace"],
        },
    )
    with open(model_path, "rb") as fh:
        print(f"bundle sha256 {hashlib.sha256(fh.read()).hexdigest()}")
    return _check_artifacts([model_path, f"{model_path}.manifest.json", fwd_csv, vae_csv, fig])


def _load_observation(path, num_nodes: int) -> np.ndarray:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            values.append(float(text.split()[-1]))
    y = np.array(values, dtype=np.float64)
    if len(y) != num_nodes:
        raise ValueError(f"observation has {len(y)} entries but graph has {num_nodes} nodes")
    return y


def cmd_infer(args) -> int:
    cfg = _resolve(args)
    _echo(cfg)
    g = load_edge_list(_require(cfg, "graph"))
    fwd, vae, _ = load_bundle(_require(cfg, "model"))
    episodes, _, _ = diffusion.load_dataset(_require(cfg, "dataset"))
    bank = build_latent_bank(vae, [ep.source for ep in episodes], derive_rng(cfg.seed, "bank"), limit=cfg.infer.bank_limit)
    y = _load_observation(args.observation, g.num_nodes)
    result = infer(y, fwd, vae, bank, g, cfg.infer, derive_rng(cfg.seed, "infer"))
    out = report.ensure_dir(cfg.paths.out)
    pred_path = out / "prediction.csv"
    report.write_scores(pred_path, result.relaxed, result.binary)
    fig = out / "score_profile.png"
    report.plot_score_profile(fig, result.relaxed, cfg.infer.decision_threshold)
    losses = [t[2] for t in result.trace]
    first = losses[0] if losses else float("nan")
    last = losses[-1] if losses else float("nan")
    print(f"predicted seeds: {int(result.binary.sum())} of {g.num_nodes}")
    print(f"loss trace: first {first:.6f} last {last:.6f} over {len(losses)} iterations")
    return _check_artifacts([pred_path, fig])


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    _echo(cfg)
    g = load_edge_list(_require(cfg, "graph"))
    reports, details, _ = bench.run_experiment(g, cfg)
    out = report.ensure_dir(cfg.paths.out)
    csv_path = out / "report.csv"
    json_path = out / "summary.json"
    fig = out / "metrics.png"
    report.write_trials_csv(csv_path, reports)
    report.write_summary_json(json_path, bench.experiment_summary(cfg, reports))
    report.plot_metric_bars(fig, reports)
    scores_dir = report.ensure_dir(out / "scores")
    score_files = []
    for trial, outcome in enumerate(details):
        for method, r in outcome.items():
            path = scores_dir / f"trial{trial:03d}_{method}.csv"
            report.write_scores(path, r["scores"], r["prediction"])
            score_files.append(path)
    for method in sorted(reports):
        rep = reports[method]
        print(
            f"{method}: PR {rep.mean('precision'):.4f} RE {rep.mean('recall'):.4f} "
            f"F1 {rep.mean('f1'):.4f} AUC {rep.mean('auc'):.4f} over {rep.trials} trials"
        )
    return _check_artifacts([csv_path, json_path, fig, *score_files])


def cmd_scale(args) -> int:
    cfg = _resolve(args)
    _echo(cfg)
    rows = bench.time_scaling(cfg)
    out = report.ensure_dir(cfg.paths.out)
    csv_path = out / "scaling.csv"
    json_path = out / "scaling.json"
    fig = out / "scaling.png"
    report.write_scaling_csv(csv_path, rows)
    report.write_summary_json(json_path, {"config": config_to_dict(cfg), "rows": rows})
    report.plot_scaling(fig, rows)
    for size, train_s, infer_s in rows:
        print(f"{size} nodes: train {train_s:.3f}s infer {infer_s:.3f}s")
    return _check_artifacts([csv_path, json_path, fig])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sourceloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": (cmd_gen_data, "simulate and persist a training dataset"),
        "train": (cmd_train, "train the forward surrogate and the generative model"),
        "infer": (cmd_infer, "recover sources from one observation file"),
        "eval": (cmd_eval, "repeated-trial benchmark with reports and figures"),
        "scale": (cmd_scale, "runtime measurements on synthetic graphs"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config path (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")
        if name == "infer":
            p.add_argument("--observation", required=True, help="per-node observation file")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
