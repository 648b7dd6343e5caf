import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from sourceloc import datasets, diffusion
from sourceloc.config import derive_rng
from sourceloc.forward_model import train_forward
from sourceloc.inference import build_latent_bank
from sourceloc.vae import TrainConfig, train_vae

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

_acceptance_lines = []


def record_acceptance(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    _acceptance_lines.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def karate():
    return datasets.builtin_graph("karate")


@pytest.fixture(scope="session")
def jazz():
    return datasets.builtin_graph("jazz")


@pytest.fixture(scope="session")
def karate_sim_cfg():
    return diffusion.SimConfig(pattern="SI", beta=0.25, max_steps=2, source_fraction=0.10, mc_runs=100)


@pytest.fixture(scope="session")
def karate_dataset(karate, karate_sim_cfg):
    rng = derive_rng(11, "unit-dataset")
    return diffusion.build_dataset(karate, karate_sim_cfg, 60, 3, rng)


@pytest.fixture(scope="session")
def mini_models(karate, karate_dataset):
    """Small but genuinely trained models for unit-level behavior tests."""
    fwd, _ = train_forward(karate, karate_dataset, epochs=80, lr=0.002, rng=derive_rng(11, "unit-fwd"))
    cfg = TrainConfig(latent_dim=8, hidden=32, epochs=150, batch_size=16, penalty_weight=1.0)
    vae, trace = train_vae(karate, karate_dataset, fwd, cfg, derive_rng(11, "unit-vae"))
    bank = build_latent_bank(vae, [ep.source for ep in karate_dataset], derive_rng(11, "unit-bank"))
    return {"forward": fwd, "vae": vae, "bank": bank, "trace": trace, "dataset": karate_dataset}


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
