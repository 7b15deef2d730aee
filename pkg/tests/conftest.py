"""Shared fixtures and the acceptance-summary reporter.

The expensive artifacts (the 500-step overfit run) are session-scoped so
the sanity and drift checks share one training run. Acceptance tests
register one line each; pytest prints the roster after the run.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from trimatte.config import preset
from trimatte.data import MattingSample, synthetic_samples, trimap_with_kernels
from trimatte.decoder import build_model
from trimatte.inference import GRID_SAMPLE, NORMAL, infer_alpha
from trimatte.metrics import UNKNOWN_ONLY, evaluate
from trimatte.train import Trainer

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        line = f"{status:4s}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_cfg():
    return preset("tiny")


def fixed_trimap_samples(count: int, size: int, seed: int,
                         kernel: int = 5) -> list[MattingSample]:
    return [replace(s, trimap=trimap_with_kernels(s.alpha, kernel, kernel))
            for s in synthetic_samples(count, size=size, seed=seed)]


@pytest.fixture(scope="session")
def train_samples():
    return fixed_trimap_samples(8, 64, seed=77)


def mean_unknown_sad(model, samples, strategy: str = NORMAL) -> float:
    total = 0.0
    for s in samples:
        alpha = infer_alpha(model, s.composite(), s.trimap, strategy)
        report = evaluate(alpha.data[..., 0], s.alpha.data[..., 0],
                          s.trimap.data[..., 0], UNKNOWN_ONLY)
        total += report.sad
    return total / len(samples)


@pytest.fixture(scope="session")
def overfit_run(tiny_cfg, train_samples):
    """500 steps of the tiny preset on 8 fixed synthetic composites."""
    torch.set_num_threads(max(1, torch.get_num_threads()))
    model = build_model(tiny_cfg.backbone, seed=3)
    sad_before = mean_unknown_sad(model, train_samples)
    trainer = Trainer(model, tiny_cfg)
    start = time.time()
    trainer.run(train_samples, steps=500, do_augment=False, quiet=True)
    elapsed = time.time() - start
    sad_after = mean_unknown_sad(model, train_samples)
    sad_after_grid = mean_unknown_sad(model, train_samples, GRID_SAMPLE)
    return {
        "model": model,
        "samples": train_samples,
        "sad_before": sad_before,
        "sad_after": sad_after,
        "sad_after_grid": sad_after_grid,
        "train_seconds": elapsed,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
