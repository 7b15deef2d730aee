"""Headline behavior gate.

One test per advertised property, each at its stated tolerance. Every
test registers a PASS/FAIL line that pytest prints in the terminal
summary, so a full run doubles as the conformance report. The cost-ratio
table knowingly fails on its last row; README.md walks through why the
published figure there cannot be reproduced by any monotone schedule.
"""

import dataclasses
import time
from time import perf_counter

import numpy as np
import torch

import oracles
from conftest import fixed_trimap_samples, record_acceptance
from trimatte.backbone import Block, grid_partition, grid_unpartition
from trimatte.checkpoint import (
    init_from_pretrained,
    make_reference_backbone,
    save_backbone,
)
from trimatte.config import TINY_BACKBONE, VITS_BACKBONE, preset
from trimatte.costmodel import (
    attention_memory,
    dcm_params,
    inference_memory,
    model_flops,
    model_params,
)
from trimatte.data import trimap_with_kernels
from trimatte.decoder import build_model
from trimatte.losses import gradient_penalty_loss, laplacian_loss, separate_l1
from trimatte.metrics import (
    UNKNOWN_ONLY,
    WHOLE_IMAGE,
    conn_metric,
    evaluate,
    grad_metric,
    mse,
    sad,
)
from trimatte.planes import Plane
from trimatte.train import Trainer, grad_check

RES = (2048, 2048)
NECKLESS_VITS = dataclasses.replace(VITS_BACKBONE, neck_kind="none")


def test_cost_ratio_table():
    """Hybrid-attention FLOPs ratios vs the all-global baseline.

    Published reference points: 0, 2, 4 and 8 global blocks at roughly
    0.26, 0.38, 0.50 and 0.63 of baseline. The first three reproduce; the
    8-global row lands at 0.75 and cannot reach 0.63 (see README.md), so
    this test is expected to fail on that row and nowhere else.
    """
    start = perf_counter()
    baseline = model_flops(NECKLESS_VITS, RES, decoder="dcm",
                           num_global=NECKLESS_VITS.depth).flops
    counts = (0, 2, 4, 6, 8, NECKLESS_VITS.depth)
    ratios = {g: model_flops(NECKLESS_VITS, RES, decoder="dcm",
                             num_global=g).flops / baseline
              for g in counts}
    elapsed = perf_counter() - start

    targets = {0: 0.26, 2: 0.38, 4: 0.50, 8: 0.63}
    ordered = [ratios[g] for g in counts]
    monotone = all(a < b for a, b in zip(ordered, ordered[1:]))
    row_ok = {g: abs(ratios[g] - want) <= 0.08 for g, want in targets.items()}

    detail = " ".join(f"{g}g={ratios[g]:.3f}" for g in targets)
    detail += f" monotone={monotone} {elapsed * 1000:.0f}ms"
    record_acceptance("cost-ratio-table", all(row_ok.values()) and monotone
                      and elapsed < 1.0, detail)

    assert elapsed < 1.0
    assert monotone
    for g, want in targets.items():
        assert abs(ratios[g] - want) <= 0.08, (
            f"{g} global blocks: ratio {ratios[g]:.4f} outside "
            f"{want}±0.08")


def test_conv_neck_overhead():
    necked = model_flops(VITS_BACKBONE, RES, decoder="dcm").flops
    bare = model_flops(NECKLESS_VITS, RES, decoder="dcm").flops
    ratio = necked / bare
    delta = model_params(VITS_BACKBONE) - model_params(NECKLESS_VITS)
    ok = ratio <= 1.05 and abs(delta - 1.9e6) <= 0.3e6
    record_acceptance("neck-overhead", ok,
                      f"flops x{ratio:.4f} params +{delta / 1e6:.2f}M")
    assert ratio <= 1.05
    assert abs(delta - 1.9e6) <= 0.3e6


def test_detail_decoder_flops_fraction():
    dcm = model_flops(VITS_BACKBONE, RES, decoder="dcm").flops
    sfp = model_flops(VITS_BACKBONE, RES, decoder="sfp").flops
    ratio = dcm / sfp
    record_acceptance("decoder-flops-ratio", ratio <= 0.40,
                      f"dcm/sfp={ratio:.4f}")
    assert ratio <= 0.40


def test_grid_attention_memory():
    p = VITS_BACKBONE.patch_size
    grid = (RES[0] // p, RES[1] // p)
    n = grid[0] * grid[1]
    normal = attention_memory(n, VITS_BACKBONE.embed_dim,
                              VITS_BACKBONE.num_heads, "normal", grid=grid)
    grouped = attention_memory(n, VITS_BACKBONE.embed_dim,
                               VITS_BACKBONE.num_heads, "grid_sample",
                               grid=grid)
    score_ratio = grouped.score_bytes / normal.score_bytes

    dense = inference_memory(VITS_BACKBONE, RES, "normal")
    sampled = inference_memory(VITS_BACKBONE, RES, "grid")
    reduction = 1.0 - sampled["peak_bytes"] / dense["peak_bytes"]

    ok = score_ratio == 0.25 and reduction >= 0.50
    record_acceptance("grid-attention-memory", ok,
                      f"score x{score_ratio} peak -{reduction:.1%}")
    assert score_ratio == 0.25
    assert reduction >= 0.50


def test_parameter_budget():
    total = model_params(VITS_BACKBONE, decoder="dcm")
    decoder = dcm_params(VITS_BACKBONE)
    share = decoder / total
    ok = (abs(total - 25.8e6) <= 0.1 * 25.8e6 and decoder < 3e6
          and 0.06 <= share <= 0.12)
    record_acceptance(
        "parameter-budget", ok,
        f"total={total / 1e6:.2f}M decoder={decoder / 1e6:.2f}M "
        f"share={share:.1%}")
    assert abs(total - 25.8e6) <= 0.1 * 25.8e6
    assert decoder < 3e6
    assert 0.06 <= share <= 0.12


def test_gradient_suite():
    start = perf_counter()
    rng = np.random.default_rng(404)
    p = rng.random((16, 16))
    g = rng.random((16, 16))
    t = rng.choice([0.0, 0.5, 1.0], size=(16, 16))
    terms = {
        "separate_l1": lambda q: separate_l1(q, g, t),
        "laplacian": lambda q: laplacian_loss(q, g),
        "gradient_penalty": lambda q: gradient_penalty_loss(q, g),
    }
    worst_term = 0.0
    for fn in terms.values():
        pt = torch.from_numpy(p.copy()).requires_grad_(True)
        fn(pt).backward()
        analytic = pt.grad.numpy()
        fd = oracles.fd_gradient(
            lambda arr: float(fn(torch.from_numpy(arr))), p.copy(), step=1e-6)
        scale = max(np.abs(analytic).max(), np.abs(fd).max(), 1e-12)
        worst_term = max(worst_term, np.abs(analytic - fd).max() / scale)

    sample = fixed_trimap_samples(1, 16, seed=123, kernel=3)[0]
    model = build_model(TINY_BACKBONE, seed=7)
    end_to_end = grad_check(model, sample, n_scalars=150, seed=0)
    elapsed = perf_counter() - start

    ok = (worst_term < 1e-4 and end_to_end.max_rel_err < 1e-3
          and elapsed < 120.0)
    record_acceptance(
        "gradient-suite", ok,
        f"terms={worst_term:.1e} model={end_to_end.max_rel_err:.1e} "
        f"{elapsed:.0f}s")
    assert worst_term < 1e-4
    assert end_to_end.max_rel_err < 1e-3
    assert elapsed < 120.0


def test_attention_equivalences():
    torch.manual_seed(0)
    blk = Block(32, 2, mlp_ratio=4, window_size=4)
    x = torch.randn(2, 4, 4, 32)
    with torch.no_grad():
        window_err = float((blk(x, "window") - blk(x, "global")).abs().max())

    torch.manual_seed(1)
    uniform = torch.randn(1, 1, 1, 32).expand(1, 6, 6, 32).contiguous()
    with torch.no_grad():
        grid_err = float((blk(uniform, "grid")
                          - blk(uniform, "global")).abs().max())

    y = torch.randn(3, 6, 8, 5)
    groups, size = grid_partition(y)
    exact = torch.equal(grid_unpartition(groups, size), y)

    ok = window_err < 1e-5 and grid_err < 1e-6 and exact
    record_acceptance(
        "attention-equivalences", ok,
        f"window={window_err:.1e} grid={grid_err:.1e} round-trip={exact}")
    assert window_err < 1e-5
    assert grid_err < 1e-6
    assert exact


def test_zero_slice_inflation(tmp_path):
    cfg = dataclasses.replace(TINY_BACKBONE, neck_kind="none")
    ref = make_reference_backbone(cfg, seed=11)
    path = tmp_path / "pretrained"
    save_backbone(path, ref, dataclasses.replace(cfg, in_channels=3))
    model = init_from_pretrained(path, cfg, seed=5)

    torch.manual_seed(3)
    img = torch.randn(2, 3, 32, 32)
    with_zero_trimap = torch.cat([img, torch.zeros(2, 1, 32, 32)], dim=1)
    with torch.no_grad():
        want = ref(img)
        got = model.backbone(with_zero_trimap)
    err = float((want - got).abs().max())
    record_acceptance("zero-slice-inflation", err < 1e-5, f"max err {err:.1e}")
    assert err < 1e-5


def test_metric_oracles():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        h = int(rng.integers(8, 21))
        w = int(rng.integers(8, 21))
        pred = rng.random((h, w))
        gt = rng.random((h, w))
        mask = rng.random((h, w)) < 0.5
        if not mask.any():
            mask[0, 0] = True
        pairs = [
            (sad(pred, gt, mask), oracles.sad_oracle(pred, gt, mask)),
            (mse(pred, gt, mask), oracles.mse_oracle(pred, gt, mask)),
            (grad_metric(pred, gt, mask), oracles.grad_oracle(pred, gt, mask)),
            (conn_metric(pred, gt, mask), oracles.conn_oracle(pred, gt, mask)),
        ]
        for ours, theirs in pairs:
            worst = max(worst, oracles.rel_err(ours, theirs))

    # evaluate() agrees with the oracles in both region modes
    pred = rng.random((18, 14))
    gt = rng.random((18, 14))
    trimap = rng.choice([0.0, 0.5, 1.0], size=(18, 14))
    trimap[0, 0] = 0.5
    unknown = trimap == 0.5
    everywhere = np.ones_like(unknown)
    for mode, mask in ((UNKNOWN_ONLY, unknown), (WHOLE_IMAGE, everywhere)):
        report = evaluate(pred, gt, trimap, mode)
        worst = max(
            worst,
            oracles.rel_err(report.sad, oracles.sad_oracle(pred, gt, mask)),
            oracles.rel_err(report.mse, oracles.mse_oracle(pred, gt, mask)),
            oracles.rel_err(report.grad, oracles.grad_oracle(pred, gt, mask)),
            oracles.rel_err(report.conn, oracles.conn_oracle(pred, gt, mask)),
        )
    record_acceptance("metric-oracles", worst < 1e-5,
                      f"worst rel err {worst:.1e} over 1000 instances")
    assert worst < 1e-5


def test_morphology_oracle():
    alpha = np.zeros((64, 64, 1), dtype=np.float32)
    alpha[22:42, 22:42] = 1.0  # 20x20 solid square
    plane = Plane(alpha)
    ours = trimap_with_kernels(plane, 3, 3).data[..., 0]
    want = oracles.trimap_oracle(alpha[..., 0], 3, 3)
    exact = np.array_equal(ours, want)

    def band_width(trimap):
        cols = np.where(trimap[32] == 0.5)[0]
        left = cols[cols < 32]
        return left.size

    ok = exact and band_width(ours) == band_width(want)
    record_acceptance(
        "morphology-oracle", ok,
        f"exact={exact} band={band_width(ours)}px (oracle "
        f"{band_width(want)}px)")
    assert exact
    assert band_width(ours) == band_width(want)


def test_overfit_sanity(overfit_run, tiny_cfg):
    reduction = 1.0 - overfit_run["sad_after"] / overfit_run["sad_before"]
    seconds = overfit_run["train_seconds"]

    def ten_steps():
        torch.manual_seed(0)
        model = build_model(tiny_cfg.backbone, seed=3)
        trainer = Trainer(model, tiny_cfg, rng=np.random.default_rng(1))
        trainer.run(overfit_run["samples"], steps=10, do_augment=False)
        return model.state_dict()

    a, b = ten_steps(), ten_steps()
    identical = all(torch.equal(a[k], b[k]) for k in a)

    ok = reduction >= 0.80 and identical and seconds < 600.0
    record_acceptance(
        "overfit-sanity", ok,
        f"sad -{reduction:.1%} deterministic={identical} {seconds:.0f}s")
    assert reduction >= 0.80, (
        f"sad {overfit_run['sad_before']:.4f} -> "
        f"{overfit_run['sad_after']:.4f}")
    assert identical
    assert seconds < 600.0


def test_grid_vs_normal_drift(overfit_run):
    normal = overfit_run["sad_after"]
    grid = overfit_run["sad_after_grid"]
    drift = abs(grid - normal) / max(normal, 1e-9)
    record_acceptance("grid-vs-normal-drift", drift <= 0.10,
                      f"drift {drift:.3f} (normal {normal:.4f}, "
                      f"grid {grid:.4f})")
    assert drift <= 0.10
