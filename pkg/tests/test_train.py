import dataclasses
import json

import numpy as np
import pytest
import torch

from trimatte.config import preset
from trimatte.data import augment
from trimatte.decoder import build_model
from trimatte.exceptions import NonFiniteLoss
from trimatte.train import (
    Trainer,
    batch_tensors,
    build_optimizer,
    layerwise_multipliers,
    lr_at,
    set_epoch_lr,
    train_step,
)

from conftest import fixed_trimap_samples


def test_lr_schedule_steps():
    assert lr_at(0, 1.0) == 1.0
    assert lr_at(29, 1.0) == 1.0
    assert lr_at(30, 1.0) == pytest.approx(0.1)
    assert lr_at(89, 1.0) == pytest.approx(0.1)
    assert lr_at(90, 1.0) == pytest.approx(0.05)
    assert lr_at(500, 1.0) == pytest.approx(0.05)
    assert lr_at(3, 2.0, drops=(2, 4)) == pytest.approx(0.2)


def test_layerwise_multipliers_shape():
    mults = layerwise_multipliers(12, decay=0.65)
    assert len(mults) == 12
    assert mults[-1] == pytest.approx(0.65)
    assert mults[0] == pytest.approx(0.65 ** 12)
    # strictly increasing toward the output end
    assert all(a < b for a, b in zip(mults, mults[1:]))


def test_optimizer_group_structure(tiny_cfg):
    model = build_model(tiny_cfg.backbone, seed=0)
    opt = build_optimizer(model, tiny_cfg)
    depth = tiny_cfg.backbone.depth
    decay = tiny_cfg.layer_decay

    seen = {}
    for group in opt.param_groups:
        assert group["lr"] == pytest.approx(tiny_cfg.base_lr * group["lr_scale"])
        for p in group["params"]:
            seen[id(p)] = group

    for name, p in model.named_parameters():
        group = seen[id(p)]
        if name.startswith("backbone.blocks."):
            layer = int(name.split(".")[2])
            want = decay ** (depth - layer)
        elif name.startswith(("backbone.patch_embed.", "backbone.pos_embed")):
            want = decay ** (depth + 1)
        else:
            want = 1.0
        assert group["lr_scale"] == pytest.approx(want), name
        if name == "backbone.pos_embed" or p.dim() <= 1:
            assert group["weight_decay"] == 0.0, name
        else:
            assert group["weight_decay"] == pytest.approx(tiny_cfg.weight_decay), name


def test_optimizer_covers_every_parameter(tiny_cfg):
    model = build_model(tiny_cfg.backbone, seed=0)
    opt = build_optimizer(model, tiny_cfg)
    in_groups = {id(p) for g in opt.param_groups for p in g["params"]}
    for name, p in model.named_parameters():
        assert id(p) in in_groups, name


def test_set_epoch_lr_rescales(tiny_cfg):
    model = build_model(tiny_cfg.backbone, seed=0)
    opt = build_optimizer(model, tiny_cfg)
    cfg = dataclasses.replace(tiny_cfg, lr_drop_epochs=(2, 4))
    rate = set_epoch_lr(opt, 3, cfg)
    assert rate == pytest.approx(0.1 * cfg.base_lr)
    for group in opt.param_groups:
        assert group["lr"] == pytest.approx(rate * group["lr_scale"])


def test_batch_tensors_shapes():
    samples = fixed_trimap_samples(count=3, size=64, seed=4)
    x, gt, tri = batch_tensors(samples)
    assert x.shape == (3, 4, 64, 64)
    assert gt.shape == (3, 1, 64, 64)
    assert tri.shape == (3, 1, 64, 64)
    assert x.dtype == torch.float32
    # 4th channel is the trimap plane
    assert torch.equal(x[:, 3:4], tri)


def test_batch_tensors_requires_trimap(train_samples):
    bare = dataclasses.replace(train_samples[0], trimap=None)
    with pytest.raises(ValueError):
        batch_tensors([bare])


def test_train_step_updates_parameters(tiny_cfg):
    model = build_model(tiny_cfg.backbone, seed=0)
    opt = build_optimizer(model, tiny_cfg)
    batch = batch_tensors(fixed_trimap_samples(count=2, size=64, seed=1))
    before = {n: p.detach().clone() for n, p in model.named_parameters()}
    breakdown = train_step(model, batch, opt)
    assert np.isfinite(breakdown.total)
    moved = sum(not torch.equal(before[n], p.detach())
                for n, p in model.named_parameters())
    assert moved > 0.9 * len(before)


def test_train_step_rejects_nonfinite(tiny_cfg):
    model = build_model(tiny_cfg.backbone, seed=0)
    with torch.no_grad():
        model.head.conv.weight.mul_(float("nan"))
    opt = build_optimizer(model, tiny_cfg)
    batch = batch_tensors(fixed_trimap_samples(count=1, size=64, seed=1))
    with pytest.raises(NonFiniteLoss):
        train_step(model, batch, opt)


def test_trainer_run_writes_jsonl_log(tmp_path, tiny_cfg, train_samples):
    model = build_model(tiny_cfg.backbone, seed=0)
    trainer = Trainer(model, tiny_cfg)
    log = tmp_path / "log.jsonl"
    steps_per_epoch = max(1, len(train_samples) // tiny_cfg.batch_size)
    history = trainer.run(train_samples, steps=2 * steps_per_epoch,
                          do_augment=False, log_path=log)
    assert len(history) == 2 * steps_per_epoch
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert len(lines) == 2
    for rec in lines:
        assert set(rec) >= {"step", "epoch", "lr", "l1", "lap", "gp", "total"}
    assert lines[0]["step"] == steps_per_epoch
    assert lines[1]["step"] == 2 * steps_per_epoch


def test_trainer_augmented_batches_draw_from_rng(tiny_cfg, train_samples):
    model = build_model(tiny_cfg.backbone, seed=0)
    a = Trainer(model, tiny_cfg, rng=np.random.default_rng(5))
    b_model = build_model(tiny_cfg.backbone, seed=0)
    b = Trainer(b_model, tiny_cfg, rng=np.random.default_rng(5))
    batch_a = batch_tensors(a._draw_batch(train_samples, do_augment=True))
    batch_b = batch_tensors(b._draw_batch(train_samples, do_augment=True))
    assert torch.equal(batch_a[0], batch_b[0])
    c = Trainer(build_model(tiny_cfg.backbone, seed=0), tiny_cfg,
                rng=np.random.default_rng(6))
    batch_c = batch_tensors(c._draw_batch(train_samples, do_augment=True))
    assert not torch.equal(batch_a[0], batch_c[0])


def test_resume_is_bit_identical(tmp_path, tiny_cfg, train_samples):
    def fresh():
        model = build_model(tiny_cfg.backbone, seed=2)
        return Trainer(model, tiny_cfg, rng=np.random.default_rng(9))

    torch.manual_seed(0)
    straight = fresh()
    straight.run(train_samples, steps=4, do_augment=False)

    torch.manual_seed(0)
    split = fresh()
    split.run(train_samples, steps=2, do_augment=False)
    split.save(tmp_path / "mid")
    resumed = Trainer.resume(tmp_path / "mid")
    assert resumed.step_count == 2
    resumed.run(train_samples, steps=2, do_augment=False)

    sa = straight.model.state_dict()
    sb = resumed.model.state_dict()
    for key in sa:
        assert torch.equal(sa[key], sb[key]), key


def test_resume_restores_optimizer_moments(tmp_path, tiny_cfg, train_samples):
    model = build_model(tiny_cfg.backbone, seed=2)
    trainer = Trainer(model, tiny_cfg)
    trainer.run(train_samples, steps=2, do_augment=False)
    trainer.save(tmp_path / "ck")
    resumed = Trainer.resume(tmp_path / "ck")
    orig = {n: trainer.optimizer.state[p]
            for g in trainer.optimizer.param_groups for p in g["params"]
            for n, q in trainer.model.named_parameters() if q is p}
    got = {n: resumed.optimizer.state[p]
           for g in resumed.optimizer.param_groups for p in g["params"]
           for n, q in resumed.model.named_parameters() if q is p}
    assert set(orig) == set(got)
    for name in orig:
        assert torch.equal(orig[name]["exp_avg"], got[name]["exp_avg"]), name
        assert torch.equal(orig[name]["exp_avg_sq"], got[name]["exp_avg_sq"]), name
        assert float(orig[name]["step"]) == float(got[name]["step"])


def test_epoch_counter_follows_steps(tiny_cfg, train_samples):
    model = build_model(tiny_cfg.backbone, seed=0)
    trainer = Trainer(model, tiny_cfg)
    per = max(1, len(train_samples) // tiny_cfg.batch_size)
    assert trainer._epoch(per) == 0
    trainer.step_count = per
    assert trainer._epoch(per) == 1
    trainer.step_count = 5 * per + per - 1
    assert trainer._epoch(per) == 5
