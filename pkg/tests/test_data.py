import numpy as np
import pytest

import oracles
from trimatte.config import AugmentConfig
from trimatte.data import (
    MattingSample,
    augment,
    build_synthetic_dataset,
    composite,
    fit_background,
    generate_trimap,
    ingest_dataset,
    synth_alpha,
    synthetic_samples,
    trimap_with_kernels,
)
from trimatte.exceptions import DatasetError, MissingDirectory, ShapeMismatch
from trimatte.planes import Plane, make_rng, save_gray


def checker(h, w, c=3, lo=0.2, hi=0.9):
    ys, xs = np.mgrid[0:h, 0:w]
    base = ((ys + xs) % 2).astype(np.float32) * (hi - lo) + lo
    return Plane(np.repeat(base[:, :, None], c, axis=2))


def test_composite_exact_at_extremes(rng):
    fg = Plane(rng.random((8, 8, 3), dtype=np.float32))
    bg = Plane(rng.random((8, 8, 3), dtype=np.float32))
    alpha = Plane(rng.choice([0.0, 0.37, 1.0], size=(8, 8, 1)).astype(np.float32))
    out = composite(fg, bg, alpha)
    ones = alpha.data[..., 0] == 1.0
    zeros = alpha.data[..., 0] == 0.0
    assert np.array_equal(out.data[ones], fg.data[ones])
    assert np.array_equal(out.data[zeros], bg.data[zeros])


def test_composite_exact_when_fg_equals_bg(rng):
    img = Plane(rng.random((6, 6, 3), dtype=np.float32))
    alpha = Plane(rng.random((6, 6, 1), dtype=np.float32))
    out = composite(img, img, alpha)
    assert np.array_equal(out.data, img.data)


def test_composite_midpoint_value():
    fg = Plane(np.ones((2, 2, 3), dtype=np.float32))
    bg = Plane(np.zeros((2, 2, 3), dtype=np.float32))
    alpha = Plane(np.full((2, 2, 1), 0.25, dtype=np.float32))
    out = composite(fg, bg, alpha)
    assert np.allclose(out.data, 0.25)


def test_fit_background_cover_and_crop():
    bg = checker(10, 20)
    fitted = fit_background(bg, 8, 8)
    assert (fitted.height, fitted.width) == (8, 8)
    same = fit_background(bg, 10, 20)
    assert same is bg or np.array_equal(same.data, bg.data)


def test_trimap_levels_and_nesting(rng):
    alpha = synth_alpha(rng, 48)
    tri = generate_trimap(alpha, rng=rng)
    values = set(np.unique(tri.data))
    assert values <= {0.0, 0.5, 1.0}
    # certain fg only where alpha is exactly 1; certain bg only where 0
    a = alpha.data[..., 0]
    t = tri.data[..., 0]
    assert (a[t == 1.0] == 1.0).all()
    assert (a[t == 0.0] == 0.0).all()


def test_trimap_constant_alphas():
    all0 = Plane(np.zeros((16, 16, 1), dtype=np.float32))
    assert (trimap_with_kernels(all0, 5, 5).data == 0.0).all()
    all1 = Plane(np.ones((16, 16, 1), dtype=np.float32))
    assert (trimap_with_kernels(all1, 5, 5).data == 1.0).all()


def test_trimap_matches_morphology_oracle_random(rng):
    for _ in range(8):
        alpha = (rng.random((20, 20)) > 0.6).astype(np.float32)
        k_e = int(rng.integers(1, 6))
        k_d = int(rng.integers(1, 6))
        got = trimap_with_kernels(Plane(alpha[:, :, None]),
                                  oracles_odd(k_e), oracles_odd(k_d))
        want = oracles.trimap_oracle(alpha, oracles_odd(k_e), oracles_odd(k_d))
        assert np.array_equal(got.data[..., 0], want)


def oracles_odd(k):
    return k if k % 2 == 1 else k + 1


def test_trimap_square_case_band_width():
    # centered 20x20 solid square in 64x64, 3x3 kernels: erosion retreats
    # one pixel, dilation advances one, so the unknown band is the square's
    # edge ring plus one dilated ring = 2 pixels per side
    alpha = np.zeros((64, 64), dtype=np.float32)
    alpha[22:42, 22:42] = 1.0
    got = trimap_with_kernels(Plane(alpha[:, :, None]), 3, 3).data[..., 0]
    want = oracles.trimap_oracle(alpha, 3, 3)
    assert np.array_equal(got, want)
    row = got[32]
    assert (row[23:41] == 1.0).all()
    assert (row[21:23] == 0.5).all() and (row[41:43] == 0.5).all()
    assert (row[:21] == 0.0).all() and (row[43:] == 0.0).all()


def test_augment_deterministic(rng):
    sample = synthetic_samples(1, size=96, seed=5)[0]
    cfg = AugmentConfig()
    a = augment(sample, 64, cfg, make_rng(11))
    b = augment(sample, 64, cfg, make_rng(11))
    assert np.array_equal(a.fg.data, b.fg.data)
    assert np.array_equal(a.alpha.data, b.alpha.data)
    assert np.array_equal(a.trimap.data, b.trimap.data)
    c = augment(sample, 64, cfg, make_rng(12))
    assert not np.array_equal(a.fg.data, c.fg.data)


def test_augment_output_contract(rng):
    sample = synthetic_samples(1, size=96, seed=6)[0]
    out = augment(sample, 64, AugmentConfig(), rng)
    assert (out.fg.height, out.fg.width) == (64, 64)
    assert (out.alpha.height, out.alpha.width) == (64, 64)
    assert (out.bg.height, out.bg.width) == (64, 64)
    assert out.trimap is not None
    assert set(np.unique(out.trimap.data)) <= {0.0, 0.5, 1.0}
    assert out.fg.data.min() >= 0.0 and out.fg.data.max() <= 1.0


def test_augment_pads_small_inputs(rng):
    sample = synthetic_samples(1, size=40, seed=7)[0]  # smaller than crop
    out = augment(sample, 64, AugmentConfig(), rng)
    assert (out.alpha.height, out.alpha.width) == (64, 64)


def test_augment_prefers_unknown_crops():
    # alpha concentrated in one corner; crops should usually include it
    alpha = np.zeros((128, 128), dtype=np.float32)
    alpha[8:40, 8:40] = 1.0
    alpha[16:32, 16:32] = 0.5
    fg = Plane(np.full((128, 128, 3), 0.5, np.float32))
    sample = MattingSample(fg=fg, bg=fg, alpha=Plane(alpha[:, :, None]))
    hits = 0
    for seed in range(10):
        out = augment(sample, 64, AugmentConfig(), make_rng(seed))
        if (out.trimap.data == 0.5).mean() >= 0.01:
            hits += 1
    assert hits >= 8


def test_sample_shape_validation(rng):
    fg = Plane(rng.random((8, 8, 3), dtype=np.float32))
    alpha = Plane(rng.random((9, 8, 1), dtype=np.float32))
    with pytest.raises(ShapeMismatch):
        MattingSample(fg=fg, bg=fg, alpha=alpha)


def test_ingest_cross_product(tmp_path):
    build_synthetic_dataset(tmp_path, num_fg=2, num_bg=3, size=16, seed=0)
    samples = list(ingest_dataset(tmp_path))
    assert len(samples) == 6
    names = [s.name for s in samples]
    assert names[0] == "0000+0000"
    assert names[1] == "0000+0001"  # fg-major ordering
    assert names[3] == "0001+0000"
    assert len(set(names)) == 6


def test_ingest_missing_directory(tmp_path):
    (tmp_path / "fg").mkdir()
    (tmp_path / "alpha").mkdir()
    with pytest.raises(MissingDirectory):
        list(ingest_dataset(tmp_path))


def test_ingest_count_mismatch(tmp_path, rng):
    build_synthetic_dataset(tmp_path, num_fg=2, num_bg=1, size=16, seed=0)
    extra = Plane(rng.random((16, 16, 1), dtype=np.float32))
    save_gray(tmp_path / "alpha" / "9999.png", extra)
    with pytest.raises(DatasetError):
        list(ingest_dataset(tmp_path))


def test_ingest_empty(tmp_path):
    for sub in ("fg", "alpha", "bg"):
        (tmp_path / sub).mkdir()
    with pytest.raises(DatasetError):
        list(ingest_dataset(tmp_path))


def test_synthetic_alpha_structure(rng):
    alpha = synth_alpha(rng, 64).data[..., 0]
    assert (alpha == 1.0).any(), "needs a solid core for certain fg"
    assert (alpha == 0.0).any(), "needs empty background"
    assert ((alpha > 0.0) & (alpha < 1.0)).any(), "needs a soft edge"


def test_build_synthetic_dataset_layout(tmp_path):
    info = build_synthetic_dataset(tmp_path, num_fg=2, num_bg=2, size=16, seed=1)
    assert info["samples"] == 4
    for sub in ("fg", "alpha", "bg"):
        assert len(list((tmp_path / sub).glob("*.png"))) == 2
