"""Smoke tests for the python bindings."""

import numpy as np
import pytest

import fnfdenoise as fnf


def test_version():
    assert fnf.__version__


def test_scene_generation_deterministic():
    a1, f1 = fnf.generate_scene(7, 64, 64)
    a2, f2 = fnf.generate_scene(7, 64, 64)
    assert a1.shape == (64, 64, 3)
    assert np.array_equal(a1, a2) and np.array_equal(f1, f2)
    assert a1.min() >= 0.0 and a1.max() <= 1.0
    assert f1.min() >= 0.0 and f1.max() <= 1.0
    a3, _ = fnf.generate_scene(8, 64, 64)
    assert not np.array_equal(a1, a3)


def test_compose_pair():
    ambient = np.full((32, 32, 3), 0.4, np.float32)
    flash = np.full((32, 32, 3), 0.3, np.float32)
    nf, f = fnf.compose_pair(ambient, flash, 2.0)
    assert np.allclose(nf, 0.2) and np.allclose(f, 0.8)


def test_noise_statistics():
    img = np.full((100, 100, 3), 0.25, np.float32)
    noisy = fnf.add_noise(img, 0.01, 0.05, seed=3)
    var = noisy.astype(np.float64).var()
    expected = 0.01**2 + 0.05**2 * 0.25
    assert abs(var - expected) / expected < 0.05
    nm = fnf.noise_stddev_map(noisy, 0.01, 0.05)
    assert (nm >= 0.01 - 1e-7).all()


def test_filter_paths_agree():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (48, 48, 3)).astype(np.float32)
    a = rng.normal(0, 0.2, (4, 5, 5, 3)).astype(np.float32)
    b = rng.normal(0, 0.2, (4, 5, 5, 3)).astype(np.float32)
    coeffs = rng.normal(0, 1, (48, 48, 4)).astype(np.float32)
    direct = fnf.filter_direct(x, a, b, 2, True, coeffs)
    fast = fnf.filter_fast(x, a, b, 2, True, coeffs)
    scale = max(np.abs(direct).max(), 1e-6)
    assert np.abs(direct - fast).max() / scale < 1e-4


def test_upsample_footprint():
    b = np.zeros((15, 15, 3), np.float32)
    up = fnf.upsample_kernel(b, 4)
    assert up.shape == (57, 57, 3)


def test_metrics():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 1, (64, 64, 3)).astype(np.float32)
    assert fnf.psnr(img, img) == np.inf
    shifted = np.clip(img + 0.1, 0, 1).astype(np.float32)
    assert fnf.psnr(img, img * 0.9) > fnf.psnr(img, img * 0.5)
    assert abs(fnf.ssim(img, img) - 1.0) < 1e-9
    assert fnf.ssim(img, shifted) < 1.0


def test_render_srgb_value():
    img = np.full((32, 32, 3), 0.5, np.float32)
    out = fnf.render_srgb(img)
    assert abs(out[0, 0, 0] - 0.735357) < 1e-4


def test_model_denoise_shapes():
    model = fnf.Model(basis_count=4, kernel_size=3, upsample=2, base_channels=8, seed=1)
    ambient, flash = fnf.generate_scene(2, 64, 64)
    h = fnf.sample_homography(5, 64, 64)
    sample = fnf.make_sample(ambient, flash, 25.0, 0.003, 0.001, h, seed=9)
    out = model.denoise(sample)
    assert out.shape == (64, 64, 3)
    assert np.isfinite(out).all()
    fields = model.predict_fields(sample)
    assert fields["a"].shape == (4, 3, 3, 3)
    assert fields["coeffs"].shape == (64, 64, 4)
    assert fields["scale_map"].shape == (64, 64, 3)


def test_training_reduces_loss():
    model = fnf.Model(basis_count=4, kernel_size=3, upsample=2, base_channels=8, seed=2)
    history = fnf.train_procedural(model, max_steps=40, seed=11, crop=32, n_scenes=2)
    assert len(history) == 40
    first = np.mean([loss for _, loss in history[:5]])
    last = np.mean([loss for _, loss in history[-5:]])
    assert last < first


def test_checkpoint_roundtrip(tmp_path):
    model = fnf.Model(basis_count=4, kernel_size=3, upsample=2, base_channels=8, seed=3)
    ambient, flash = fnf.generate_scene(4, 64, 64)
    h = fnf.sample_homography(6, 64, 64)
    sample = fnf.make_sample(ambient, flash, 10.0, 0.005, 0.0005, h, seed=12)
    out1 = model.denoise(sample)
    model.save(str(tmp_path / "ckpt"))
    restored = fnf.Model.load(str(tmp_path / "ckpt"))
    out2 = restored.denoise(sample)
    assert np.array_equal(out1, out2)


def test_invalid_inputs_raise():
    with pytest.raises(Exception):
        fnf.add_noise(np.full((32, 32, 3), -0.5, np.float32), 0.01, 0.0, seed=0)
    with pytest.raises(Exception):
        fnf.Model(kernel_size=4)  # even kernel
