# Copyright (c) 2026 The CMM Authors
# SPDX-License-Identifier: Apache-2.0

import json
import math
import os
import subprocess

import numpy as np
import pytest

import cmm


def small_cache(seed=3):
    cfg = cmm.SynthConfig()
    cfg.num_classes = 4
    cfg.dim = 16
    cfg.train_per_class = 6
    cfg.val_per_class = 5
    cfg.test_per_class = 8
    cfg.seed = seed
    return cmm.synth_generate(cfg)


def quick_config():
    cfg = cmm.TrainConfig()
    cfg.shots = 4
    cfg.total_steps = 60
    cfg.warmup_steps = 6
    cfg.lr = 2e-3
    return cfg


def test_synth_exposes_numpy_splits():
    cache = small_cache()
    feats = cache.test.features
    assert isinstance(feats, np.ndarray)
    assert feats.shape == (32, 16)
    assert len(cache.test) == 32
    np.testing.assert_allclose(np.linalg.norm(feats, axis=1), 1.0, atol=1e-6)


def test_cache_roundtrip(tmp_path):
    cache = small_cache()
    cmm.write_cache(cache, str(tmp_path / "cache"))
    back = cmm.load_cache(str(tmp_path / "cache"))
    np.testing.assert_array_equal(back.train.features, cache.train.features)
    np.testing.assert_array_equal(back.test.labels, cache.test.labels)


def test_train_eval_and_alpha_zero():
    cache = small_cache()
    ckpt, losses = cmm.train(cache, quick_config())
    assert len(losses) == 60
    assert all(math.isfinite(x) for x in losses)
    report = cmm.evaluate(ckpt, cache.test, 0.0)
    assert report["top1"] == report["zero_shot_top1"]
    search = cmm.grid_search_alpha(ckpt, cache.val)
    assert [c["alpha"] for c in search["candidates"]] == pytest.approx(
        [0.1 * k for k in range(1, 11)], abs=1e-12)


def test_map_features_returns_unit_rows():
    cache = small_cache()
    ckpt, _ = cmm.train(cache, quick_config())
    mapped = cmm.map_features(ckpt, cache.test.features)
    np.testing.assert_allclose(np.linalg.norm(mapped, axis=1), 1.0, atol=1e-12)


def test_gaussian_distances():
    rng = np.random.default_rng(0)
    mean, cov = cmm.gaussian_mle(rng.normal(size=(200, 3)))
    assert cov.shape == (3, 3)
    assert cmm.wasserstein2_gaussian(mean, cov, mean, cov) == 0.0
    assert cmm.kl_gaussian(mean, cov, mean, cov) == pytest.approx(0.0, abs=1e-12)
    kl = cmm.kl_gaussian([0.0], np.eye(1), [1.0], 2.0 * np.eye(1))
    assert kl == pytest.approx(0.5 * (0.5 + 0.5 - 1.0 + math.log(2.0)), abs=1e-15)


def test_errors_surface_as_cmm_error(tmp_path):
    with pytest.raises(cmm.CmmError):
        cmm.load_cache(str(tmp_path / "missing"))
    cfg = quick_config()
    cfg.depth = 1
    with pytest.raises(cmm.CmmError):
        cmm.train(small_cache(), cfg)


@pytest.mark.skipif("CMM_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_pipeline(tmp_path):
    cli = os.environ["CMM_CLI"]

    def run(*args):
        return subprocess.run([cli, *args], capture_output=True, text=True, check=False)

    cache = str(tmp_path / "cache")
    ckpt = str(tmp_path / "ckpt")
    assert run("synth", "--out", cache, "--classes", "3", "--dim", "8").returncode == 0
    assert run("train", "--cache", cache, "--out", ckpt, "--shots", "4", "--steps", "20",
               "--warmup-steps", "2").returncode == 0
    out = run("eval", "--cache", cache, "--checkpoint", ckpt, "--alpha", "0")
    assert out.returncode == 0
    report = json.loads(out.stdout)
    assert report["top1"] == report["zero_shot_top1"]
    assert run("train", "--cache", cache, "--out", ckpt, "--depth", "1").returncode == 1
