import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from specklebench.scenes import make_scenes, speckled_pairs
from specklebench.speckle import SpeckleParams, apply_speckle, speckle_contrast, synthesize_field


def test_params_validation():
    with pytest.raises(ValueError):
        SpeckleParams(grain_size=0)
    with pytest.raises(ValueError):
        SpeckleParams(contrast=1.2)


def test_zero_contrast_is_exact_ones():
    f = synthesize_field(32, 20, SpeckleParams(2.0, 0.0, seed=4))
    assert f.shape == (20, 32, 3)
    assert np.all(f == 1.0)


def test_too_small_field():
    with pytest.raises(ValueError, match="16x16"):
        synthesize_field(15, 64, SpeckleParams())


def test_fully_developed_statistics():
    f = synthesize_field(512, 512, SpeckleParams(1.0, 1.0, seed=11))
    for c in range(3):
        assert speckle_contrast(f, c) == pytest.approx(1.0, abs=0.05)
        ks = stats.kstest(f[..., c].ravel(), "expon").statistic
        assert ks <= 0.02


def test_half_contrast():
    f = synthesize_field(512, 512, SpeckleParams(1.0, 0.5, seed=2))
    assert speckle_contrast(f, 1) == pytest.approx(0.5, abs=0.05)


def test_field_mean_and_channel_independence():
    f = synthesize_field(256, 256, SpeckleParams(2.0, 1.0, seed=9))
    assert np.all(np.abs(f.mean(axis=(0, 1)) - 1.0) <= 0.02)
    assert np.all(f >= 0)
    for a, b in [(0, 1), (0, 2), (1, 2)]:
        r = np.corrcoef(f[..., a].ravel(), f[..., b].ravel())[0, 1]
        assert -0.1 <= r <= 0.1


def test_shared_field_channels_identical():
    f = synthesize_field(64, 64, SpeckleParams(2.0, 0.7, per_channel_independent=False, seed=1))
    assert np.array_equal(f[..., 0], f[..., 2])


def test_contrast_nonincreasing_in_grain():
    cs = [speckle_contrast(synthesize_field(256, 256, SpeckleParams(g, 1.0, seed=5))) for g in (1, 2, 4)]
    assert cs[0] >= cs[1] - 0.05 and cs[1] >= cs[2] - 0.05


@given(st.integers(0, 2**31), st.floats(0.5, 4), st.floats(0, 1))
def test_seed_determinism(seed, grain, contrast):
    p = SpeckleParams(grain, contrast, seed=seed)
    assert np.array_equal(synthesize_field(16, 24, p), synthesize_field(16, 24, p))


def test_apply_speckle_cases(rng):
    img = rng.random((16, 16, 3))
    assert np.array_equal(apply_speckle(img, np.ones_like(img)), img)
    assert np.all(apply_speckle(np.zeros_like(img), rng.random(img.shape) * 3) == 0)
    field = rng.random(img.shape) * 3
    assert np.array_equal(apply_speckle(np.full_like(img, 0.5), field), np.clip(0.5 * field, 0, 1))
    with pytest.raises(ValueError):
        apply_speckle(img, np.ones((8, 8, 3)))


def test_speckle_contrast_cases():
    assert speckle_contrast(np.full((4, 4, 3), 0.3)) == 0.0
    assert speckle_contrast(np.array([[0.0, 1.0]])) == 1.0
    with pytest.raises(ValueError):
        speckle_contrast(np.zeros((3, 3, 3)))


def test_speckled_pairs_reproducible():
    clean = make_scenes(2, 32, 0)
    a = speckled_pairs(clean, 2, 0.6, 3)
    b = speckled_pairs(clean, 2, 0.6, 3)
    assert all(np.array_equal(x[0], y[0]) for x, y in zip(a, b))
    assert not np.array_equal(a[0][0], a[0][1])
