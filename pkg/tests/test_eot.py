import numpy as np
import pytest

from adcp.compositor import composite
from adcp.eot import (EotConfig, Transform, apply_transform, expected_loss,
                      sample_transform)
from adcp.oracle import (Detection, DetectorOracle, GroundTruth, OracleError,
                         mock_always_fooled, mock_never_fooled)
from adcp.patch_model import PatchParams

from conftest import random_image


def test_config_validation():
    with pytest.raises(ValueError):
        EotConfig(rotation_deg=(10.0, -10.0))
    with pytest.raises(ValueError):
        EotConfig(noise_sigma=(-1.0, 2.0))
    with pytest.raises(ValueError):
        EotConfig(scale=(0.0, 1.0))
    with pytest.raises(ValueError):
        EotConfig(n_samples=0, include_identity=False)
    assert EotConfig(n_samples=3).batch_size == 4
    assert EotConfig(n_samples=3, include_identity=False).batch_size == 3


def test_identity_transform_is_byte_exact(rng):
    img = random_image(rng, 21, 17)
    out = apply_transform(img, Transform.identity())
    assert np.array_equal(out, img)
    assert out is not img


def test_brightness_only(rng):
    img = np.full((8, 8, 3), 100, dtype=np.uint8)
    out = apply_transform(img, Transform(brightness=2.0))
    assert np.all(out == 200)
    out = apply_transform(img, Transform(brightness=3.0))
    assert np.all(out == 255)  # clamped


def test_noise_is_seeded(rng):
    img = random_image(rng, 16, 16)
    t = Transform(noise_sigma=5.0, noise_seed=42)
    a = apply_transform(img, t)
    b = apply_transform(img, t)
    assert np.array_equal(a, b)
    c = apply_transform(img, Transform(noise_sigma=5.0, noise_seed=43))
    assert not np.array_equal(a, c)


def test_integer_translation_is_exact():
    img = np.zeros((16, 32, 3), dtype=np.uint8)
    img[6:10, 4:8] = 200
    # tx_frac 0.25 of 32 px moves content exactly 8 px right; vacated area black
    out = apply_transform(img, Transform(tx_frac=0.25))
    expect = np.zeros_like(img)
    expect[6:10, 12:16] = 200
    assert np.array_equal(out, expect)
    out = apply_transform(img, Transform(ty_frac=0.25))
    expect = np.zeros_like(img)
    expect[10:14, 4:8] = 200
    assert np.array_equal(out, expect)


def test_scale_about_center():
    img = np.zeros((17, 17, 3), dtype=np.uint8)
    img[8, 8] = 255   # center pixel
    img[8, 12] = 200  # 4 px right of center
    out = apply_transform(img, Transform(scale=2.0))
    assert np.all(out[8, 8] == 255)   # center is a fixed point
    assert np.all(out[8, 16] == 200)  # offset doubles


def test_rotation_moves_mass_and_preserves_it_roughly():
    img = np.zeros((33, 33, 3), dtype=np.uint8)
    img[16, 24] = 255  # 8 px right of center
    out = apply_transform(img, Transform(rotation_deg=90.0))
    # a quarter turn keeps the pixel 8 px from the center on the other axis
    col = np.argwhere(np.any(out > 0, axis=2))
    assert len(col) >= 1
    (y, x) = col[np.argmax(out[col[:, 0], col[:, 1], 0])]
    assert (abs(y - 16), abs(x - 16)) in {(8, 0), (0, 8)}
    assert not (y == 16 and x == 24)


def test_rotation_back_and_forth_is_near_identity():
    # bilinear resampling is exact on linear ramps, so a smooth gradient
    # survives a rotate/unrotate pair up to quantization, away from borders
    yy, xx = np.indices((40, 40))
    img = np.stack([xx * 6, yy * 6, (xx + yy) * 3], axis=2).astype(np.uint8)
    once = apply_transform(img, Transform(rotation_deg=7.0))
    back = apply_transform(once, Transform(rotation_deg=-7.0))
    diff = np.abs(back[12:28, 12:28].astype(int) - img[12:28, 12:28].astype(int))
    assert np.max(diff) <= 2


def test_sample_transform_within_ranges(rng):
    cfg = EotConfig()
    for _ in range(200):
        t = sample_transform(cfg, rng)
        assert cfg.rotation_deg[0] <= t.rotation_deg <= cfg.rotation_deg[1]
        assert cfg.scale[0] <= t.scale <= cfg.scale[1]
        assert cfg.brightness[0] <= t.brightness <= cfg.brightness[1]
        assert cfg.noise_sigma[0] <= t.noise_sigma <= cfg.noise_sigma[1]
        assert cfg.translate_frac[0] <= t.tx_frac <= cfg.translate_frac[1]
        assert cfg.translate_frac[0] <= t.ty_frac <= cfg.translate_frac[1]
        assert 0 <= t.noise_seed < 2 ** 63


def test_sample_transform_is_deterministic():
    cfg = EotConfig()
    a = sample_transform(cfg, np.random.default_rng(9))
    b = sample_transform(cfg, np.random.default_rng(9))
    assert a == b


PATCH = PatchParams(ps1_x=0.5, ps2_x=0.5, color=(255, 64, 64), width=0.4, opacity=0.8)


def test_expected_loss_query_count_and_failure(black_image):
    cfg = EotConfig(n_samples=5)
    ev = expected_loss(black_image, PATCH, mock_never_fooled(), GroundTruth(0),
                       cfg, np.random.default_rng(0))
    assert ev.queries == 6
    assert ev.loss == 1.0
    assert not ev.fooled
    cfg = EotConfig(n_samples=5, include_identity=False)
    ev = expected_loss(black_image, PATCH, mock_never_fooled(), GroundTruth(0),
                       cfg, np.random.default_rng(0))
    assert ev.queries == 5


def test_expected_loss_success(black_image):
    cfg = EotConfig(n_samples=4)
    ev = expected_loss(black_image, PATCH, mock_always_fooled(), GroundTruth(0),
                       cfg, np.random.default_rng(0))
    assert ev.fooled and ev.loss == 0.0 and ev.queries == 5


def test_expected_loss_no_early_break(black_image):
    # every variant is evaluated even after the first fooled one
    calls = []

    class Spy(DetectorOracle):
        def detect(self, image):
            calls.append(1)
            return []

        def label_space(self):
            return 1

    cfg = EotConfig(n_samples=7)
    ev = expected_loss(black_image, PATCH, Spy(), GroundTruth(0), cfg,
                       np.random.default_rng(0))
    assert len(calls) == 8 and ev.queries == 8 and ev.fooled


def test_expected_loss_propagates_oracle_error_with_count(black_image):
    class Flaky(DetectorOracle):
        def __init__(self):
            self.n = 0

        def detect(self, image):
            self.n += 1
            if self.n == 3:
                raise OracleError("boom")
            return []

        def label_space(self):
            return 1

    cfg = EotConfig(n_samples=6)
    with pytest.raises(OracleError) as exc:
        expected_loss(black_image, PATCH, Flaky(), GroundTruth(0), cfg,
                      np.random.default_rng(0))
    assert exc.value.queries == 2


def test_expected_loss_is_deterministic_per_rng_seed(black_image):
    oracle = mock_never_fooled(objectness_value=0.7)
    cfg = EotConfig(n_samples=4)
    a = expected_loss(black_image, PATCH, oracle, GroundTruth(0), cfg,
                      np.random.default_rng(3))
    b = expected_loss(black_image, PATCH, oracle, GroundTruth(0), cfg,
                      np.random.default_rng(3))
    assert a == b
