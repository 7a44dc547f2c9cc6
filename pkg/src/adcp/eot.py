"""Expectation over transformation.

A candidate patch is judged not on one rendering but on a batch of randomly
perturbed renderings of the patched image: rotation, scale, brightness,
additive Gaussian noise, and translation, each drawn uniformly from a
configured interval. The fitness of the patch is the mean adversarial loss
over the batch, and the attack counts as successful only when every variant
in the batch fools the detector.

Geometry is applied as one composed affine resample (translate, then rotate
about the image center, then scale about the center) so the image is
interpolated once. Out-of-frame regions are filled with black. Photometric
steps follow: brightness is a scalar multiply, noise is seeded Gaussian.
The result is clamped and re-quantized to 8 bits, so a detector sees the
same kind of array it would see from disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .compositor import composite, quantize_u8, require_rgb8
from .oracle import DetectorOracle, GroundTruth, OracleError, adversarial_loss
from .patch_model import PatchParams

Interval = Tuple[float, float]


def _check_interval(name: str, iv: Interval, lo_min: Optional[float] = None) -> None:
    lo, hi = iv
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise ValueError(f"{name} must be a finite interval (lo, hi), got {iv}")
    if lo_min is not None and lo < lo_min:
        raise ValueError(f"{name} lower bound must be >= {lo_min}, got {lo}")


@dataclass(frozen=True)
class EotConfig:
    """Sampling ranges and batch shape for the transformation expectation."""

    rotation_deg: Interval = (-10.0, 10.0)
    scale: Interval = (0.9, 1.1)
    brightness: Interval = (0.8, 1.2)
    noise_sigma: Interval = (0.0, 8.0)
    translate_frac: Interval = (-0.05, 0.05)
    n_samples: int = 8
    include_identity: bool = True

    def __post_init__(self):
        _check_interval("rotation_deg", self.rotation_deg)
        _check_interval("scale", self.scale, lo_min=1e-6)
        _check_interval("brightness", self.brightness, lo_min=0.0)
        _check_interval("noise_sigma", self.noise_sigma, lo_min=0.0)
        _check_interval("translate_frac", self.translate_frac)
        if self.n_samples < 0:
            raise ValueError(f"n_samples must be >= 0, got {self.n_samples}")
        if self.n_samples == 0 and not self.include_identity:
            raise ValueError("batch is empty: n_samples=0 and include_identity=False")

    @property
    def batch_size(self) -> int:
        return self.n_samples + (1 if self.include_identity else 0)


@dataclass(frozen=True)
class Transform:
    """One concrete draw from the transformation distribution."""

    rotation_deg: float = 0.0
    scale: float = 1.0
    brightness: float = 1.0
    tx_frac: float = 0.0
    ty_frac: float = 0.0
    noise_sigma: float = 0.0
    noise_seed: int = 0

    @classmethod
    def identity(cls) -> "Transform":
        return cls()

    @property
    def is_geometric_identity(self) -> bool:
        return (self.rotation_deg == 0.0 and self.scale == 1.0
                and self.tx_frac == 0.0 and self.ty_frac == 0.0)


def _uniform(rng: np.random.Generator, iv: Interval) -> float:
    lo, hi = iv
    return float(lo + rng.random() * (hi - lo))


def sample_transform(cfg: EotConfig, rng: np.random.Generator) -> Transform:
    """Draw one transform. The draw order is fixed for reproducibility."""
    return Transform(
        rotation_deg=_uniform(rng, cfg.rotation_deg),
        scale=_uniform(rng, cfg.scale),
        brightness=_uniform(rng, cfg.brightness),
        noise_sigma=_uniform(rng, cfg.noise_sigma),
        tx_frac=_uniform(rng, cfg.translate_frac),
        ty_frac=_uniform(rng, cfg.translate_frac),
        noise_seed=int(rng.integers(0, 2 ** 63)),
    )


def apply_transform(image: np.ndarray, t: Transform) -> np.ndarray:
    """Render one perturbed variant of an 8-bit RGB image.

    The identity transform returns a byte-identical copy; otherwise the
    pipeline runs in float and re-quantizes at the end.
    """
    image = require_rgb8(image)
    if t == Transform.identity():
        return image.copy()

    h, w = image.shape[:2]
    if t.is_geometric_identity:
        out = image.astype(float)
    else:
        # Forward map: shift by t, rotate about the center, scale about the
        # center. affine_transform wants the inverse map in (row, col) order:
        # p_in = (R^T / s) p_out + (c - (R^T / s) c - t).
        theta = math.radians(t.rotation_deg)
        c_, s_ = math.cos(theta), math.sin(theta)
        m = np.array([[c_, -s_], [s_, c_]]) / t.scale
        center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
        shift = np.array([t.ty_frac * h, t.tx_frac * w])
        offset = center - m @ center - shift
        out = np.empty(image.shape, dtype=float)
        for ch in range(3):
            ndimage.affine_transform(image[:, :, ch].astype(float), m, offset=offset,
                                     output=out[:, :, ch], order=1,
                                     mode="constant", cval=0.0)

    if t.brightness != 1.0:
        out = out * t.brightness
    if t.noise_sigma > 0.0:
        noise_rng = np.random.default_rng(t.noise_seed)
        out = out + noise_rng.normal(0.0, t.noise_sigma, size=out.shape)
    return quantize_u8(out)


@dataclass(frozen=True)
class LossEval:
    """Outcome of one fitness evaluation of a candidate patch."""

    loss: float
    fooled: bool
    queries: int


def expected_loss(image: np.ndarray, params: PatchParams, oracle: DetectorOracle,
                  gt: GroundTruth, cfg: EotConfig,
                  rng: np.random.Generator) -> LossEval:
    """Mean adversarial loss of a patch over one transformation batch.

    The patched image is rendered once, then each variant (the unperturbed
    rendering first when include_identity is set, then n_samples draws) is
    sent to the oracle. Every variant is always evaluated, so the query
    count equals the batch size exactly; ``fooled`` requires every variant
    to come back without a matching detection.
    """
    patched = composite(image, params)
    variants: List[np.ndarray] = []
    if cfg.include_identity:
        variants.append(patched)
    for _ in range(cfg.n_samples):
        variants.append(apply_transform(patched, sample_transform(cfg, rng)))

    losses = []
    fooled_all = True
    done = 0
    for variant in variants:
        try:
            dets = oracle.detect(variant)
        except OracleError as e:
            e.queries += done
            raise
        done += 1
        loss, fooled = adversarial_loss(dets, gt)
        losses.append(loss)
        fooled_all = fooled_all and fooled
    return LossEval(loss=float(np.mean(losses)), fooled=fooled_all, queries=done)
