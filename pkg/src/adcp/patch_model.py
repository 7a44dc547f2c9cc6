"""Patch parameter vector: bounds, flat encoding, clamping, uniform sampling.

A camera patch is a translucent band running from the top edge to the bottom
edge of the image. It is described by seven numbers, always in this order:

    0  ps1_x    horizontal position of the top endpoint, fraction of width
    1  ps2_x    horizontal position of the bottom endpoint, fraction of width
    2  r        red channel, 0..255
    3  g        green channel, 0..255
    4  b        blue channel, 0..255
    5  width    band width as a fraction of image width
    6  opacity  blend weight; higher means a more visible (less transparent) band

Color channels are optimized as continuous values and only quantized to
integers when the band is rendered. Endpoint positions are fractions of the
image width so one parameter vector transfers across image sizes.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Optional, Tuple

import numpy as np

DIM_NAMES = ("ps1_x", "ps2_x", "r", "g", "b", "width", "opacity")
N_DIMS = len(DIM_NAMES)


@dataclass(frozen=True)
class ParamBounds:
    """Per-dimension box bounds for the 7-dimensional flat encoding."""

    min_vec: Tuple[float, ...]
    max_vec: Tuple[float, ...]

    def __post_init__(self):
        if len(self.min_vec) != N_DIMS or len(self.max_vec) != N_DIMS:
            raise ValueError(f"bounds must have {N_DIMS} dimensions")
        for d, (lo, hi) in enumerate(zip(self.min_vec, self.max_vec)):
            if lo > hi:
                raise ValueError(f"min > max for dimension {DIM_NAMES[d]}: {lo} > {hi}")

    @classmethod
    def default(cls) -> "ParamBounds":
        return cls(min_vec=(0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.1),
                   max_vec=(1.0, 1.0, 255.0, 255.0, 255.0, 0.9, 0.9))

    def replace(self, **ranges: Tuple[float, float]) -> "ParamBounds":
        """New bounds with some dimensions overridden, e.g. ``replace(width=(0.3, 0.3))``."""
        lo = list(self.min_vec)
        hi = list(self.max_vec)
        for name, (a, b) in ranges.items():
            d = DIM_NAMES.index(name)
            lo[d], hi[d] = float(a), float(b)
        return ParamBounds(tuple(lo), tuple(hi))

    def pin(self, **values: float) -> "ParamBounds":
        """New bounds with some dimensions fixed to a single value."""
        return self.replace(**{k: (v, v) for k, v in values.items()})

    def as_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.min_vec, dtype=float), np.asarray(self.max_vec, dtype=float)


DEFAULT_BOUNDS = ParamBounds.default()


@dataclass(frozen=True)
class PatchParams:
    """One camera patch.

    Construction validates against ``bounds`` (the standard bounds unless a
    custom ``ParamBounds`` is passed, or ``None`` to skip the box check).
    Endpoint fractions must lie in [0, 1] and color channels in [0, 255]
    regardless of the bounds in force.
    """

    ps1_x: float
    ps2_x: float
    color: Tuple[float, float, float]
    width: float
    opacity: float
    bounds: InitVar[Optional[ParamBounds]] = DEFAULT_BOUNDS

    def __post_init__(self, bounds: Optional[ParamBounds]):
        if not (0.0 <= self.ps1_x <= 1.0 and 0.0 <= self.ps2_x <= 1.0):
            raise ValueError(f"endpoint fractions must be in [0,1]: {self.ps1_x}, {self.ps2_x}")
        if len(self.color) != 3 or any(not (0.0 <= c <= 255.0) for c in self.color):
            raise ValueError(f"color channels must be in [0,255]: {self.color}")
        if bounds is not None:
            vec = encode(self)
            lo, hi = bounds.as_arrays()
            if np.any(vec < lo) or np.any(vec > hi):
                bad = [DIM_NAMES[d] for d in range(N_DIMS) if not lo[d] <= vec[d] <= hi[d]]
                raise ValueError(f"parameters outside bounds: {', '.join(bad)}")

    def quantized_color(self) -> Tuple[int, int, int]:
        """Color rounded half-away-from-zero to 8-bit integers (rendering form)."""
        return tuple(int(np.floor(c + 0.5)) for c in self.color)

    def to_json_dict(self) -> dict:
        return {"ps1_x": self.ps1_x, "ps2_x": self.ps2_x,
                "color": list(self.quantized_color()),
                "width": self.width, "opacity": self.opacity}

    @classmethod
    def from_json_dict(cls, obj: dict, bounds: Optional[ParamBounds] = DEFAULT_BOUNDS) -> "PatchParams":
        return cls(ps1_x=float(obj["ps1_x"]), ps2_x=float(obj["ps2_x"]),
                   color=tuple(float(c) for c in obj["color"]),
                   width=float(obj["width"]), opacity=float(obj["opacity"]),
                   bounds=bounds)


def encode(params: PatchParams) -> np.ndarray:
    """Flatten to the fixed 7-dimension order used by the optimizer."""
    r, g, b = params.color
    return np.array([params.ps1_x, params.ps2_x, r, g, b, params.width, params.opacity],
                    dtype=float)


def decode(vec: np.ndarray, bounds: Optional[ParamBounds] = DEFAULT_BOUNDS) -> PatchParams:
    """Inverse of :func:`encode`. ``decode(encode(p)) == p`` for valid ``p``."""
    vec = _check_dims(vec)
    return PatchParams(ps1_x=float(vec[0]), ps2_x=float(vec[1]),
                       color=(float(vec[2]), float(vec[3]), float(vec[4])),
                       width=float(vec[5]), opacity=float(vec[6]),
                       bounds=bounds)


def clamp(vec: np.ndarray, bounds: ParamBounds) -> np.ndarray:
    """Project every dimension into its bounds. Idempotent."""
    vec = _check_dims(vec)
    lo, hi = bounds.as_arrays()
    return np.clip(vec, lo, hi)


def sample_uniform(bounds: ParamBounds, rng: np.random.Generator) -> np.ndarray:
    """Draw each dimension uniformly from its interval."""
    lo, hi = bounds.as_arrays()
    return lo + rng.random(N_DIMS) * (hi - lo)


def _check_dims(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (N_DIMS,):
        raise ValueError(f"expected a {N_DIMS}-dimension vector, got shape {vec.shape}")
    return vec
