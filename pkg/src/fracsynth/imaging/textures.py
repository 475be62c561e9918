"""Procedural rock textures: a color ramp driven by fractal noise plus a
high-frequency grain term.  The suite of eight presets loosely follows common
rock appearances (granite speckle, banded limestone, dark basalt, ...).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..noise import FractalNoise, perlin2, _perm_table


@dataclass(frozen=True)
class TextureSpec:
    texture_id: int
    name: str
    ramp: tuple                 # ((t, (r, g, b)), ...) with t ascending in [0, 1]
    octaves: int = 4
    frequency: float = 0.8
    gain: float = 0.5
    grain: float = 0.2          # high-frequency contrast in [0, 1]
    noise_seed: int = 0

    def __post_init__(self):
        if len(self.ramp) < 2:
            raise ValidationError("ramp needs at least 2 stops")
        ts = [t for t, _ in self.ramp]
        if ts != sorted(ts):
            raise ValidationError("ramp stops must be ascending")
        if not (0.0 <= self.grain <= 1.0):
            raise ValidationError("grain must be in [0, 1]")


_PRESETS = (
    ("granite", ((0.0, (0.42, 0.42, 0.44)), (0.45, (0.62, 0.60, 0.58)),
                 (0.75, (0.78, 0.76, 0.72)), (1.0, (0.92, 0.90, 0.88))), 5, 2.2, 0.55, 0.45),
    ("limestone", ((0.0, (0.62, 0.56, 0.44)), (0.5, (0.76, 0.70, 0.56)),
                   (1.0, (0.88, 0.84, 0.72))), 4, 0.5, 0.5, 0.15),
    ("basalt", ((0.0, (0.12, 0.12, 0.14)), (0.6, (0.25, 0.25, 0.27)),
                (1.0, (0.42, 0.42, 0.44))), 4, 1.1, 0.5, 0.25),
    ("weathered_brown", ((0.0, (0.35, 0.25, 0.16)), (0.5, (0.52, 0.40, 0.28)),
                         (1.0, (0.70, 0.58, 0.42))), 4, 0.7, 0.55, 0.3),
    ("sandstone", ((0.0, (0.72, 0.52, 0.34)), (0.5, (0.84, 0.66, 0.44)),
                   (1.0, (0.94, 0.82, 0.62))), 3, 0.4, 0.5, 0.2),
    ("gneiss", ((0.0, (0.30, 0.30, 0.32)), (0.35, (0.55, 0.54, 0.52)),
                (0.65, (0.40, 0.38, 0.38)), (1.0, (0.82, 0.80, 0.78))), 5, 1.6, 0.6, 0.35),
    ("marble", ((0.0, (0.68, 0.68, 0.70)), (0.8, (0.90, 0.90, 0.92)),
                (1.0, (0.99, 0.99, 0.99))), 4, 0.9, 0.45, 0.1),
    ("slate", ((0.0, (0.18, 0.20, 0.24)), (0.5, (0.32, 0.35, 0.40)),
               (1.0, (0.52, 0.55, 0.60))), 4, 1.3, 0.5, 0.2),
)


def texture_suite(seed: int = 0) -> list:
    """Eight deterministic texture presets; the seed decouples their noise fields."""
    out = []
    for i, (name, ramp, octaves, freq, gain, grain) in enumerate(_PRESETS):
        out.append(
            TextureSpec(
                texture_id=i, name=name, ramp=ramp, octaves=octaves,
                frequency=freq, gain=gain, grain=grain,
                noise_seed=(int(seed) << 8) + i,
            )
        )
    return out


def eval_texture(spec: TextureSpec, uv: np.ndarray) -> np.ndarray:
    """Colors in [0, 1] for (n, 2) uv points."""
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    noise = FractalNoise(seed=[spec.noise_seed, 0x7E87], octaves=spec.octaves,
                         frequency=spec.frequency, gain=spec.gain)
    v = 0.5 + 0.5 * noise.sample2(uv[:, 0], uv[:, 1])
    ts = np.array([t for t, _ in spec.ramp])
    cols = np.array([c for _, c in spec.ramp])
    out = np.stack([np.interp(v, ts, cols[:, k]) for k in range(3)], axis=1)
    if spec.grain > 0.0:
        perm = _perm_table([spec.noise_seed, 0x9A1A])
        g = perlin2(uv[:, 0] * spec.frequency * 24.0, uv[:, 1] * spec.frequency * 24.0, perm)
        out = out * (1.0 + 0.5 * spec.grain * g)[:, None]
    return np.clip(out, 0.0, 1.0)
