"""Channel-mean heatmaps written as binary (P5) PGM images.

The 2-d map is the mean over channels, min-max normalized so the emitted
pixels span exactly 0..255; a constant map becomes all-128 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class HeatmapDump:
    """One emitted heatmap: its source stage, pixels, and value range."""

    source: str
    pixels: np.ndarray  # uint8, (H, W)
    vmin: float
    vmax: float


def channel_mean_map(t: Tensor) -> np.ndarray:
    if t.ndim != 4:
        raise ValueError(f"expected a 4-d feature map, got shape {t.shape}")
    if t.shape[0] != 1:
        raise ValueError(f"heatmaps are per-image; got batch size {t.shape[0]}")
    return t.data.astype(np.float64).mean(axis=1)[0]


def make_heatmap(t: Tensor, source: str) -> HeatmapDump:
    m = channel_mean_map(t)
    vmin = float(m.min())
    vmax = float(m.max())
    if vmax == vmin:
        pixels = np.full(m.shape, 128, dtype=np.uint8)
    else:
        scaled = (m - vmin) * (255.0 / (vmax - vmin))
        pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    return HeatmapDump(source=source, pixels=pixels, vmin=vmin, vmax=vmax)


def pgm_bytes(dump: HeatmapDump) -> bytes:
    h, w = dump.pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + dump.pixels.tobytes()


def write_pgm(path, dump: HeatmapDump) -> None:
    Path(path).write_bytes(pgm_bytes(dump))
