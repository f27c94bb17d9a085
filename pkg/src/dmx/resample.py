"""Internal resampling helpers shared by the editor, cascade and eval code.

Spatial downsampling is exact fractional area averaging (accumulated in
float64), upsampling is separable bilinear over pixel centers, temporal
changes are uniform-stride selection / nearest-index repetition.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError


def _area_weights(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) row-stochastic matrix of box-overlap fractions."""
    if n_dst > n_src:
        raise InvalidArgumentError(f"area averaging cannot upsample ({n_src} -> {n_dst})")
    w = np.zeros((n_dst, n_src), dtype=np.float64)
    scale = n_src / n_dst
    for j in range(n_dst):
        lo, hi = j * scale, (j + 1) * scale
        i0, i1 = int(np.floor(lo)), int(np.ceil(hi))
        for i in range(i0, min(i1, n_src)):
            w[j, i] = min(hi, i + 1) - max(lo, i)
    return w / scale


def _linear_weights(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) bilinear interpolation matrix over pixel centers."""
    w = np.zeros((n_dst, n_src), dtype=np.float64)
    if n_src == 1:
        w[:, 0] = 1.0
        return w
    # half-pixel-center convention, clamped at the borders
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1.0)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = pos - lo
    for j in range(n_dst):
        w[j, lo[j]] += 1.0 - frac[j]
        w[j, hi[j]] += frac[j]
    return w


def _apply_axis(data: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(mat, np.asarray(data, dtype=np.float64), axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def resize_hw(data: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    """Resize (F,H,W,C) spatially; area averaging down, bilinear up (per axis)."""
    f, h, w, c = data.shape
    h2, w2 = hw
    mat_h = _area_weights(h, h2) if h2 <= h else _linear_weights(h, h2)
    mat_w = _area_weights(w, w2) if w2 <= w else _linear_weights(w, w2)
    out = _apply_axis(data, mat_h, 1)
    out = _apply_axis(out, mat_w, 2)
    return out.astype(np.float32)


def area_downsample_hw(data: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    """Exact area-average spatial downsample of (F,H,W,C) data."""
    f, h, w, c = data.shape
    if hw[0] > h or hw[1] > w:
        raise DimensionMismatchError(f"cannot area-downsample {h}x{w} to {hw[0]}x{hw[1]}")
    out = _apply_axis(data, _area_weights(h, hw[0]), 1)
    out = _apply_axis(out, _area_weights(w, hw[1]), 2)
    return out.astype(np.float32)


def nearest_upsample_hw(data: np.ndarray, factor: int) -> np.ndarray:
    """Integer-factor nearest (block-repeat) spatial upsample."""
    if factor < 1:
        raise InvalidArgumentError(f"upsample factor must be >= 1, got {factor}")
    return np.repeat(np.repeat(data, factor, axis=1), factor, axis=2)


def frame_indices(n_src: int, n_dst: int) -> np.ndarray:
    """Uniform-stride frame selection indices, floor(i * n_src / n_dst)."""
    if n_dst > n_src:
        raise InvalidArgumentError(f"frame selection cannot upsample ({n_src} -> {n_dst})")
    return (np.arange(n_dst) * n_src) // n_dst


def select_frames(data: np.ndarray, n_dst: int) -> np.ndarray:
    return data[frame_indices(data.shape[0], n_dst)]


def repeat_frames(data: np.ndarray, factor: int) -> np.ndarray:
    """Repeat each frame ``factor`` times (frame i of the output maps to
    source frame i // factor, aligned with uniform-stride selection)."""
    if factor < 1:
        raise InvalidArgumentError(f"frame repeat factor must be >= 1, got {factor}")
    return np.repeat(data, factor, axis=0)


def resize_video(data: np.ndarray, fhw: tuple[int, int, int]) -> np.ndarray:
    """Resize (F,H,W,C) data to (F2,H2,W2): stride/nearest frames, area or
    bilinear pixels depending on direction."""
    f2, h2, w2 = fhw
    f = data.shape[0]
    if f2 <= f:
        out = select_frames(data, f2)
    else:
        idx = (np.arange(f2) * f) // f2
        out = data[idx]
    return resize_hw(out, (h2, w2))
