"""Raster helpers shared by the segmentation, dataset and trainer modules.

Images are plain numpy arrays rather than wrapper classes:

* RGB image   -- ``uint8`` array of shape ``(height, width, 3)``
* gray image  -- ``uint8`` array of shape ``(height, width)``
* binary mask -- ``bool`` array of shape ``(height, width)``, True = foreground

Row-major order is numpy's default, so ``img.reshape(-1, 3)`` enumerates
pixels in the documented order.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class HsvPixel(NamedTuple):
    h: float  # degrees, [0, 360)
    s: float  # [0, 1]
    v: float  # [0, 1]


def check_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB array, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got {img.shape[1]}x{img.shape[0]}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {img.dtype}")
    return img


def check_mask(mask: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != bool:
        raise ValueError(f"expected a 2-D bool mask, got {mask.dtype} {mask.shape}")
    if shape is not None and mask.shape != tuple(shape):
        raise ValueError(f"mask shape {mask.shape} does not match image shape {tuple(shape)}")
    return mask


def rgb_to_hsv(p: tuple[int, int, int]) -> HsvPixel:
    """Hexagonal-cone HSV for one 8-bit triple.

    Achromatic pixels (max == min) get hue 0.
    """
    r, g, b = (int(c) for c in p)
    for c in (r, g, b):
        if not 0 <= c <= 255:
            raise ValueError(f"channel value {c} outside [0, 255]")
    mx, mn = max(r, g, b), min(r, g, b)
    chroma = mx - mn
    v = mx / 255.0
    s = chroma / mx if mx else 0.0
    if chroma == 0:
        h = 0.0
    elif mx == r:
        h = 60.0 * ((g - b) / chroma)
        if h < 0:
            h += 360.0
    elif mx == g:
        h = 60.0 * ((b - r) / chroma + 2.0)
    else:
        h = 60.0 * ((r - g) / chroma + 4.0)
    return HsvPixel(h, s, v)


def hsv_to_rgb(p: HsvPixel | tuple[float, float, float]) -> tuple[int, int, int]:
    """Inverse of :func:`rgb_to_hsv`, rounded back to 8-bit channels."""
    h, s, v = p
    c = v * s
    hp = (h % 360.0) / 60.0
    x = c * (1.0 - abs(hp % 2.0 - 1.0))
    sector = int(hp)
    r1, g1, b1 = [
        (c, x, 0.0),
        (x, c, 0.0),
        (0.0, c, x),
        (0.0, x, c),
        (x, 0.0, c),
        (c, 0.0, x),
    ][min(sector, 5)]
    m = v - c
    return tuple(int(np.floor((ch + m) * 255.0 + 0.5)) for ch in (r1, g1, b1))


def rgb_to_hsv_array(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`rgb_to_hsv`; returns (hue, saturation, value) planes."""
    img = check_rgb(img).astype(np.int64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    mx = img.max(axis=-1)
    mn = img.min(axis=-1)
    chroma = mx - mn
    safe = np.where(chroma == 0, 1, chroma)

    h = np.zeros(mx.shape, dtype=np.float64)
    is_r = (mx == r) & (chroma > 0)
    is_g = (mx == g) & (chroma > 0) & ~is_r
    is_b = (chroma > 0) & ~is_r & ~is_g
    h_r = 60.0 * ((g - b) / safe)
    h_r = np.where(h_r < 0, h_r + 360.0, h_r)
    h = np.where(is_r, h_r, h)
    h = np.where(is_g, 60.0 * ((b - r) / safe + 2.0), h)
    h = np.where(is_b, 60.0 * ((r - g) / safe + 4.0), h)

    s = np.where(mx > 0, chroma / np.where(mx == 0, 1, mx), 0.0)
    v = mx / 255.0
    return h, s, v


def to_gray(img: np.ndarray) -> np.ndarray:
    img = check_rgb(img).astype(np.float64)
    wr, wg, wb = LUMA_WEIGHTS
    luma = wr * img[..., 0] + wg * img[..., 1] + wb * img[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def apply_mask(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero every background pixel; foreground pixels pass through unchanged."""
    img = check_rgb(img)
    mask = check_mask(mask, img.shape[:2])
    out = img.copy()
    out[~mask] = 0
    return out


def _sample_grid(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres: output pixel i samples source coordinate (i + .5) * in/out - .5
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize(img: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centre alignment."""
    img = check_rgb(img)
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target size must be positive, got {target_w}x{target_h}")
    h, w = img.shape[:2]
    if (h, w) == (target_h, target_w):
        return img.copy()

    y0, y1, wy = _sample_grid(h, target_h)
    x0, x1, wx = _sample_grid(w, target_w)
    src = img.astype(np.float64)
    wx = wx[None, :, None]
    top = src[y0][:, x0] * (1.0 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1.0 - wx) + src[y1][:, x1] * wx
    wy = wy[:, None, None]
    out = top * (1.0 - wy) + bottom * wy
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap 2|A&B| / (|A| + |B|); two empty masks score 1."""
    a = check_mask(a)
    b = check_mask(b, a.shape)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


# --- file I/O -------------------------------------------------------------

def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(path: str | Path, img: np.ndarray) -> None:
    img = check_rgb(img)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path, format="PNG")


def read_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Masks are stored as 8-bit grayscale PNG: background 0, foreground 255."""
    mask = check_mask(mask)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8) * 255).save(path, format="PNG")
