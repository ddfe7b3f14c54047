"""Hue-band and Otsu segmentation of single-cell smear images.

Two techniques (hue filtering, Otsu thresholding) times two targets (whole
cell, nucleus only) give the four segmented dataset flavours.  Nucleus masks
are always built inside the cell mask of the same technique, so nucleus is a
subset of cell by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .image_core import apply_mask, check_mask, check_rgb, rgb_to_hsv_array, to_gray


class Method(str, Enum):
    HUE = "hue"
    OTSU = "otsu"


class Target(str, Enum):
    CELL = "cell"
    NUCLEUS = "nucleus"


class Polarity(str, Enum):
    DARK_FG = "dark_fg"
    BRIGHT_FG = "bright_fg"


@dataclass(frozen=True)
class SegMethod:
    method: Method
    target: Target

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "target", Target(self.target))

    @property
    def variant(self) -> str:
        """Dataset flavour name, e.g. ``cell-otsu``."""
        return f"{self.target.value}-{self.method.value}"

    @classmethod
    def all(cls) -> list["SegMethod"]:
        return [cls(m, t) for t in Target for m in Method]


@dataclass(frozen=True)
class HueBand:
    """Inclusive hue interval in degrees; ``lo > hi`` wraps through 0."""

    lo: float
    hi: float
    min_saturation: float = 0.0

    def __post_init__(self):
        for name in ("lo", "hi"):
            val = getattr(self, name)
            if not 0.0 <= val < 360.0:
                raise ValueError(f"HueBand.{name}={val} outside [0, 360)")
        if not 0.0 <= self.min_saturation <= 1.0:
            raise ValueError(f"min_saturation={self.min_saturation} outside [0, 1]")

    def contains(self, hue: np.ndarray) -> np.ndarray:
        if self.lo <= self.hi:
            return (hue >= self.lo) & (hue <= self.hi)
        return (hue >= self.lo) | (hue <= self.hi)


# Defaults aimed at the violet/magenta Wright-Giemsa stain family.
NUCLEUS_BAND = HueBand(220.0, 340.0, 0.15)
CELL_BAND = HueBand(180.0, 359.0, 0.08)


@dataclass(frozen=True)
class SegConfig:
    cell_band: HueBand = field(default_factory=lambda: CELL_BAND)
    nucleus_band: HueBand = field(default_factory=lambda: NUCLEUS_BAND)


def histogram(gray: np.ndarray) -> np.ndarray:
    """256-bin intensity histogram as int64 counts."""
    gray = np.asarray(gray)
    if gray.size == 0:
        raise ValueError("cannot histogram an empty image")
    return np.bincount(gray.ravel().astype(np.int64), minlength=256)


def otsu_threshold(hist) -> int:
    """Threshold t maximising between-class variance, class 0 = values <= t.

    Between-class variance w0*w1*(mu0 - mu1)^2 equals
    (N*S0 - S*n0)^2 / (N^2 * n0 * n1), so candidates are compared as exact
    integer fractions; ties go to the smallest t. A histogram whose mass sits
    on a single value returns that value.
    """
    counts = [int(c) for c in hist]
    if len(counts) != 256:
        raise ValueError(f"expected 256 bins, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise ValueError("histogram counts must be non-negative")
    total = sum(counts)
    if total == 0:
        raise ValueError("empty histogram")
    nonzero = [v for v, c in enumerate(counts) if c]
    if len(nonzero) == 1:
        return nonzero[0]

    total_sum = sum(v * c for v, c in enumerate(counts))
    best_t, best_num, best_den = -1, 0, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (total * s0 - total_sum * n0) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def hue_mask(img: np.ndarray, band: HueBand) -> np.ndarray:
    h, s, _ = rgb_to_hsv_array(img)
    return band.contains(h) & (s >= band.min_saturation)


def otsu_mask(img: np.ndarray, polarity: Polarity | str = Polarity.DARK_FG) -> np.ndarray:
    gray = to_gray(img)
    t = otsu_threshold(histogram(gray))
    if Polarity(polarity) is Polarity.DARK_FG:
        return gray <= t
    return gray > t


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep the largest 4-connected foreground component.

    Equal-size components resolve to the one whose first pixel comes earliest
    in row-major order; scipy numbers labels in exactly that order.
    """
    mask = check_mask(mask)
    labels, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if n == 0:
        return np.zeros_like(mask)
    sizes = np.bincount(labels.ravel())[1:]
    keep = int(np.argmax(sizes)) + 1
    return labels == keep


def _cell_mask(img: np.ndarray, method: Method, cfg: SegConfig) -> np.ndarray:
    if method is Method.HUE:
        raw = hue_mask(img, cfg.cell_band)
    else:
        raw = otsu_mask(img, Polarity.DARK_FG)
        # a single-intensity image has no stained content; Otsu would call it all foreground
        if raw.all():
            raw = np.zeros_like(raw)
    return largest_component(raw)


def _nucleus_mask(img: np.ndarray, cell: np.ndarray, method: Method, cfg: SegConfig) -> np.ndarray:
    if not cell.any():
        return cell
    if method is Method.HUE:
        raw = hue_mask(img, cfg.nucleus_band) & cell
    else:
        gray = to_gray(img)
        # nuclei are the darkest compartment: keep the lower Otsu class inside the cell
        t = otsu_threshold(histogram(gray[cell]))
        raw = cell & (gray <= t)
    return largest_component(raw)


def segment_masks(img: np.ndarray, method: Method | str, cfg: SegConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(cell mask, nucleus mask) for one technique; nucleus is within cell."""
    img = check_rgb(img)
    cfg = cfg or SegConfig()
    method = Method(method)
    cell = _cell_mask(img, method, cfg)
    return cell, _nucleus_mask(img, cell, method, cfg)


def segment_mask(img: np.ndarray, seg: SegMethod, cfg: SegConfig | None = None) -> np.ndarray:
    cell, nucleus = segment_masks(img, seg.method, cfg)
    return cell if seg.target is Target.CELL else nucleus


def segment(img: np.ndarray, seg: SegMethod, cfg: SegConfig | None = None) -> np.ndarray:
    """Masked copy of ``img`` keeping only the segmented cell or nucleus."""
    return apply_mask(img, segment_mask(img, seg, cfg))
