"""Class-per-directory corpus handling: scanning, stratified splitting and
synthetic fixture generation.

Split shuffling uses SplitMix64 so that manifests are reproducible from the
seed alone, independent of numpy's generator versions:

    state  <- state + 0x9E3779B97F4A7C15            (mod 2**64)
    z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB
    output <- z ^ (z >> 31)

The per-class stream starts from ``mix64(seed ^ mix64(ordinal + 1))`` where
``mix64`` is the three-line finaliser above, and the class's paths (sorted)
are shuffled with a descending Fisher-Yates pass using ``next() % (i + 1)``.
"""

from __future__ import annotations

import colorsys
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum, IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .image_core import write_image, write_mask

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class ClassLabel(IntEnum):
    BASOPHIL = 0
    ERYTHROBLAST = 1
    MONOCYTE = 2
    MYELOBLAST = 3
    SEG_NEUTROPHIL = 4

    @property
    def dirname(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(
                f"unknown class {name!r}; expected one of {[c.dirname for c in cls]}"
            ) from None


CLASS_NAMES = [c.dirname for c in ClassLabel]


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.next() % (i + 1)
            items[i], items[j] = items[j], items[i]


def class_stream(seed: int, label: ClassLabel) -> SplitMix64:
    return SplitMix64(mix64((seed & MASK64) ^ mix64(int(label) + 1)))


@dataclass(frozen=True)
class SampleRecord:
    path: str
    label: ClassLabel
    split: Split


@dataclass
class SplitManifest:
    records: list[SampleRecord]
    seed: int
    fractions: tuple[float, float, float]

    def subset(self, split: Split | str) -> list[SampleRecord]:
        split = Split(split)
        return [r for r in self.records if r.split is split]

    def counts(self) -> dict[tuple[ClassLabel, Split], int]:
        out: dict[tuple[ClassLabel, Split], int] = {}
        for r in self.records:
            out[(r.label, r.split)] = out.get((r.label, r.split), 0) + 1
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        for r in sorted(self.records, key=lambda r: r.path):
            w.writerow([r.path, r.label.dirname, r.split.value])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_csv().encode("utf-8"))

    @classmethod
    def read(cls, path: str | Path) -> "SplitManifest":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != ["path", "label", "split"]:
                raise ValueError(f"{path}: expected header path,label,split, got {reader.fieldnames}")
            records = [
                SampleRecord(row["path"], ClassLabel.from_name(row["label"]), Split(row["split"]))
                for row in reader
            ]
        # seed and fractions are not part of the file format
        return cls(records, seed=-1, fractions=(math.nan,) * 3)


def scan(root: str | Path) -> list[tuple[str, ClassLabel]]:
    """List ``(relative posix path, label)`` pairs under ``root/<class>/``."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")
    found: dict[ClassLabel, list[str]] = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        label = ClassLabel.from_name(sub.name)
        if sub.name != label.dirname:
            raise ValueError(f"class directory {sub.name!r} must be spelled {label.dirname!r}")
        found[label] = [
            f"{sub.name}/{f.name}"
            for f in sub.iterdir()
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
        ]
    for label in ClassLabel:
        if not found.get(label):
            raise ValueError(f"class {label.dirname!r} has no images under {root}")
    samples = [(p, label) for label, paths in found.items() for p in paths]
    return sorted(samples, key=lambda s: s[0])


def split_sizes(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Floor-train-first rounding: train = floor(f_train * n); the remainder
    goes to val and test in proportion, rounded toward val."""
    f_train, f_val, f_test = (Fraction(repr(float(f))) for f in fractions)
    n_train = math.floor(f_train * n)
    rest = n - n_train
    share = f_val / (f_val + f_test) if f_val + f_test else Fraction(0)
    n_val = math.ceil(share * rest)
    return n_train, n_val, rest - n_val


def check_fractions(fractions: Sequence[float]) -> tuple[float, float, float]:
    if len(fractions) != 3:
        raise ValueError(f"need three split fractions, got {len(fractions)}")
    fr = tuple(float(f) for f in fractions)
    if any(f < 0 for f in fr):
        raise ValueError(f"split fractions must be non-negative, got {fr}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {sum(fr)!r}")
    return fr


def stratified_split(
    samples: Iterable[tuple[str, ClassLabel]],
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitManifest:
    fractions = check_fractions(fractions)
    by_class: dict[ClassLabel, list[str]] = {}
    seen: set[str] = set()
    for path, label in samples:
        if path in seen:
            raise ValueError(f"duplicate sample path {path!r}")
        seen.add(path)
        by_class.setdefault(ClassLabel(label), []).append(path)

    records = []
    for label in sorted(by_class):
        paths = sorted(by_class[label])
        if len(paths) < 3:
            raise ValueError(f"class {label.dirname!r} has {len(paths)} samples; need at least 3")
        class_stream(seed, label).shuffle(paths)
        n_train, n_val, _ = split_sizes(len(paths), fractions)
        for i, p in enumerate(paths):
            split = Split.TRAIN if i < n_train else Split.VAL if i < n_train + n_val else Split.TEST
            records.append(SampleRecord(p, label, split))
    records.sort(key=lambda r: r.path)
    return SplitManifest(records, seed, fractions)


# --- synthetic fixture ---------------------------------------------------

@dataclass(frozen=True)
class CellStyle:
    cell_radius: float       # pixels at 128x128
    nucleus: str             # round | kidney | lobed
    nucleus_scale: float     # relative to cell radius
    nucleus_hue: float
    cyto_hsv: tuple[float, float, float]
    nucleus_sv: tuple[float, float] = (0.70, 0.55)


# Nucleus hues sit inside the default nucleus band, cytoplasm hues inside the
# cell band but outside the nucleus band.
STYLES = {
    ClassLabel.BASOPHIL: CellStyle(30, "round", 0.62, 265.0, (349.0, 0.45, 0.78)),
    ClassLabel.ERYTHROBLAST: CellStyle(24, "round", 0.50, 235.0, (200.0, 0.30, 0.66)),
    ClassLabel.MONOCYTE: CellStyle(42, "kidney", 0.62, 285.0, (349.0, 0.40, 0.80)),
    ClassLabel.MYELOBLAST: CellStyle(36, "round", 0.78, 250.0, (349.0, 0.45, 0.76)),
    ClassLabel.SEG_NEUTROPHIL: CellStyle(33, "lobed", 0.30, 305.0, (349.0, 0.42, 0.80)),
}

BACKGROUND_LEVEL = 245.0
NOISE_SIGMA = 2.0


def _hsv_rgb(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb((h % 360.0) / 360.0, s, v)) * 255.0


def _disc(yy, xx, cy, cx, r):
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def render_cell(label: ClassLabel, rng: np.random.Generator, size: int = 128):
    """Draw one synthetic stained cell; returns (rgb, cell_mask, nucleus_mask)."""
    style = STYLES[ClassLabel(label)]
    scale = size / 128.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size / 2 + rng.uniform(-4, 4) * scale
    cx = size / 2 + rng.uniform(-4, 4) * scale
    rc = style.cell_radius * scale * rng.uniform(0.93, 1.07)
    cell = _disc(yy, xx, cy, cx, rc)

    theta = rng.uniform(0, 2 * np.pi)
    ux, uy = np.cos(theta), np.sin(theta)
    rn = style.nucleus_scale * rc * rng.uniform(0.95, 1.05)
    if style.nucleus == "round":
        off = rng.uniform(0.0, 0.08) * rc
        nucleus = _disc(yy, xx, cy + off * uy, cx + off * ux, rn)
    elif style.nucleus == "kidney":
        nucleus = _disc(yy, xx, cy, cx, rn) & ~_disc(yy, xx, cy + 0.9 * rn * uy, cx + 0.9 * rn * ux, 0.6 * rn)
    else:
        nucleus = np.zeros_like(cell)
        step = 1.15 * rn
        for k, zig in zip((-1, 0, 1), (0.25, -0.25, 0.25)):
            ly = cy + k * step * uy + zig * rn * ux
            lx = cx + k * step * ux - zig * rn * uy
            nucleus |= _disc(yy, xx, ly, lx, rn)
    nucleus &= cell

    ch, cs, cv = style.cyto_hsv
    cyto_rgb = _hsv_rgb(ch + rng.uniform(-1.5, 1.5), cs, cv)
    ns, nv = style.nucleus_sv
    nuc_rgb = _hsv_rgb(style.nucleus_hue + rng.uniform(-3, 3), ns, nv)

    img = np.full((size, size, 3), BACKGROUND_LEVEL)
    img[cell] = cyto_rgb
    img[nucleus] = nuc_rgb
    img += rng.normal(0.0, NOISE_SIGMA, img.shape)
    img = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    return img, cell, nucleus


def _fixture_job(args):
    out, label, index, seed, size = args
    rng = np.random.default_rng([seed & MASK64, int(label), index])
    img, cell, nucleus = render_cell(label, rng, size)
    name = f"{label.dirname}_{index:04d}.png"
    write_image(out / "images" / label.dirname / name, img)
    write_mask(out / "masks" / "cell" / label.dirname / name, cell)
    write_mask(out / "masks" / "nucleus" / label.dirname / name, nucleus)
    return name


def make_fixture(out: str | Path, per_class: int, seed: int = 0, size: int = 128, jobs: int = 1) -> Path:
    """Write a synthetic corpus under ``out``.

    Layout::

        out/images/<class>/<class>_NNNN.png
        out/masks/cell/<class>/<class>_NNNN.png
        out/masks/nucleus/<class>/<class>_NNNN.png

    ``out/images`` is a valid root for :func:`scan`.
    """
    if per_class < 3:
        raise ValueError(f"per_class must be at least 3, got {per_class}")
    if size < 16:
        raise ValueError(f"fixture size must be at least 16 pixels, got {size}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(out, label, i, seed, size) for label in ClassLabel for i in range(per_class)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_fixture_job, tasks, chunksize=16))
    else:
        for t in tasks:
            _fixture_job(t)
    return out
