"""Multinomial logistic regression trained with mini-batch SGD.

Stands in for the deep classifier at desk scale: segmented images go in,
per-epoch loss curves and predictions come out. Weights are a
``(n_classes, n_features)`` matrix whose last column multiplies the constant
bias feature. Training starts from all-zero weights.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import ClassLabel, SplitManifest
from .image_core import read_image, resize

FEATURE_SIZE = 32
N_CLASSES = len(ClassLabel)
MODEL_MAGIC = b"AMLW"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.1
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not self.l2 >= 0:
            raise ValueError(f"l2 must be non-negative, got {self.l2}")


@dataclass
class LossCurve:
    # (train_loss, val_loss, val_accuracy) per completed epoch
    entries: list[tuple[float, float, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for epoch, (tl, vl, va) in enumerate(self.entries, start=1):
            w.writerow([epoch, repr(tl), repr(vl), repr(va)])
        return buf.getvalue()

    @property
    def train_loss(self) -> list[float]:
        return [e[0] for e in self.entries]


def featurize(img: np.ndarray, size: int = FEATURE_SIZE) -> np.ndarray:
    """Downsample to size x size, scale to [0, 1], flatten row-major, append bias 1.0."""
    small = resize(img, size, size).astype(np.float64) / 255.0
    return np.append(small.ravel(), 1.0)


def load_features(manifest: SplitManifest, root: str | Path, split: str) -> tuple[np.ndarray, np.ndarray]:
    root = Path(root)
    recs = manifest.subset(split)
    if not recs:
        raise ValueError(f"manifest has no {split!r} samples")
    X = np.stack([featurize(read_image(root / r.path)) for r in recs])
    y = np.array([int(r.label) for r in recs], dtype=np.int64)
    return X, y


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(W: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    return float(-log_softmax(X @ W.T)[np.arange(len(y)), y].mean())


def objective(W: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> float:
    return cross_entropy(W, X, y) + 0.5 * l2 * float(np.sum(W * W))


def gradient(W: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> np.ndarray:
    """Gradient of :func:`objective` with respect to W."""
    probs = np.exp(log_softmax(X @ W.T))
    probs[np.arange(len(y)), y] -= 1.0
    return probs.T @ X / len(y) + l2 * W


def predict_batch(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    # argmax takes the first maximum, i.e. the smallest ordinal on ties
    return np.argmax(X @ W.T, axis=1)


def predict(params: np.ndarray, fv: np.ndarray) -> ClassLabel:
    fv = np.asarray(fv, dtype=np.float64)
    if fv.ndim != 1 or fv.shape[0] != params.shape[1]:
        raise ValueError(f"feature length {fv.shape} does not match weights {params.shape}")
    return ClassLabel(int(np.argmax(params @ fv)))


def fit(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
    n_classes: int = N_CLASSES,
) -> tuple[np.ndarray, LossCurve]:
    if len(y_train) == 0 or len(y_val) == 0:
        raise ValueError("train and val splits must both be non-empty")
    W = np.zeros((n_classes, X_train.shape[1]))
    curve = LossCurve()
    m = len(y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed & (2**64 - 1), epoch]).permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            W -= cfg.learning_rate * gradient(W, X_train[idx], y_train[idx], cfg.l2)
        train_loss = cross_entropy(W, X_train, y_train)
        val_loss = cross_entropy(W, X_val, y_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss) and np.isfinite(W).all()):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        val_acc = float(np.mean(predict_batch(W, X_val) == y_val))
        curve.entries.append((train_loss, val_loss, val_acc))
    return W, curve


def train(manifest: SplitManifest, cfg: TrainConfig, root: str | Path) -> tuple[np.ndarray, LossCurve]:
    """Fit on the manifest's train split of the image tree at ``root``; val is
    used only for the loss curve. The test split is never touched here."""
    X_tr, y_tr = load_features(manifest, root, "train")
    X_va, y_va = load_features(manifest, root, "val")
    return fit(X_tr, y_tr, X_va, y_va, cfg)


def grad_check(
    params: np.ndarray,
    batch: tuple[np.ndarray, np.ndarray],
    l2: float = 0.0,
    n_coords: int = 100,
    step: float = 1e-5,
    seed: int = 0,
    grad_fn: Callable[..., np.ndarray] = gradient,
) -> float:
    """Max relative error between ``grad_fn`` and central differences of the
    objective on randomly chosen weight coordinates.

    Coordinates where both gradients are below 1e-10 in magnitude are skipped.
    """
    X, y = batch
    if len(y) == 0:
        raise ValueError("grad_check needs a non-empty batch")
    W = np.array(params, dtype=np.float64)
    analytic = grad_fn(W, X, y, l2)
    rng = np.random.default_rng(seed)
    coords = rng.choice(W.size, size=min(n_coords, W.size), replace=False)
    worst = 0.0
    for flat in coords:
        i = np.unravel_index(flat, W.shape)
        orig = W[i]
        # difference each term separately so a tiny penalty slope is not lost
        # in the rounding of the much larger cross-entropy value
        W[i] = orig + step
        ce_plus, pen_plus = cross_entropy(W, X, y), 0.5 * l2 * W[i] ** 2
        W[i] = orig - step
        ce_minus, pen_minus = cross_entropy(W, X, y), 0.5 * l2 * W[i] ** 2
        W[i] = orig
        numeric = ((ce_plus - ce_minus) + (pen_plus - pen_minus)) / (2 * step)
        a = analytic[i]
        denom = max(abs(a), abs(numeric))
        if denom < 1e-10:
            continue
        worst = max(worst, abs(a - numeric) / denom)
    return worst


# --- parameter blob ---------------------------------------------------------
# 16-byte little-endian header: magic b"AMLW", uint32 version, uint32 rows,
# uint32 cols; then rows*cols float64 LE values, row-major.

def save_params(path: str | Path, W: np.ndarray) -> None:
    rows, cols = W.shape
    header = struct.pack("<4sIII", MODEL_MAGIC, MODEL_VERSION, rows, cols)
    Path(path).write_bytes(header + np.ascontiguousarray(W, dtype="<f8").tobytes())


def load_params(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, version, rows, cols = struct.unpack("<4sIII", blob[:16])
    if magic != MODEL_MAGIC or version != MODEL_VERSION:
        raise ValueError(f"{path}: not a version-{MODEL_VERSION} parameter file")
    body = blob[16:]
    if len(body) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows * cols * 8} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
