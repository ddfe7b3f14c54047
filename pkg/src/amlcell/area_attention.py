"""Full and area attention over ``n x h x d`` token tensors, with exact MAC
accounting.

Only the two n^2-order products are counted (Q K^T and P V), so full
attention costs ``2 n^2 h d`` MACs and area attention with ``l`` equal
segments costs ``2 n^2 h d / l``. Softmax, scaling and any Q/K/V
projections are not counted.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)


class Axis(str, Enum):
    HORIZONTAL = "horizontal"  # stripes of H/l full-width rows
    VERTICAL = "vertical"      # stripes of W/l full-height columns
    TOKEN = "token"            # contiguous token-index blocks, no spatial layout needed


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray                      # (n, h, d) float64
    spatial: tuple[int, int] | None = None  # (H, W), row-major tokens

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3 or min(vals.shape) < 1:
            raise ValueError(f"feature map must be (n, h, d) with all dims >= 1, got {vals.shape}")
        object.__setattr__(self, "values", vals)
        if self.spatial is not None:
            H, W = self.spatial
            if H * W != vals.shape[0]:
                raise ValueError(f"spatial {H}x{W} does not cover n={vals.shape[0]} tokens")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass(frozen=True)
class AttentionConfig:
    l: int = 4
    axis: Axis = Axis.TOKEN
    scale: float | None = None  # None -> 1/sqrt(d)

    def __post_init__(self):
        if self.l < 1:
            raise ValueError(f"segment count must be >= 1, got {self.l}")
        object.__setattr__(self, "axis", Axis(self.axis))


@dataclass(frozen=True)
class FlopCount:
    macs: int


class MacCounter:
    def __init__(self):
        self.macs = 0

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        # (h, m, p) @ (h, p, q): h*m*p*q multiply-accumulates
        h, m, p = a.shape
        self.macs += h * m * p * b.shape[2]
        return np.matmul(a, b)


def _as_fm(x) -> FeatureMap:
    return x if isinstance(x, FeatureMap) else FeatureMap(x)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _attend(q: np.ndarray, k: np.ndarray, v: np.ndarray, scale: float, counter: MacCounter):
    # inputs (m, h, d); per-head batched products
    qh = q.transpose(1, 0, 2)
    kt = k.transpose(1, 2, 0)
    vh = v.transpose(1, 0, 2)
    probs = softmax(counter.matmul(qh, kt) * scale)
    return counter.matmul(probs, vh).transpose(1, 0, 2), probs


def _check_qkv(q, k, v) -> tuple[FeatureMap, FeatureMap, FeatureMap]:
    q, k, v = _as_fm(q), _as_fm(k), _as_fm(v)
    if not q.shape == k.shape == v.shape:
        raise ValueError(f"q, k, v shapes differ: {q.shape}, {k.shape}, {v.shape}")
    return q, k, v


def _scale(scale: float | None, d: int) -> float:
    return 1.0 / math.sqrt(d) if scale is None else float(scale)


def full_attention(q, k, v, scale: float | None = None) -> tuple[FeatureMap, FlopCount]:
    q, k, v = _check_qkv(q, k, v)
    counter = MacCounter()
    out, _ = _attend(
        np.ascontiguousarray(q.values),
        np.ascontiguousarray(k.values),
        np.ascontiguousarray(v.values),
        _scale(scale, q.shape[2]),
        counter,
    )
    return FeatureMap(out, q.spatial), FlopCount(counter.macs)


def attention_probs(q, k, scale: float | None = None) -> np.ndarray:
    """Softmax attention weights, shape (h, n, n)."""
    q, k = _as_fm(q), _as_fm(k)
    _, probs = _attend(q.values, k.values, k.values, _scale(scale, q.shape[2]), MacCounter())
    return probs


def segment_tokens(fm: FeatureMap, cfg: AttentionConfig) -> list[np.ndarray]:
    """Token-index groups for the ``cfg.l`` area segments."""
    fm = _as_fm(fm)
    n, l = fm.shape[0], cfg.l
    if cfg.axis is Axis.TOKEN:
        if n % l:
            raise ValueError(f"token axis: n={n} not divisible by l={l} (remainder {n % l})")
        return list(np.arange(n).reshape(l, n // l))
    if fm.spatial is None:
        raise ValueError(f"{cfg.axis.value} axis needs spatial (H, W) on the feature map")
    H, W = fm.spatial
    grid = np.arange(n).reshape(H, W)
    if cfg.axis is Axis.HORIZONTAL:
        if H % l:
            raise ValueError(f"horizontal axis: H={H} not divisible by l={l} (remainder {H % l})")
        return [grid[i * (H // l):(i + 1) * (H // l), :].ravel() for i in range(l)]
    if W % l:
        raise ValueError(f"vertical axis: W={W} not divisible by l={l} (remainder {W % l})")
    return [grid[:, i * (W // l):(i + 1) * (W // l)].ravel() for i in range(l)]


def area_attention(q, k, v, cfg: AttentionConfig) -> tuple[FeatureMap, FlopCount]:
    """Attention restricted to each area segment, scattered back in place."""
    q, k, v = _check_qkv(q, k, v)
    groups = segment_tokens(q, cfg)
    scale = _scale(cfg.scale, q.shape[2])
    counter = MacCounter()
    out = np.empty_like(q.values)
    for idx in groups:
        out[idx], _ = _attend(q.values[idx], k.values[idx], v.values[idx], scale, counter)
    return FeatureMap(out, q.spatial), FlopCount(counter.macs)


def count_flops(n: int, h: int, d: int, l: int = 1) -> FlopCount:
    if min(n, h, d, l) < 1:
        raise ValueError(f"n, h, d, l must all be >= 1, got {(n, h, d, l)}")
    if n % l:
        raise ValueError(f"n={n} not divisible by l={l} (remainder {n % l})")
    return FlopCount(2 * n * n * h * d // l)


# --- benchmark ------------------------------------------------------------

BENCH_FIELDS = ("n", "h", "d", "l", "axis", "macs_full", "macs_area", "wall_ns_full", "wall_ns_area")


def _spatial_for(n: int, axis: Axis) -> tuple[int, int] | None:
    if axis is Axis.TOKEN:
        return None
    side = math.isqrt(n)
    if side * side != n:
        raise ValueError(f"{axis.value} axis needs a square token grid, n={n} is not a square")
    return side, side


def _best_ns(fn, repeats: int) -> int:
    best = None
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        dt = time.perf_counter_ns() - t0
        best = dt if best is None else min(best, dt)
    return best


def benchmark(
    ns: Iterable[int],
    hs: Iterable[int],
    ds: Iterable[int],
    ls: Iterable[int],
    axis: Axis | str = Axis.TOKEN,
    seed: int = 0,
    repeats: int = 3,
) -> Iterator[dict]:
    """Yield one row per valid grid point; non-divisible points are skipped with a warning."""
    axis = Axis(axis)
    rng = np.random.default_rng(seed)
    for n in ns:
        for h in hs:
            for d in ds:
                for l in ls:
                    try:
                        fm = FeatureMap(rng.standard_normal((n, h, d)), _spatial_for(n, axis))
                        cfg = AttentionConfig(l=l, axis=axis)
                        segment_tokens(fm, cfg)
                    except ValueError as exc:
                        log.warning("skipping n=%d h=%d d=%d l=%d: %s", n, h, d, l, exc)
                        continue
                    _, f_full = full_attention(fm, fm, fm)
                    _, f_area = area_attention(fm, fm, fm, cfg)
                    yield {
                        "n": n, "h": h, "d": d, "l": l, "axis": axis.value,
                        "macs_full": f_full.macs,
                        "macs_area": f_area.macs,
                        "wall_ns_full": _best_ns(lambda: full_attention(fm, fm, fm), repeats),
                        "wall_ns_area": _best_ns(lambda: area_attention(fm, fm, fm, cfg), repeats),
                    }
