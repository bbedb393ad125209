"""Hierarchical shifted-window attention encoder for log-mel spectrograms.

Pipeline: demographic frames are prepended to the spectrogram, the result is
cut into P x P patches, passed through windowed attention stages (patch
merging before every stage but the first), mean-pooled, and classified by a
two-layer head whose hidden activation is the exported acoustic feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import tensor as T
from .config import AcousticConfig
from .dsp import MelSpectrogram
from .nn import MASK_VALUE, MLP, Embedding, LayerNorm, Linear, Module, ModuleList, QKVProjection, merge_heads
from .tensor import Tensor

AGE_BUCKETS = 12  # decades 0..11, plus one UNKNOWN bucket
GENDERS = ("M", "F", "UNKNOWN")


@dataclass(frozen=True)
class DemographicInfo:
    age: int | None = None
    gender: str = "UNKNOWN"

    def __post_init__(self):
        g = (self.gender or "UNKNOWN").upper()
        if g not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        object.__setattr__(self, "gender", g)
        if self.age is not None and not 0 <= self.age <= 120:
            raise ValueError(f"age must be in [0, 120], got {self.age}")

    @property
    def age_bucket(self) -> int:
        if self.age is None:
            return AGE_BUCKETS
        return min(max(self.age // 10, 0), AGE_BUCKETS - 1)

    @property
    def gender_index(self) -> int:
        return GENDERS.index(self.gender)


UNKNOWN = DemographicInfo()


class DemographicEmbedding(Module):
    def __init__(self, dim: int, rng: np.random.Generator):
        self.age = Embedding(AGE_BUCKETS + 1, dim, rng)
        self.gender = Embedding(len(GENDERS), dim, rng)

    def forward(self, demos: list[DemographicInfo]) -> Tensor:
        """(B, 2, dim): age frame then gender frame."""
        a = self.age([d.age_bucket for d in demos])
        g = self.gender([d.gender_index for d in demos])
        return T.stack([a, g], axis=1)


def condition_demographics(x: Tensor, demos: list[DemographicInfo], embed: DemographicEmbedding | None) -> Tensor:
    """Prepend the age and gender frames to (B, T, F) spectrograms; identity when ``embed`` is None."""
    if embed is None:
        return x
    return T.concat([embed(demos), x], axis=1)


# -- windows -------------------------------------------------------------


def window_partition(g, w: int):
    """(B, H, W, C) or (H, W, C) grid -> (num_windows, w*w, C), row-major inside windows.

    Works on numpy arrays and tensors alike.
    """
    squeeze = g.ndim == 3
    if squeeze:
        g = g.reshape(1, *g.shape)
    b, h, wd, c = g.shape
    if h % w or wd % w:
        raise ValueError(f"grid {h}x{wd} not divisible by window {w}")
    g = g.reshape(b, h // w, w, wd // w, w, c).transpose(0, 1, 3, 2, 4, 5)
    return g.reshape(b * (h // w) * (wd // w), w * w, c)


def window_reverse(windows, h: int, wd: int, w: int, batch: int | None = None):
    """Inverse of :func:`window_partition`; returns (B, H, W, C), or (H, W, C) when ``batch`` is None."""
    per = (h // w) * (wd // w)
    if h % w or wd % w or windows.shape[0] % per or (batch is not None and windows.shape[0] != per * batch):
        raise ValueError(f"{windows.shape[0]} windows do not tile a {h}x{wd} grid with window {w}")
    b = windows.shape[0] // per
    c = windows.shape[-1]
    g = windows.reshape(b, h // w, wd // w, w, w, c).transpose(0, 1, 3, 2, 4, 5).reshape(b, h, wd, c)
    return g.reshape(h, wd, c) if batch is None else g


def _ceil_to(n: int, m: int) -> int:
    return -(-n // m) * m


def region_labels(h: int, wd: int, w: int, shift: int) -> np.ndarray:
    """Region id of every position of the padded, cyclically shifted grid.

    Ids 0..8 come from the 3x3 split ``[0,-w), [-w,-shift), [-shift,0)`` per
    axis; positions holding padding (grid extent rounded up to ``w``) get -1.
    """
    hp, wp = _ceil_to(h, w), _ceil_to(wd, w)
    lab = np.zeros((hp, wp), dtype=np.int64)
    if shift:
        spans = (slice(0, -w), slice(-w, -shift), slice(-shift, None))
        for i, hs in enumerate(spans):
            for j, ws in enumerate(spans):
                lab[hs, ws] = 3 * i + j
    rows = (np.arange(hp) + shift) % hp >= h
    cols = (np.arange(wp) + shift) % wp >= wd
    lab[rows[:, None] | cols[None, :]] = -1
    return lab


def shift_mask(h: int, wd: int, w: int, shift: int) -> np.ndarray:
    """Additive attention mask per window, shape (num_windows, w*w, w*w).

    0 where two tokens share a region id, ``MASK_VALUE`` otherwise.
    """
    lab = window_partition(region_labels(h, wd, w, shift)[..., None], w)[..., 0]
    return np.where(lab[:, :, None] == lab[:, None, :], 0.0, MASK_VALUE)


@lru_cache(maxsize=256)
def _cached_mask(h: int, wd: int, w: int, shift: int) -> np.ndarray | None:
    if shift == 0 and h % w == 0 and wd % w == 0:
        return None
    m = shift_mask(h, wd, w, shift)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=64)
def relative_position_index(w: int, table_w: int) -> np.ndarray:
    """(w*w, w*w) index into a (2*table_w - 1)^2 bias table keyed by (drow, dcol)."""
    coords = np.stack(np.meshgrid(np.arange(w), np.arange(w), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (table_w - 1)
    idx = rel[0] * (2 * table_w - 1) + rel[1]
    idx.setflags(write=False)
    return idx


def effective_window(h: int, wd: int, window: int, shifted: bool) -> tuple[int, int]:
    """Window and shift used on an h x wd grid.

    Grids no larger than the window along their short side use a single
    window of that size and no shift.
    """
    if min(h, wd) <= window:
        return min(h, wd), 0
    return window, window // 2 if shifted else 0


class WindowAttention(Module):
    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator, rel_bias: bool = True):
        if dim % heads:
            raise ValueError(f"{dim} channels not divisible by {heads} heads")
        self.qkv = QKVProjection(dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.rel_bias = T.parameter(rng.normal(0.0, 0.02, size=((2 * window - 1) ** 2, heads))) if rel_bias else None
        self._heads = heads
        self._window = window
        self.record = False
        self._last_probs: np.ndarray | None = None

    def forward(self, x: Tensor, w: int, mask: np.ndarray | None, batch: int) -> Tensor:
        bn, n, c = x.shape
        hd = c // self._heads
        qkv = self.qkv(x).reshape(bn, n, 3, self._heads, hd).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(hd))
        if self.rel_bias is not None:
            bias = self.rel_bias[relative_position_index(w, self._window)]
            scores = scores + bias.transpose(2, 0, 1)
        if mask is not None:
            nw = mask.shape[0]
            scores = (scores.reshape(batch, nw, self._heads, n, n) + mask[None, :, None]).reshape(bn, self._heads, n, n)
        probs = T.softmax(scores, axis=-1)
        if self.record:
            self._last_probs = probs.data
        return self.proj(merge_heads(probs @ v))


class SwinBlock(Module):
    """Pre-norm block: LN, (shifted) window attention, residual, LN, MLP, residual."""

    def __init__(self, dim: int, heads: int, window: int, shifted: bool, rng: np.random.Generator, rel_bias: bool = True):
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, rng, rel_bias)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(dim, 4 * dim, rng)
        self._window = window
        self._shifted = shifted

    def forward(self, g: Tensor) -> Tensor:
        b, h, wd, c = g.shape
        w, shift = effective_window(h, wd, self._window, self._shifted)
        hp, wp = _ceil_to(h, w), _ceil_to(wd, w)
        x = T.pad(self.norm1(g), [(0, 0), (0, hp - h), (0, wp - wd), (0, 0)])
        if shift:
            x = T.roll(x, (-shift, -shift), (1, 2))
        win = self.attn(window_partition(x, w), w, _cached_mask(h, wd, w, shift), b)
        x = window_reverse(win, hp, wp, w, batch=b)
        if shift:
            x = T.roll(x, (shift, shift), (1, 2))
        if hp != h or wp != wd:
            x = x[:, :h, :wd]
        g = g + x
        return g + self.mlp(self.norm2(g))


class PatchMerge(Module):
    """2x2 neighbourhood concat (4C), LayerNorm, linear projection to 2C."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.norm = LayerNorm(4 * dim)
        self.reduction = Linear(4 * dim, 2 * dim, rng, bias=False)

    def forward(self, g: Tensor) -> Tensor:
        if g.shape[1] % 2 or g.shape[2] % 2:
            raise ValueError(f"patch merge needs even grid dims, got {g.shape[1]}x{g.shape[2]}")
        parts = [g[:, 0::2, 0::2], g[:, 1::2, 0::2], g[:, 0::2, 1::2], g[:, 1::2, 1::2]]
        return self.reduction(self.norm(T.concat(parts, axis=-1)))


class PatchEmbed(Module):
    def __init__(self, patch: int, dim: int, multiple: int, rng: np.random.Generator):
        self.proj = Linear(patch * patch, dim, rng)
        self._patch = patch
        self._multiple = multiple

    def forward(self, x: Tensor) -> Tensor:
        """(B, T, F) -> (B, T_pad/P, F_pad/P, D); both axes zero-padded to the merge multiple."""
        b, t, f = x.shape
        m, p = self._multiple, self._patch
        x = T.pad(x, [(0, 0), (0, _ceil_to(t, m) - t), (0, _ceil_to(f, m) - f)])
        _, tp, fp = x.shape
        x = x.reshape(b, tp // p, p, fp // p, p).transpose(0, 1, 3, 2, 4).reshape(b, tp // p, fp // p, p * p)
        return self.proj(x)


class Stage(Module):
    def __init__(self, merge: PatchMerge | None, blocks: list[SwinBlock]):
        self.merge = merge
        self.blocks = ModuleList(blocks)

    def forward(self, g: Tensor) -> Tensor:
        if self.merge is not None:
            g = self.merge(g)
        for blk in self.blocks:
            g = blk(g)
        return g


@dataclass
class AcousticOutput:
    logits: Tensor  # (B, num_classes)
    xa: Tensor  # (B, feature_dim)
    xp: Tensor  # (B, 8D)
    stages: list[Tensor] = field(default_factory=list)


class AcousticEncoder(Module):
    def __init__(self, cfg: AcousticConfig, rng: np.random.Generator):
        problems = cfg.problems()
        if problems:
            raise ValueError("; ".join(problems))
        self.cfg = cfg
        self.demographics = DemographicEmbedding(cfg.mel_bins, rng) if cfg.use_demographics else None
        multiple = cfg.patch_size * 2 ** (cfg.num_stages - 1)
        self.patch_embed = PatchEmbed(cfg.patch_size, cfg.latent_dim, multiple, rng)
        stages, k = [], 0
        for s, (dim, heads, depth) in enumerate(zip(cfg.stage_dims(), cfg.stage_heads, cfg.stage_depths)):
            merge = PatchMerge(dim // 2, rng) if s > 0 else None
            blocks = []
            for _ in range(depth):
                blocks.append(SwinBlock(dim, heads, cfg.window_size, k % 2 == 1, rng, cfg.use_relative_position_bias))
                k += 1
            stages.append(Stage(merge, blocks))
        self.stages = ModuleList(stages)
        final = cfg.stage_dims()[-1]
        self.norm = LayerNorm(final)
        self.head_feature = Linear(final, cfg.feature_dim, rng)
        self.head_out = Linear(cfg.feature_dim, cfg.num_classes, rng)

    def blocks(self) -> list[SwinBlock]:
        return [b for st in self.stages for b in st.blocks]

    def forward(self, spec, demos: list[DemographicInfo] | None = None, keep_stages: bool = False) -> AcousticOutput:
        x = T.as_tensor(spec)
        if x.ndim == 2:
            x = x.reshape(1, *x.shape)
        if x.shape[-1] != self.cfg.mel_bins:
            raise ValueError(f"expected {self.cfg.mel_bins} mel bins, got {x.shape[-1]}")
        if demos is None:
            demos = [UNKNOWN] * x.shape[0]
        g = self.patch_embed(condition_demographics(x, demos, self.demographics))
        outs = []
        for stage in self.stages:
            g = stage(g)
            if keep_stages:
                outs.append(g)
        xp = self.norm(g).mean(axis=(1, 2))
        xa = T.gelu(self.head_feature(xp))
        return AcousticOutput(self.head_out(xa), xa, xp, outs)

    def encode(self, specs: list[np.ndarray], demos: list[DemographicInfo]) -> AcousticOutput:
        """Forward a list of spectrograms that may differ in length, batching equal shapes."""
        groups: dict[tuple, list[int]] = {}
        for i, s in enumerate(specs):
            groups.setdefault(np.shape(s), []).append(i)
        if len(groups) == 1:
            return self.forward(np.stack(specs), demos)
        order, parts = [], []
        for idx in groups.values():
            parts.append(self.forward(np.stack([specs[i] for i in idx]), [demos[i] for i in idx]))
            order.extend(idx)
        inv = np.argsort(order)
        cat = lambda name: T.concat([getattr(p, name) for p in parts], axis=0)[inv]
        return AcousticOutput(cat("logits"), cat("xa"), cat("xp"))


def acoustic_forward(x: MelSpectrogram, d: DemographicInfo, model: AcousticEncoder) -> AcousticOutput:
    """Single-recording forward; outputs keep a leading batch axis of 1."""
    return model(x.frames, [d])
