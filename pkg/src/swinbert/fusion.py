"""Fixed-size acoustic feature matrices and the fusion classifier head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .acoustic import AcousticEncoder, DemographicInfo
from .config import DSPConfig, FusionConfig, LinguisticConfig
from .dsp import Waveform, log_mel
from .linguistic import CHARS, CharBranch, Vocabulary, WordEncoder, char_encode, char_transcript, tokenize
from .nn import Conv1d, Linear, Module
from .tensor import Tensor


@dataclass(frozen=True)
class AcousticFeatureMatrix:
    matrix: np.ndarray  # (rows, feature_dim); rows >= r are zero
    rows: int  # number of real segments r

    def __post_init__(self):
        if np.any(self.matrix[self.rows :]):
            raise ValueError("rows beyond the real segment count must be zero")


def segment_waveform(w: Waveform, segment_s: float = 10.0, overlap_s: float = 0.0, min_segment_s: float = 1.0) -> list[Waveform]:
    """Consecutive windows of ``segment_s``; a trailing partial window is kept if at least ``min_segment_s`` long."""
    if w.duration < min_segment_s:
        raise ValueError(f"recording is {w.duration:.3f}s, shorter than the {min_segment_s}s minimum")
    seg = int(round(segment_s * w.sample_rate))
    step = seg - int(round(overlap_s * w.sample_rate))
    if step <= 0:
        raise ValueError("overlap must be shorter than the segment")
    min_len = int(round(min_segment_s * w.sample_rate))
    out = []
    for start in range(0, w.samples.size, step):
        chunk = w.samples[start : start + seg]
        if chunk.size < seg and chunk.size < min_len:
            break
        out.append(Waveform(chunk, w.sample_rate))
        if start + seg >= w.samples.size:
            break
    return out


def pad_rows(m: np.ndarray, rows: int = 32) -> np.ndarray:
    """Zero-pad or truncate to exactly ``rows`` rows; a no-op on an already-sized matrix."""
    m = np.asarray(m)
    if m.shape[0] >= rows:
        return m[:rows]
    return np.concatenate([m, np.zeros((rows - m.shape[0],) + m.shape[1:], dtype=m.dtype)])


def segment_spectrograms(w: Waveform, dsp: DSPConfig, cfg: FusionConfig) -> list[np.ndarray]:
    segs = segment_waveform(w, cfg.segment_s, cfg.overlap_s, cfg.min_segment_s)[: cfg.rows]
    return [log_mel(s, dsp).frames for s in segs]


def build_acoustic_matrix(
    w: Waveform,
    d: DemographicInfo,
    model: AcousticEncoder,
    dsp: DSPConfig | None = None,
    cfg: FusionConfig | None = None,
) -> AcousticFeatureMatrix:
    """Stack per-segment acoustic features in temporal order, padded/truncated to ``cfg.rows``.

    Every segment is forwarded on its own so that row k is bit-identical to a
    standalone forward of segment k.
    """
    dsp, cfg = dsp or DSPConfig(), cfg or FusionConfig()
    specs = segment_spectrograms(w, dsp, cfg)
    with T.no_grad():
        rows = [model(s, [d]).xa.data[0] for s in specs]
    return AcousticFeatureMatrix(pad_rows(np.stack(rows), cfg.rows), len(rows))


class AcousticBranch(Module):
    """conv(rows -> c1) -> ReLU -> conv(c1 -> c2) -> ReLU -> global max -> linear."""

    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        c1, c2 = cfg.conv_channels
        pad = cfg.kernel // 2
        self.conv1 = Conv1d(cfg.rows, c1, cfg.kernel, rng, padding=pad)
        self.conv2 = Conv1d(c1, c2, cfg.kernel, rng, padding=pad)
        self.proj = Linear(c2, cfg.summary_dim, rng)

    def forward(self, m) -> Tensor:
        """(B, rows, feature_dim) -> (B, summary_dim)."""
        x = T.relu(self.conv1(T.as_tensor(m)))
        x = T.relu(self.conv2(x))
        return self.proj(x.max(axis=-1))


class FusionHead(Module):
    def __init__(self, fcfg: FusionConfig, lcfg: LinguisticConfig, vocab: Vocabulary, rng: np.random.Generator):
        self.fcfg, self.lcfg = fcfg, lcfg
        self._vocab = vocab
        self.acoustic_branch = AcousticBranch(fcfg, rng)
        self.word = WordEncoder(lcfg, len(vocab), rng)
        self.char = CharBranch(lcfg, rng) if lcfg.use_char_branch else None
        width = fcfg.summary_dim + lcfg.word_dim + (lcfg.char_feature_dim if self.char is not None else 0)
        self.classifier = Linear(width, 2, rng)

    def features(self, matrices, word_texts: list[str], char_texts: list[str] | None = None) -> tuple[Tensor, Tensor]:
        """(word feature, fused classifier input)."""
        m = T.as_tensor(matrices)
        if m.ndim == 2:
            m = m.reshape(1, *m.shape)
        if m.shape[1] != self.fcfg.rows:
            raise ValueError(f"acoustic matrix must have {self.fcfg.rows} rows, got {m.shape[1]}")
        seqs = [tokenize(t, self._vocab, self.lcfg.word_len_max) for t in word_texts]
        wf = self.word.encode(seqs)
        parts = [self.acoustic_branch(m), wf]
        if self.char is not None:
            if char_texts is None:
                char_texts = [char_transcript(t) for t in word_texts]
            mats = np.stack([char_encode(t, CHARS, self.lcfg.char_len_max).matrix for t in char_texts])
            parts.append(self.char(mats))
        return wf, T.concat(parts, axis=-1)

    def forward(self, matrices, word_texts: list[str], char_texts: list[str] | None = None) -> Tensor:
        return self.classifier(self.features(matrices, word_texts, char_texts)[1])


def fusion_forward(m: AcousticFeatureMatrix, text_word: str, head: FusionHead) -> Tensor:
    return head(m.matrix, [text_word])
