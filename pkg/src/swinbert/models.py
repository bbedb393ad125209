"""Model variants covering every ablation row: acoustic-only, linguistic (+/- chars), fusion (+/- demographics)."""

from __future__ import annotations

import warnings

import numpy as np

from . import tensor as T
from .acoustic import AcousticEncoder
from .config import ModelConfig
from .data import Example
from .fusion import FusionHead, pad_rows
from .linguistic import LinguisticModel, Vocabulary
from .nn import Module
from .tensor import Tensor

FEATURES = ("xp", "xa", "word", "fused")


class SwinBert(Module):
    """Container whose attribute names give the checkpoint prefixes ``acoustic``, ``linguistic``, ``fusion``."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary | None, rng: np.random.Generator):
        problems = cfg.problems()
        if problems:
            raise ValueError("; ".join(problems))
        if cfg.variant != "acoustic" and vocab is None:
            raise ValueError(f"variant {cfg.variant!r} needs a word vocabulary")
        self.cfg = cfg
        self._vocab = vocab
        self.acoustic = AcousticEncoder(cfg.acoustic, rng) if cfg.variant in ("acoustic", "fusion") else None
        self.linguistic = LinguisticModel(cfg.linguistic, vocab, rng) if cfg.variant == "linguistic" else None
        self.fusion = FusionHead(cfg.fusion, cfg.linguistic, vocab, rng) if cfg.variant == "fusion" else None

    @property
    def variant(self) -> str:
        return self.cfg.variant

    @property
    def vocab(self) -> Vocabulary | None:
        return self._vocab

    def trainable(self) -> list[tuple[str, Tensor]]:
        """Parameters the optimizer updates; the acoustic encoder is frozen in fusion unless fine-tuning."""
        frozen = self.variant == "fusion" and not self.cfg.fusion.finetune_acoustic
        return [(n, p) for n, p in self.named_parameters() if not (frozen and n.startswith("acoustic."))]

    def acoustic_matrices(self, batch: list[Example]):
        """(B, rows, feature_dim) acoustic matrices: cached arrays, or a differentiable build when fine-tuning."""
        if not self.cfg.fusion.finetune_acoustic:
            missing = [ex.id for ex in batch if ex.acoustic_matrix is None]
            if missing:
                raise ValueError(f"acoustic matrices not built for {missing}; call attach_acoustic_matrices first")
            return np.stack([ex.acoustic_matrix for ex in batch])
        rows = self.cfg.fusion.rows
        mats = []
        for ex in batch:
            xa = self.acoustic.encode(ex.segments[:rows], [ex.demographics] * len(ex.segments[:rows])).xa
            mats.append(T.pad(xa, [(0, rows - xa.shape[0]), (0, 0)]))
        return T.stack(mats)

    def forward(self, batch: list[Example]) -> Tensor:
        return self.features(batch, "logits")

    def features(self, batch: list[Example], which: str) -> Tensor:
        if which not in FEATURES + ("logits",):
            raise ValueError(f"unknown feature {which!r}; choose from {FEATURES}")
        if which in ("xp", "xa") or self.variant == "acoustic":
            if self.acoustic is None:
                raise ValueError(f"feature {which!r} needs an acoustic encoder (variant {self.variant})")
            if which == "word":
                raise ValueError("the acoustic-only variant has no word feature")
            out = self.acoustic.encode([ex.spectrogram for ex in batch], [ex.demographics for ex in batch])
            return {"xp": out.xp, "xa": out.xa, "fused": out.xa, "logits": out.logits}[which]
        words = [ex.word_text for ex in batch]
        chars = [ex.char_text for ex in batch]
        if self.variant == "linguistic":
            if which == "logits":
                return self.linguistic(words, chars)
            wf, fused = self.linguistic.features(words, chars)
        else:
            mats = self.acoustic_matrices(batch)
            if which == "logits":
                return self.fusion(mats, words, chars)
            wf, fused = self.fusion.features(mats, words, chars)
        return wf if which == "word" else fused


def fusion_mode_select(cfg: ModelConfig, vocab: Vocabulary | None, rng: np.random.Generator | int = 0) -> SwinBert:
    """Build the requested variant. A fusion model with the char branch is allowed but warned about."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if cfg.variant == "fusion" and cfg.linguistic.use_char_branch:
        warnings.warn("fusion with the character branch is a non-default configuration", stacklevel=2)
    return SwinBert(cfg, vocab, rng)


def attach_acoustic_matrices(model: SwinBert, examples: list[Example]) -> None:
    """Fill ``acoustic_matrix`` of each example from its segments using the model's (frozen) acoustic encoder."""
    rows = model.cfg.fusion.rows
    with T.no_grad():
        for ex in examples:
            segs = ex.segments[:rows]
            xa = np.stack([model.acoustic(s, [ex.demographics]).xa.data[0] for s in segs])
            ex.acoustic_matrix = pad_rows(xa, rows)
