"""Finite-difference gradient checks of every trainable component at desk scale (float64)."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import tensor as T
from .acoustic import AcousticEncoder, DemographicInfo, PatchMerge, SwinBlock
from .config import AcousticConfig, FusionConfig, LinguisticConfig
from .fusion import FusionHead
from .linguistic import CharBranch, LinguisticModel, Vocabulary, WordEncoder, pad_batch, tokenize
from .nn import Module
from .tensor import Tensor

TOLERANCE = 1e-4
_VOCAB = Vocabulary.build(["the boy takes a cookie from the jar", "uh um the sink overflows"])


def randomize(module: Module, rng: np.random.Generator, scale: float = 0.3) -> None:
    """Replace all parameters with dense random values so no bias sits exactly at a ReLU kink."""
    for p in module.parameters():
        p.data = p.data + rng.normal(0.0, scale, size=p.shape)


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    w = rng.normal(size=out.shape)
    return lambda y: (y * w).sum()


def _check(build: Callable[[], Tensor], inputs: list[Tensor], rng: np.random.Generator, max_elements: int = 40) -> float:
    reduce = _weighted_sum(build(), rng)
    return T.finite_diff_gradcheck(lambda: reduce(build()), inputs, max_elements=max_elements, rng=rng)


def check_swmha_block(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    blk = SwinBlock(8, 2, 2, True, rng)
    randomize(blk, rng)
    x = T.parameter(rng.normal(size=(1, 4, 4, 8)))
    return _check(lambda: blk(x), [x] + blk.parameters(), rng)


def check_patch_merge(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    pm = PatchMerge(4, rng)
    randomize(pm, rng)
    x = T.parameter(rng.normal(size=(1, 4, 4, 4)))
    return _check(lambda: pm(x), [x] + pm.parameters(), rng)


def check_acoustic_forward(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    cfg = AcousticConfig.desk(mel_bins=16, window_size=2, feature_dim=32)
    model = AcousticEncoder(cfg, rng)
    randomize(model, rng, 0.1)
    x = T.parameter(rng.normal(size=(1, 16, 16)))
    demos = [DemographicInfo(72, "F")]
    return _check(lambda: model(x, demos).logits, [x] + model.parameters(), rng, max_elements=20)


def check_char_branch_forward(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    cfg = LinguisticConfig.desk(char_len_max=24)
    br = CharBranch(cfg, rng)
    randomize(br, rng)
    x = T.parameter(rng.normal(size=(1, cfg.char_len_max, cfg.char_vocab)))
    return _check(lambda: br(x), [x] + br.parameters(), rng)


def check_word_encoder_forward(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    cfg = LinguisticConfig.desk(word_layers=1, word_dim=16, word_heads=2)
    enc = WordEncoder(cfg, len(_VOCAB), rng)
    randomize(enc, rng, 0.1)
    ids, mask = pad_batch([tokenize("the boy uh takes a cookie", _VOCAB), tokenize("the sink", _VOCAB)])
    return _check(lambda: enc(ids, mask), enc.parameters(), rng)


def check_linguistic_forward(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    cfg = LinguisticConfig.desk(word_layers=1, word_dim=16, word_heads=2, char_len_max=24)
    model = LinguisticModel(cfg, _VOCAB, rng)
    randomize(model, rng, 0.1)
    words = ["the boy takes a cookie", "um the jar"]
    return _check(lambda: model(words), model.parameters(), rng, max_elements=20)


def check_fusion_forward(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    lcfg = LinguisticConfig.desk(word_layers=1, word_dim=16, word_heads=2, use_char_branch=False)
    head = FusionHead(FusionConfig.desk(), lcfg, _VOCAB, rng)
    randomize(head, rng, 0.1)
    m = T.parameter(rng.normal(size=(1, 32, 1024)))
    return _check(lambda: head(m, ["the boy takes a cookie"]), [m] + head.parameters(), rng, max_elements=20)


SUITE: dict[str, Callable[[], float]] = {
    "swmha_block": check_swmha_block,
    "patch_merge": check_patch_merge,
    "acoustic_forward": check_acoustic_forward,
    "char_branch_forward": check_char_branch_forward,
    "word_encoder_forward": check_word_encoder_forward,
    "linguistic_forward": check_linguistic_forward,
    "fusion_forward": check_fusion_forward,
}


def run_suite(seed: int = 0) -> dict[str, tuple[float, float]]:
    """Name -> (max relative error, seconds)."""
    if T.get_default_dtype() is not np.float64:
        raise RuntimeError("gradient checks need float64 as the default dtype")
    out = {}
    for name, fn in SUITE.items():
        t0 = time.perf_counter()
        err = fn(seed)
        out[name] = (err, time.perf_counter() - t0)
    return out
