"""Hyperparameter records.

Defaults follow the published recipe where one exists. ``desk()`` presets
shrink the models so that training and gradient checks run on a laptop CPU.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

VARIANTS = ("acoustic", "linguistic", "fusion")


@dataclass
class DSPConfig:
    sample_rate: int = 16000
    win_len: int = 400
    hop: int = 160
    n_fft: int = 512
    mel_bins: int = 64
    fmin: float = 50.0
    fmax: float = 8000.0
    log_floor: float = 1e-10


@dataclass
class AcousticConfig:
    mel_bins: int = 64
    patch_size: int = 4
    latent_dim: int = 96
    stage_heads: tuple[int, ...] = (4, 8, 16, 32)
    stage_depths: tuple[int, ...] = (2, 2, 2, 2)
    window_size: int = 8
    feature_dim: int = 1024
    use_relative_position_bias: bool = True
    use_demographics: bool = True
    num_classes: int = 2

    @property
    def shift(self) -> int:
        return self.window_size // 2

    @property
    def num_stages(self) -> int:
        return len(self.stage_depths)

    def stage_dims(self) -> list[int]:
        return [self.latent_dim * 2**s for s in range(self.num_stages)]

    @classmethod
    def desk(cls, **kw) -> "AcousticConfig":
        base = dict(latent_dim=8, stage_heads=(1, 2, 2, 4), stage_depths=(1, 1, 1, 1), window_size=4)
        base.update(kw)
        return cls(**base)

    def problems(self) -> list[str]:
        out = []
        if self.window_size < 1 or self.window_size % 2:
            out.append(f"window_size must be a positive even number, got {self.window_size}")
        if len(self.stage_heads) != len(self.stage_depths) or not self.stage_depths:
            out.append("stage_heads and stage_depths must be non-empty and equally long")
        for s, (c, h) in enumerate(zip(self.stage_dims(), self.stage_heads)):
            if c % h:
                out.append(f"stage {s + 1}: {c} channels not divisible by {h} heads")
        return out


@dataclass
class LinguisticConfig:
    char_vocab: int = 32
    char_channels: tuple[int, int] = (512, 128)
    char_kernel: int = 3
    char_feature_dim: int = 128
    char_len_max: int = 3000
    word_layers: int = 12
    word_dim: int = 768
    word_heads: int = 12
    ffn_mult: int = 4
    word_len_max: int = 512
    pooling: str = "mean"
    use_char_branch: bool = True

    @classmethod
    def desk(cls, **kw) -> "LinguisticConfig":
        base = dict(char_channels=(16, 8), char_feature_dim=16, char_len_max=256, word_layers=2, word_dim=32, word_heads=4)
        base.update(kw)
        return cls(**base)

    def problems(self) -> list[str]:
        out = []
        if self.word_dim % self.word_heads:
            out.append(f"word_dim {self.word_dim} not divisible by word_heads {self.word_heads}")
        if self.pooling not in ("mean", "cls"):
            out.append(f"pooling must be 'mean' or 'cls', got {self.pooling!r}")
        return out


@dataclass
class FusionConfig:
    rows: int = 32
    conv_channels: tuple[int, int] = (16, 16)
    kernel: int = 3
    summary_dim: int = 64
    segment_s: float = 10.0
    overlap_s: float = 0.0
    min_segment_s: float = 1.0
    finetune_acoustic: bool = False

    @classmethod
    def desk(cls, **kw) -> "FusionConfig":
        base = dict(summary_dim=16)
        base.update(kw)
        return cls(**base)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.95
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 12
    seed: int = 0
    clip_norm: float | None = 1.0

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "TrainConfig":
        """Acoustic training uses lr 1e-4; the text and fusion heads train from scratch at 1e-3."""
        base = dict(lr=1e-4 if variant == "acoustic" else 1e-3)
        base.update(kw)
        return cls(**base)

    def problems(self) -> list[str]:
        out = []
        if not self.lr >= 0:
            out.append(f"lr must be non-negative, got {self.lr}")
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            out.append(f"epochs must be >= 1, got {self.epochs}")
        return out


@dataclass
class ModelConfig:
    variant: str = "fusion"
    acoustic: AcousticConfig = field(default_factory=AcousticConfig.desk)
    linguistic: LinguisticConfig = field(default_factory=LinguisticConfig.desk)
    fusion: FusionConfig = field(default_factory=FusionConfig.desk)
    dsp: DSPConfig = field(default_factory=DSPConfig)

    @classmethod
    def for_variant(cls, variant: str, preset: str = "desk", demographics: bool = True, char_branch: bool | None = None):
        """Build a config for one ablation row.

        Fusion defaults to demographics on and no char branch; linguistic
        defaults to the char branch on.
        """
        if preset == "desk":
            ac, lc, fc = AcousticConfig.desk(), LinguisticConfig.desk(), FusionConfig.desk()
        elif preset == "full":
            ac, lc, fc = AcousticConfig(), LinguisticConfig(), FusionConfig()
        else:
            raise ValueError(f"unknown preset {preset!r}")
        if char_branch is None:
            char_branch = variant == "linguistic"
        ac.use_demographics = demographics
        lc.use_char_branch = char_branch
        return cls(variant=variant, acoustic=ac, linguistic=lc, fusion=fc)

    def problems(self) -> list[str]:
        out = []
        if self.variant not in VARIANTS:
            out.append(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.acoustic.mel_bins != self.dsp.mel_bins:
            out.append(f"acoustic.mel_bins {self.acoustic.mel_bins} != dsp.mel_bins {self.dsp.mel_bins}")
        return out + self.acoustic.problems() + self.linguistic.problems()


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    manifest: str | None = None
    split: str = "train"
    acoustic_checkpoint: str | None = None

    def problems(self) -> list[str]:
        out = self.model.problems() + self.train.problems()
        if self.manifest is not None and not Path(self.manifest).exists():
            out.append(f"manifest not found: {self.manifest}")
        if self.acoustic_checkpoint is not None and not Path(self.acoustic_checkpoint).exists():
            out.append(f"acoustic checkpoint not found: {self.acoustic_checkpoint}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        return _build(cls, d)


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _build(cls, d: dict[str, Any]):
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in d.items():
        if key not in fields:
            raise ValueError(f"unknown config key {key!r} for {cls.__name__}")
        sub = _SUBCONFIGS.get((cls.__name__, key))
        if sub is not None and isinstance(value, dict):
            f = fields[key]
            default = f.default_factory() if f.default_factory is not dataclasses.MISSING else sub()
            value = _build(sub, deep_merge(dataclasses.asdict(default), value))
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


_SUBCONFIGS = {
    ("RunConfig", "model"): ModelConfig,
    ("RunConfig", "train"): TrainConfig,
    ("ModelConfig", "acoustic"): AcousticConfig,
    ("ModelConfig", "linguistic"): LinguisticConfig,
    ("ModelConfig", "fusion"): FusionConfig,
    ("ModelConfig", "dsp"): DSPConfig,
}


def load_run_config(path: str | Path) -> RunConfig:
    return RunConfig.from_dict(json.loads(Path(path).read_text()))


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
