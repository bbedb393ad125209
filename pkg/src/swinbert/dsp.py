"""Log-mel spectrogram front-end (framing, Hann-windowed power STFT, HTK mel bank)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import DSPConfig


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("waveform must be a non-empty mono sample array")
        if np.max(np.abs(s)) > 1.0:
            raise ValueError("waveform samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # (T, F)
    frame_hop_s: float
    mel_bins: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def num_frames(n_samples: int, win_len: int = 400, hop: int = 160) -> int:
    return (n_samples - win_len) // hop + 1


def hann(win_len: int) -> np.ndarray:
    # periodic Hann, the usual choice for STFT analysis
    n = np.arange(win_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / win_len)


def stft_power(w: Waveform, win_len: int = 400, hop: int = 160, n_fft: int = 512) -> np.ndarray:
    """|rfft(hann * frame)|^2 for each frame, no centering. Shape (T, n_fft//2 + 1)."""
    x = w.samples
    if x.size < win_len:
        raise ValueError(f"waveform has {x.size} samples, shorter than one {win_len}-sample window")
    if n_fft < win_len:
        raise ValueError(f"n_fft {n_fft} smaller than window {win_len}")
    frames = np.lib.stride_tricks.sliding_window_view(x, win_len)[::hop]
    spec = np.fft.rfft(frames * hann(win_len), n=n_fft, axis=-1)
    return spec.real**2 + spec.imag**2


@lru_cache(maxsize=16)
def _filterbank(n_fft: int, sample_rate: int, mel_bins: int, fmin: float, fmax: float) -> np.ndarray:
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError(f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={fmin} fmax={fmax}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bins + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - left) / (center - left)
    down = (right - freqs) / (right - center)
    fb = np.maximum(0.0, np.minimum(up, down))
    empty = np.flatnonzero(fb.sum(axis=1) == 0)
    if empty.size:
        raise ValueError(f"{mel_bins} mel bins too many for n_fft={n_fft}: filters {empty.tolist()} are empty")
    fb.setflags(write=False)
    return fb


def mel_filterbank(n_fft: int, sample_rate: int, mel_bins: int = 64, fmin: float = 50.0, fmax: float = 8000.0) -> np.ndarray:
    """Triangular HTK-mel filters, shape (mel_bins, n_fft//2 + 1)."""
    return _filterbank(int(n_fft), int(sample_rate), int(mel_bins), float(fmin), float(fmax))


def filter_centers(sample_rate: int = 16000, mel_bins: int = 64, fmin: float = 50.0, fmax: float = 8000.0) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bins + 2))[1:-1]


def log_mel(w: Waveform, cfg: DSPConfig | None = None) -> MelSpectrogram:
    cfg = cfg or DSPConfig()
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"expected {cfg.sample_rate} Hz audio, got {w.sample_rate} Hz (no resampling is done)")
    power = stft_power(w, cfg.win_len, cfg.hop, cfg.n_fft)
    fb = mel_filterbank(cfg.n_fft, cfg.sample_rate, cfg.mel_bins, cfg.fmin, cfg.fmax)
    mel = np.log(np.maximum(power @ fb.T, cfg.log_floor))
    return MelSpectrogram(mel, cfg.hop / cfg.sample_rate, cfg.mel_bins)
