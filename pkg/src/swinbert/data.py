"""Manifests, WAV I/O, featurization into training examples, and the synthetic corpus."""

from __future__ import annotations

import csv
import io
import logging
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acoustic import DemographicInfo
from .checkpoint import atomic_write_bytes
from .config import DSPConfig, FusionConfig
from .dsp import Waveform, log_mel
from .linguistic import char_transcript

log = logging.getLogger(__name__)

MANIFEST_HEADER = ("id", "wav", "word_txt", "char_txt", "age", "gender", "label", "split")
LABELS = {"HC": 0, "AD": 1}
LABEL_NAMES = {v: k for k, v in LABELS.items()}


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    id: str
    wav: str
    word_txt: str
    char_txt: str | None
    age: int | None
    gender: str | None
    label: str
    split: str

    @property
    def demographics(self) -> DemographicInfo:
        return DemographicInfo(self.age, self.gender or "UNKNOWN")

    @property
    def label_id(self) -> int:
        return LABELS[self.label]


@dataclass
class Manifest:
    records: list[Record]
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def split(self, name: str) -> list[Record]:
        return [r for r in self.records if r.split == name]


def _parse_row(row: dict[str, str], lineno: int) -> Record:
    label = row["label"].strip().upper()
    if label not in LABELS:
        raise ManifestError(f"line {lineno}: unknown label {row['label']!r} (expected AD or HC)")
    age = row["age"].strip()
    gender = row["gender"].strip().upper() or None
    try:
        return Record(
            id=row["id"].strip(),
            wav=row["wav"].strip(),
            word_txt=row["word_txt"].strip(),
            char_txt=row["char_txt"].strip() or None,
            age=int(age) if age else None,
            gender=gender,
            label=label,
            split=row["split"].strip() or "train",
        )
    except ValueError as exc:
        raise ManifestError(f"line {lineno}: {exc}") from None


def load_manifest(path: str | Path, check_files: bool = True) -> Manifest:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
            raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}, got {reader.fieldnames}")
        records = [_parse_row(row, i) for i, row in enumerate(reader, start=2)]
    seen: set[str] = set()
    for r in records:
        if r.id in seen:
            raise ManifestError(f"duplicate recording id {r.id!r}")
        seen.add(r.id)
        r.demographics  # validates age/gender ranges
    m = Manifest(records, path.parent)
    if check_files:
        for r in records:
            for rel in (r.wav, r.word_txt, r.char_txt):
                if rel is not None and not m.resolve(rel).exists():
                    raise ManifestError(f"record {r.id}: missing file {m.resolve(rel)}")
    return m


def manifest_text(records: list[Record]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for r in records:
        w.writerow([r.id, r.wav, r.word_txt, r.char_txt or "", "" if r.age is None else r.age, r.gender or "", r.label, r.split])
    return buf.getvalue()


def write_manifest(m: Manifest | list[Record], path: str | Path) -> None:
    records = m.records if isinstance(m, Manifest) else m
    atomic_write_bytes(path, manifest_text(records).encode("utf-8"))


# -- WAV -----------------------------------------------------------------


def read_wav(path: str | Path, sample_rate: int = 16000) -> Waveform:
    """Read RIFF PCM16 mono audio at ``sample_rate``; anything else is rejected."""
    try:
        with wave.open(str(path), "rb") as fh:
            ch, width, rate, n = fh.getnchannels(), fh.getsampwidth(), fh.getframerate(), fh.getnframes()
            if fh.getcomptype() != "NONE":
                raise ValueError(f"{path}: compressed WAV ({fh.getcompname()}) is not supported; need PCM16")
            raw = fh.readframes(n)
    except wave.Error as exc:
        raise ValueError(f"{path}: not a RIFF/PCM WAV file ({exc})") from None
    if width != 2:
        raise ValueError(f"{path}: {8 * width}-bit samples; only 16-bit PCM is supported")
    if ch != 1:
        raise ValueError(f"{path}: {ch} channels; only mono is supported")
    if rate != sample_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz; expected {sample_rate} Hz")
    if n == 0:
        raise ValueError(f"{path}: no audio frames")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path: str | Path, w: Waveform) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(to_pcm16(w.samples).tobytes())


# -- featurization -------------------------------------------------------


@dataclass
class Example:
    id: str
    label: int
    demographics: DemographicInfo
    word_text: str
    char_text: str
    spectrogram: np.ndarray | None = None  # (T, F) of the whole recording
    segments: list[np.ndarray] = field(default_factory=list)  # per-segment log-mels
    acoustic_matrix: np.ndarray | None = None  # (rows, feature_dim)


def load_examples(
    manifest: Manifest,
    split: str | None = "train",
    dsp: DSPConfig | None = None,
    fusion: FusionConfig | None = None,
) -> list[Example]:
    """Read audio and transcripts of one split into examples (acoustic matrices not yet built)."""
    from .fusion import segment_spectrograms

    dsp, fusion = dsp or DSPConfig(), fusion or FusionConfig()
    out = []
    for r in manifest.records:
        if split is not None and r.split != split:
            continue
        w = read_wav(manifest.resolve(r.wav), dsp.sample_rate)
        words = manifest.resolve(r.word_txt).read_text(encoding="utf-8").strip()
        chars = manifest.resolve(r.char_txt).read_text(encoding="utf-8").strip() if r.char_txt else char_transcript(words)
        out.append(
            Example(
                id=r.id,
                label=r.label_id,
                demographics=r.demographics,
                word_text=words,
                char_text=chars,
                spectrogram=log_mel(w, dsp).frames,
                segments=segment_spectrograms(w, dsp, fusion),
            )
        )
    return out


# -- synthetic corpus ----------------------------------------------------

_SCENE = (
    "the boy is standing on a stool reaching for the cookie jar",
    "the stool is tipping over",
    "the girl is asking for a cookie",
    "the mother is drying dishes at the sink",
    "the water is overflowing from the sink",
    "the window is open and there are curtains",
    "there are cups and a plate on the counter",
)
_FILLERS = ("uh", "um", "er", "hmm")


@dataclass
class SynthSpec:
    n_per_class: int = 8
    duration_s: float = 1.0
    sample_rate: int = 16000
    seed: int = 0
    ad_band: tuple[float, float] = (150.0, 600.0)
    hc_band: tuple[float, float] = (2000.0, 5000.0)
    test_fraction: float = 0.0


def _tone_mixture(rng: np.random.Generator, band: tuple[float, float], n: int, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    freqs = rng.uniform(*band, size=3)
    amps = rng.uniform(0.1, 0.25, size=3)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    x = sum(a * np.sin(2 * np.pi * f * t + p) for a, f, p in zip(amps, freqs, phases))
    x = x + rng.normal(0.0, 0.005, size=n)
    return np.clip(x, -0.99, 0.99)


def _transcript(rng: np.random.Generator, fluent: bool) -> str:
    picks = rng.choice(len(_SCENE), size=3, replace=False)
    words: list[str] = []
    for i in picks:
        for wd in _SCENE[i].split():
            if not fluent and rng.random() < 0.35:
                words.append(_FILLERS[rng.integers(len(_FILLERS))])
            words.append(wd)
    return " ".join(words)


def probe_separable(features: np.ndarray, labels: np.ndarray) -> bool:
    """Linear probe along the class-mean difference, thresholded at the midpoint.

    A least-squares fit would interpolate any labelling once features outnumber
    rows, so the probe has no free parameters beyond the two class means.
    """
    labels = np.asarray(labels)
    mu1, mu0 = features[labels == 1].mean(axis=0), features[labels == 0].mean(axis=0)
    score = (features - 0.5 * (mu0 + mu1)) @ (mu1 - mu0)
    return bool(np.all((score > 0) == (labels == 1)))


def generate_synthetic(spec: SynthSpec, out_dir: str | Path, dsp: DSPConfig | None = None) -> Manifest:
    """Write WAVs, transcripts and ``manifest.csv``; identical output for identical ``spec``.

    Class AD gets low tones and disfluent text, class HC high tones and fluent text.
    """
    dsp = dsp or DSPConfig()
    out = Path(out_dir)
    for sub in ("wav", "txt"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.sample_rate))
    records, feats = [], []
    n_test = int(round(spec.test_fraction * spec.n_per_class))
    for label in ("AD", "HC"):
        band = spec.ad_band if label == "AD" else spec.hc_band
        for i in range(spec.n_per_class):
            rid = f"{label.lower()}{i:03d}"
            w = Waveform(to_pcm16(_tone_mixture(rng, band, n, spec.sample_rate)) / 32768.0, spec.sample_rate)
            write_wav(out / "wav" / f"{rid}.wav", w)
            words = _transcript(rng, fluent=label == "HC")
            (out / "txt" / f"{rid}.words.txt").write_text(words + "\n", encoding="utf-8")
            (out / "txt" / f"{rid}.chars.txt").write_text(char_transcript(words) + "\n", encoding="utf-8")
            age = int(rng.integers(55, 86)) if rng.random() > 0.1 else None
            gender = ("M", "F")[int(rng.integers(2))] if rng.random() > 0.1 else None
            split = "test" if i >= spec.n_per_class - n_test else "train"
            records.append(Record(rid, f"wav/{rid}.wav", f"txt/{rid}.words.txt", f"txt/{rid}.chars.txt", age, gender, label, split))
            feats.append(log_mel(w, dsp).frames.mean(axis=0))
    labels = np.array([LABELS[r.label] for r in records])
    if not probe_separable(np.stack(feats), labels):
        raise RuntimeError("synthetic corpus failed the linear-probe separability check; change the seed or bands")
    write_manifest(records, out / "manifest.csv")
    log.info("wrote %d synthetic recordings to %s", len(records), out)
    return Manifest(records, out)
