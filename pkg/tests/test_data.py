import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swinbert.acoustic import AGE_BUCKETS, UNKNOWN
from swinbert.data import (
    MANIFEST_HEADER,
    ManifestError,
    Record,
    SynthSpec,
    generate_synthetic,
    load_examples,
    load_manifest,
    manifest_text,
    probe_separable,
    read_wav,
    write_manifest,
    write_wav,
)
from swinbert.dsp import Waveform

HEADER = ",".join(MANIFEST_HEADER)


def make_files(root, ids):
    for rid in ids:
        write_wav(root / f"{rid}.wav", Waveform(np.zeros(16000)))
        (root / f"{rid}.txt").write_text("the cookie jar\n")


def test_load_well_formed(tmp_path):
    make_files(tmp_path, "abcd")
    rows = [
        "a,a.wav,a.txt,,71,F,AD,train",
        "b,b.wav,b.txt,b.txt,,M,HC,train",
        "c,c.wav,c.txt,,64,,AD,test",
        "d,d.wav,d.txt,,,,hc,",
    ]
    (tmp_path / "m.csv").write_text("\n".join([HEADER, *rows]) + "\n")
    m = load_manifest(tmp_path / "m.csv")
    assert len(m) == 4 and [r.id for r in m.records] == list("abcd")
    assert m.records[0].demographics.age_bucket == 7
    assert m.records[1].demographics.age_bucket == AGE_BUCKETS
    assert m.records[3].demographics == UNKNOWN
    assert m.records[3].label == "HC" and m.records[3].split == "train"
    assert [r.id for r in m.split("test")] == ["c"]


def test_duplicate_id_named(tmp_path):
    make_files(tmp_path, "a")
    (tmp_path / "m.csv").write_text(f"{HEADER}\nspk7,a.wav,a.txt,,,,AD,train\nspk7,a.wav,a.txt,,,,HC,train\n")
    with pytest.raises(ManifestError, match="spk7"):
        load_manifest(tmp_path / "m.csv")


@pytest.mark.parametrize(
    "row,msg",
    [
        ("a,a.wav,a.txt,,,,MCI,train", "unknown label"),
        ("a,missing.wav,a.txt,,,,AD,train", "missing file"),
        ("a,a.wav,a.txt,,old,,AD,train", "line 2"),
        ("a,a.wav,a.txt,,150,,AD,train", "age"),
    ],
)
def test_bad_rows(tmp_path, row, msg):
    make_files(tmp_path, "a")
    (tmp_path / "m.csv").write_text(f"{HEADER}\n{row}\n")
    with pytest.raises(ValueError, match=msg):
        load_manifest(tmp_path / "m.csv")


def test_bad_header(tmp_path):
    (tmp_path / "m.csv").write_text("id,wav,label\n")
    with pytest.raises(ManifestError, match="header"):
        load_manifest(tmp_path / "m.csv")


_field = st.text(st.characters(whitelist_categories=("L", "N"), whitelist_characters=" _-./,\"'"), min_size=1, max_size=12).map(str.strip).filter(bool)
_record = st.builds(
    Record,
    id=_field,
    wav=_field,
    word_txt=_field,
    char_txt=st.none() | _field,
    age=st.none() | st.integers(0, 120),
    gender=st.sampled_from([None, "M", "F", "UNKNOWN"]),
    label=st.sampled_from(["AD", "HC"]),
    split=st.sampled_from(["train", "test"]),
)


@given(st.lists(_record, max_size=6, unique_by=lambda r: r.id))
def test_manifest_round_trip(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("m") / "manifest.csv"
    write_manifest(records, path)
    back = load_manifest(path, check_files=False)
    assert back.records == records
    assert manifest_text(back.records) == path.read_text()


# -- WAV -----------------------------------------------------------------


def test_silence(tmp_path):
    write_wav(tmp_path / "s.wav", Waveform(np.zeros(16000)))
    w = read_wav(tmp_path / "s.wav")
    assert w.samples.shape == (16000,) and not w.samples.any()


def test_max_amplitude_scaling(tmp_path):
    with wave.open(str(tmp_path / "x.wav"), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(16000)
        fh.writeframes(np.array([32767, -32768], "<i2").tobytes())
    s = read_wav(tmp_path / "x.wav").samples
    assert s[0] == pytest.approx(0.99997, abs=1e-5) and s[1] == -1.0


def test_sine_round_trip(tmp_path):
    t = np.arange(16000) / 16000
    x = 0.8 * np.sin(2 * np.pi * 440 * t)
    write_wav(tmp_path / "s.wav", Waveform(x))
    assert np.max(np.abs(read_wav(tmp_path / "s.wav").samples - x)) <= 1 / 32768


@given(st.integers(0, 2**32 - 1), st.integers(1, 3000))
def test_wav_round_trip_property(tmp_path_factory, seed, n):
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    path = tmp_path_factory.mktemp("w") / "r.wav"
    write_wav(path, Waveform(x))
    assert np.max(np.abs(read_wav(path).samples - x)) <= 1 / 32768


@pytest.mark.parametrize(
    "channels,width,rate,msg",
    [(2, 2, 16000, "mono"), (1, 1, 16000, "16-bit"), (1, 2, 8000, "sample rate")],
)
def test_wav_rejections(tmp_path, channels, width, rate, msg):
    with wave.open(str(tmp_path / "x.wav"), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(width)
        fh.setframerate(rate)
        fh.writeframes(b"\0" * (channels * width * 100))
    with pytest.raises(ValueError, match=msg):
        read_wav(tmp_path / "x.wav")


def test_not_a_wav(tmp_path):
    (tmp_path / "x.wav").write_bytes(b"hello world")
    with pytest.raises(ValueError, match="RIFF"):
        read_wav(tmp_path / "x.wav")


# -- synthetic corpus ----------------------------------------------------


def test_synthetic_balanced(corpus):
    m = load_manifest(corpus / "manifest.csv")
    assert len(m) == 16
    assert sum(r.label == "AD" for r in m.records) == 8
    assert all(r.split == "train" for r in m.records)


def test_synthetic_deterministic(tmp_path):
    spec = SynthSpec(n_per_class=3, seed=11)
    generate_synthetic(spec, tmp_path / "a")
    generate_synthetic(spec, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 3 * 6 + 1
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synthetic_test_split(tmp_path):
    m = generate_synthetic(SynthSpec(n_per_class=4, seed=1, test_fraction=0.25), tmp_path)
    assert [r.id for r in m.split("test")] == ["ad003", "hc003"]


def test_synthetic_text_classes(corpus):
    m = load_manifest(corpus / "manifest.csv")
    fillers = {"uh", "um", "er", "hmm"}
    for r in m.records:
        words = set(m.resolve(r.word_txt).read_text().split())
        assert bool(words & fillers) == (r.label == "AD")


def test_probe_rejects_unseparable(rng):
    x = rng.normal(size=(40, 2))
    y = np.arange(40) % 2
    assert probe_separable(x + 10.0 * y[:, None], y)
    assert not probe_separable(x, y)


def test_load_examples(corpus):
    exs = load_examples(load_manifest(corpus / "manifest.csv"))
    assert len(exs) == 16
    ex = exs[0]
    assert ex.spectrogram.shape == (98, 64) and len(ex.segments) == 1
    assert ex.char_text == ex.word_text.upper().replace(" ", "|")
