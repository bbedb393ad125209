import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swinbert.acoustic import AcousticEncoder, DemographicInfo
from swinbert.config import AcousticConfig, DSPConfig, FusionConfig, LinguisticConfig, ModelConfig
from swinbert.dsp import Waveform, log_mel
from swinbert.fusion import (
    AcousticFeatureMatrix,
    FusionHead,
    build_acoustic_matrix,
    fusion_forward,
    pad_rows,
    segment_waveform,
)
from swinbert.linguistic import Vocabulary, tokenize
from swinbert.models import fusion_mode_select
from swinbert.tensor import Tensor

SR = 16000
VOCAB = Vocabulary.build(["the cookie jar is on the shelf", "uh um the boy"])
DEMO = DemographicInfo(68, "F")


def noise(seconds, seed=0):
    return Waveform(np.random.default_rng(seed).uniform(-0.3, 0.3, int(seconds * SR)))


@pytest.fixture(scope="module")
def encoder():
    return AcousticEncoder(AcousticConfig.desk(), np.random.default_rng(3))


def test_segmentation_arithmetic():
    segs = segment_waveform(noise(25))
    assert [s.duration for s in segs] == [10.0, 10.0, 5.0]


def test_short_tail_dropped():
    assert [s.duration for s in segment_waveform(noise(20.5))] == [10.0, 10.0]


def test_overlap():
    segs = segment_waveform(noise(25), overlap_s=5.0)
    assert [s.duration for s in segs] == [10.0, 10.0, 10.0, 10.0]


def test_too_short():
    with pytest.raises(ValueError, match="shorter"):
        segment_waveform(noise(0.5))


def test_matrix_rows_and_padding(encoder):
    m = build_acoustic_matrix(noise(25), DEMO, encoder)
    assert m.matrix.shape == (32, 1024) and m.rows == 3
    assert not m.matrix[3:].any()
    assert np.all(np.any(m.matrix[:3] != 0, axis=1))


def test_long_recording_capped(encoder):
    m = build_acoustic_matrix(noise(400), DEMO, encoder)
    assert m.matrix.shape == (32, 1024) and m.rows == 32
    assert np.all(np.any(m.matrix != 0, axis=1))


def test_rows_equal_standalone_forward(encoder):
    w = noise(35, seed=4)
    m = build_acoustic_matrix(w, DEMO, encoder)
    for k, seg in enumerate(segment_waveform(w)):
        row = encoder(log_mel(seg).frames, [DEMO]).xa.data[0]
        assert row.tobytes() == m.matrix[k].tobytes()


def test_segment_consistency(encoder):
    a, b = noise(20, seed=1), noise(15, seed=2)
    joined = Waveform(np.concatenate([a.samples, b.samples]))
    ma = build_acoustic_matrix(a, DEMO, encoder)
    mj = build_acoustic_matrix(joined, DEMO, encoder)
    assert mj.rows == 4
    assert mj.matrix[: ma.rows].tobytes() == ma.matrix[: ma.rows].tobytes()


@given(st.integers(0, 40), st.integers(1, 6))
def test_pad_rows_idempotent(n, width):
    m = np.arange(n * width, dtype=np.float64).reshape(n, width) + 1
    once = pad_rows(m)
    assert once.shape == (32, width)
    assert np.array_equal(pad_rows(once), once)
    k = min(n, 32)
    assert np.array_equal(once[:k], m[:k]) and not once[k:].any()


def test_feature_matrix_invariant():
    with pytest.raises(ValueError, match="zero"):
        AcousticFeatureMatrix(np.ones((32, 4)), 3)


def _head(rng, **kw):
    lcfg = LinguisticConfig.desk(use_char_branch=False)
    return FusionHead(FusionConfig.desk(**kw), lcfg, VOCAB, rng)


def test_zero_matrix_logits(rng):
    head = _head(rng)
    text = "the cookie jar"
    m = AcousticFeatureMatrix(np.zeros((32, 1024)), 0)
    logits = fusion_forward(m, text, head).data[0]
    wf = head.word.encode([tokenize(text, VOCAB)]).data[0]
    s = head.fcfg.summary_dim
    w, b = head.classifier.weight.data, head.classifier.bias.data
    summary = head.acoustic_branch.proj.bias.data  # relu(0) then max gives 0
    np.testing.assert_allclose(logits, w[:, :s] @ summary + w[:, s:] @ wf + b, atol=1e-12)


def test_zero_rows_do_not_reach_conv(rng):
    head = _head(rng)
    m = np.zeros((1, 32, 1024))
    m[0, :5] = rng.normal(size=(5, 1024))
    before = head.acoustic_branch.conv1(Tensor(m)).data
    head.acoustic_branch.conv1.weight.data[:, 5:] = rng.normal(size=(16, 27, 3))
    assert head.acoustic_branch.conv1(Tensor(m)).data.tobytes() == before.tobytes()


def test_logits_width_and_row_check(rng):
    head = _head(rng)
    assert head(np.zeros((3, 32, 1024)), ["a", "the boy", ""]).shape == (3, 2)
    with pytest.raises(ValueError, match="32 rows"):
        head(np.zeros((1, 16, 1024)), ["a"])


def test_fusion_gradcheck():
    from swinbert.gradcheck import check_fusion_forward

    assert check_fusion_forward() < 1e-4


# -- variant selection ---------------------------------------------------


def test_default_fusion_config():
    cfg = ModelConfig.for_variant("fusion")
    assert cfg.acoustic.use_demographics and not cfg.linguistic.use_char_branch
    assert ModelConfig().acoustic.use_demographics


def test_acoustic_only_has_no_text_modules():
    names = [n for n, _ in fusion_mode_select(ModelConfig.for_variant("acoustic"), None).named_parameters()]
    assert names and all(n.startswith("acoustic.") for n in names)


def test_variant_parameter_counts():
    fusion = fusion_mode_select(ModelConfig.for_variant("fusion"), VOCAB, 0)
    acoustic = fusion_mode_select(ModelConfig.for_variant("acoustic"), None, 0)
    assert fusion.num_parameters() == acoustic.num_parameters() + fusion.fusion.num_parameters()
    no_demo = fusion_mode_select(ModelConfig.for_variant("fusion", demographics=False), VOCAB, 0)
    assert fusion.num_parameters() - no_demo.num_parameters() == (13 + 3) * 64


def test_fusion_with_chars_warns():
    with pytest.warns(UserWarning, match="non-default"):
        fusion_mode_select(ModelConfig.for_variant("fusion", char_branch=True), VOCAB, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fusion_mode_select(ModelConfig.for_variant("linguistic"), VOCAB, 0)


def test_needs_vocab():
    with pytest.raises(ValueError, match="vocabulary"):
        fusion_mode_select(ModelConfig.for_variant("linguistic"), None)


def test_dsp_config_threads_through():
    cfg = AcousticConfig.desk(mel_bins=16, feature_dim=8)
    enc = AcousticEncoder(cfg, np.random.default_rng(0))
    m = build_acoustic_matrix(noise(12), DEMO, enc, DSPConfig(mel_bins=16), FusionConfig(rows=4))
    assert m.matrix.shape == (4, 8) and m.rows == 2
