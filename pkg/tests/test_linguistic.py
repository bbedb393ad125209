import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swinbert import tensor as T
from swinbert.config import LinguisticConfig
from swinbert.linguistic import (
    CHAR_SYMBOLS,
    CHARS,
    CLS,
    PAD,
    SEP,
    UNK,
    CharBranch,
    LinguisticModel,
    TokenSequence,
    Vocabulary,
    WordEncoder,
    char_encode,
    char_transcript,
    linguistic_forward,
    pad_batch,
    tokenize,
    words_of,
)

VOCAB = Vocabulary.build(["the cookie jar is on the shelf", "the boy uh falls", "mother washes dishes"])


# -- characters ----------------------------------------------------------


def test_dictionary_has_32_symbols():
    assert len(CHARS) == 32 == len(CHAR_SYMBOLS)
    assert CHARS.decode(range(32)) == list(CHAR_SYMBOLS)
    assert CHARS.encode("".join(CHAR_SYMBOLS[4:])) == list(range(4, 32))


def test_dictionary_lookup_rules():
    assert CHARS.index("h") == CHARS.index("H") == 11
    assert CHARS.index(" ") == 4
    assert CHARS.index("!") == CHARS.index("é") == 3
    assert CHARS.index("<pad>") == 0


def test_char_encode_empty():
    m = char_encode("", max_len=10)
    assert m.length == 0 and not m.matrix.any()


def test_char_encode_hi_there():
    m = char_encode("HI THERE", max_len=16).matrix
    assert [int(m[i].argmax()) for i in range(3)] == [11, 10, 4]
    assert m[:8].sum(axis=1).tolist() == [1.0] * 8
    assert not m[8:].any()


def test_char_encode_truncates(rng):
    text = "".join(rng.choice(list("ABC |'XYZ"), size=5000))
    m = char_encode(text, max_len=3000)
    assert m.matrix.shape == (3000, 32) and m.length == 5000
    assert np.all(m.matrix.sum(axis=1) == 1.0)


@given(st.text(max_size=80), st.integers(1, 60))
def test_char_row_law(text, max_len):
    m = char_encode(text, max_len=max_len).matrix
    k = min(len(text), max_len)
    sums = m.sum(axis=1)
    assert np.all(sums[:k] == 1.0) and np.all(sums[k:] == 0.0)
    assert set(np.unique(m)) <= {0.0, 1.0}


def test_char_transcript():
    assert char_transcript("the  cookie jar") == "THE|COOKIE|JAR"


# -- word tokens ---------------------------------------------------------


def test_words_of():
    assert words_of("The Cookie, jar's  UH.") == ["the", "cookie", "jar's", "uh"]


def test_tokenize_empty():
    assert tokenize("", VOCAB).ids.tolist() == [CLS, SEP]


def test_tokenize_known_words():
    ids = tokenize("The cookie jar", VOCAB).ids
    assert ids.size == 5 and ids[0] == CLS and ids[-1] == SEP
    assert UNK not in ids


def test_tokenize_unknown_word():
    assert tokenize("zebra", VOCAB).ids.tolist() == [CLS, UNK, SEP]


def test_tokenize_truncates_to_512():
    ids = tokenize(" ".join(["cookie"] * 600), VOCAB).ids
    assert ids.size == 512 and ids[-1] == SEP


def test_tokenize_needs_words():
    with pytest.raises(ValueError, match="no word"):
        tokenize("x", Vocabulary(["[PAD]", "[UNK]", "[CLS]", "[SEP]"]))


@given(st.text(max_size=300), st.integers(2, 40))
def test_tokenizer_bounds(text, max_len):
    ids = tokenize(text, VOCAB, max_len).ids
    assert ids.size <= max_len and ids.max() < len(VOCAB) and ids[0] == CLS


def test_vocabulary_order_and_file(tmp_path):
    v = Vocabulary.build(["b a a", "c b a"])
    assert v.tokens == ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "b", "c"]
    v.save(tmp_path / "v.txt")
    assert (tmp_path / "v.txt").read_text().splitlines()[4] == "a"
    assert Vocabulary.load(tmp_path / "v.txt") == v
    with pytest.raises(ValueError):
        Vocabulary(["a", "b"])


def test_pad_batch():
    ids, mask = pad_batch([tokenize("the jar", VOCAB), tokenize("", VOCAB)])
    assert ids.shape == (2, 4) and ids[1].tolist() == [CLS, SEP, PAD, PAD]
    assert mask.tolist() == [[True] * 4, [True, True, False, False]]


# -- char branch ---------------------------------------------------------


def test_char_branch_zero(rng):
    cfg = LinguisticConfig.desk(char_len_max=20)
    br = CharBranch(cfg, rng)
    assert not br(np.zeros((20, 32))).data.any()


@pytest.mark.parametrize("text", ["", "A", "THE|COOKIE|JAR|IS|ON|THE|SHELF"])
def test_char_branch_width(rng, text):
    cfg = LinguisticConfig.desk(char_len_max=20)
    assert CharBranch(cfg, rng)(char_encode(text, max_len=20).matrix).shape == (1, cfg.char_feature_dim)


def test_char_branch_gradcheck():
    from swinbert.gradcheck import check_char_branch_forward

    assert check_char_branch_forward() < 1e-5


# -- word encoder --------------------------------------------------------


def test_word_encoder_smoke(rng):
    enc = WordEncoder(LinguisticConfig.desk(), len(VOCAB), rng)
    out = enc.encode([tokenize("", VOCAB)])
    assert out.shape == (1, 32) and np.all(np.isfinite(out.data))


@pytest.mark.parametrize("pooling", ["mean", "cls"])
def test_word_encoder_padding_invariance(rng, pooling):
    enc = WordEncoder(LinguisticConfig.desk(pooling=pooling), len(VOCAB), rng)
    seq = tokenize("the boy uh falls", VOCAB)
    alone = enc.encode([seq]).data[0]
    padded = TokenSequence(np.concatenate([seq.ids, [PAD] * 5]), np.concatenate([seq.attention, [False] * 5]))
    np.testing.assert_allclose(enc.encode([padded]).data[0], alone, atol=1e-9, rtol=0)
    batched = enc.encode([tokenize(" ".join(["cookie"] * 20), VOCAB), seq]).data[1]
    np.testing.assert_allclose(batched, alone, atol=1e-9, rtol=0)


def test_word_encoder_rejects_bad_ids(rng):
    enc = WordEncoder(LinguisticConfig.desk(), len(VOCAB), rng)
    with pytest.raises(ValueError, match="out of range"):
        enc(np.array([[CLS, 999, SEP]]), np.ones((1, 3), bool))


def test_word_encoder_gradcheck():
    from swinbert.gradcheck import check_word_encoder_forward

    assert check_word_encoder_forward() < 1e-4


# -- classifier ----------------------------------------------------------


def test_logits_width(rng):
    for char in (True, False):
        model = LinguisticModel(LinguisticConfig.desk(use_char_branch=char), VOCAB, rng)
        assert linguistic_forward("the cookie", "THE|COOKIE", model).shape == (1, 2)


def test_char_toggle_parameter_count(rng):
    cfg = LinguisticConfig.desk()
    with_char = LinguisticModel(cfg, VOCAB, rng)
    without = LinguisticModel(LinguisticConfig.desk(use_char_branch=False), VOCAB, rng)
    (c1, c2), k, d = cfg.char_channels, cfg.char_kernel, cfg.char_feature_dim
    branch = (32 * c1 * k + c1) + (c1 * c2 * k + c2) + (c2 * d + d)
    widened = 2 * d
    assert with_char.num_parameters() - without.num_parameters() == branch + widened
    assert with_char.char.num_parameters() == branch


def test_char_text_defaults_to_word_derived(rng):
    model = LinguisticModel(LinguisticConfig.desk(), VOCAB, rng)
    a = model(["the cookie jar"]).data
    b = model(["the cookie jar"], ["THE|COOKIE|JAR"]).data
    assert a.tobytes() == b.tobytes()


def test_linguistic_gradcheck():
    from swinbert.gradcheck import check_linguistic_forward

    assert check_linguistic_forward() < 1e-4


def test_float32_forward_close(rng):
    model = LinguisticModel(LinguisticConfig.desk(), VOCAB, rng)
    ref = model(["the boy falls"]).data
    T.set_default_dtype(np.float32)
    try:
        for p in model.parameters():
            p.data = p.data.astype(np.float32)
        out = model(["the boy falls"]).data
    finally:
        T.set_default_dtype(np.float64)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, ref, atol=1e-4)
