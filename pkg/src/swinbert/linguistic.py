"""Character one-hot CNN branch, word-level transformer encoder, and their classifier."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import tensor as T
from .config import LinguisticConfig
from .nn import Conv1d, Embedding, LayerNorm, Linear, Module, ModuleList, TransformerLayer
from .tensor import Tensor

CHAR_SYMBOLS = (
    "<pad>", "<s>", "</s>", "<unk>", "|",
    "E", "T", "A", "O", "N", "I", "H", "S", "R", "D", "L", "U", "M", "W", "C",
    "F", "G", "Y", "P", "B", "V", "K", "'", "X", "J", "Q", "Z",
)  # fmt: skip


class CharDictionary:
    """The fixed 32-symbol character table; space maps to ``|``, anything unmapped to ``<unk>``."""

    def __init__(self, symbols: Iterable[str] = CHAR_SYMBOLS):
        self.symbols = tuple(symbols)
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate symbols in character dictionary")
        self.unk = self._index["<unk>"]

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        if symbol in self._index:
            return self._index[symbol]
        if symbol == " ":
            return self._index["|"]
        return self._index.get(symbol.upper(), self.unk)

    def encode(self, text: str) -> list[int]:
        return [self.index(ch) for ch in text]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.symbols[i] for i in ids]


CHARS = CharDictionary()


@dataclass(frozen=True)
class CharMatrix:
    matrix: np.ndarray  # (L_max, 32)
    length: int  # true length l before truncation


def char_encode(text: str, dictionary: CharDictionary = CHARS, max_len: int = 3000) -> CharMatrix:
    ids = dictionary.encode(text[:max_len])
    m = np.zeros((max_len, len(dictionary)))
    m[np.arange(len(ids)), ids] = 1.0
    return CharMatrix(m, len(text))


def char_transcript(words: str) -> str:
    """Character-stream stand-in derived from a word transcript."""
    return " ".join(words.split()).upper().replace(" ", "|")


# -- word vocabulary -----------------------------------------------------

SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")
PAD, UNK, CLS, SEP = range(4)
_WORD = re.compile(r"[a-z0-9']+")


def words_of(text: str) -> list[str]:
    out = []
    for tok in text.lower().split():
        out.extend(_WORD.findall(tok))
    return out


class Vocabulary:
    def __init__(self, tokens: Iterable[str]):
        self.tokens = list(tokens)
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must start with {SPECIAL_TOKENS}")
        self._ids = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, word: str) -> int:
        return self._ids.get(word, UNK)

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "Vocabulary":
        counts = Counter(w for t in texts for w in words_of(t))
        kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
        return cls(list(SPECIAL_TOKENS) + kept)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray
    attention: np.ndarray  # True on real tokens


def tokenize(text: str, vocab: Vocabulary, max_len: int = 512) -> TokenSequence:
    if len(vocab) <= len(SPECIAL_TOKENS):
        raise ValueError("vocabulary has no word entries")
    ids = [vocab.id(w) for w in words_of(text)][: max_len - 2]
    ids = np.array([CLS, *ids, SEP], dtype=np.int64)
    return TokenSequence(ids, np.ones(ids.size, dtype=bool))


def pad_batch(seqs: list[TokenSequence]) -> tuple[np.ndarray, np.ndarray]:
    n = max(s.ids.size for s in seqs)
    ids = np.full((len(seqs), n), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), n), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : s.ids.size] = s.ids
        mask[i, : s.ids.size] = s.attention
    return ids, mask


# -- model ---------------------------------------------------------------


class CharBranch(Module):
    """conv -> ReLU -> conv -> ReLU -> global max over length -> linear."""

    def __init__(self, cfg: LinguisticConfig, rng: np.random.Generator):
        c1, c2 = cfg.char_channels
        pad = cfg.char_kernel // 2
        self.conv1 = Conv1d(cfg.char_vocab, c1, cfg.char_kernel, rng, padding=pad)
        self.conv2 = Conv1d(c1, c2, cfg.char_kernel, rng, padding=pad)
        self.proj = Linear(c2, cfg.char_feature_dim, rng)

    def forward(self, m) -> Tensor:
        """``m`` is (B, L, 32) or (L, 32); returns (B, char_feature_dim)."""
        x = T.as_tensor(m)
        if x.ndim == 2:
            x = x.reshape(1, *x.shape)
        x = T.relu(self.conv1(T.swapaxes(x, 1, 2)))
        x = T.relu(self.conv2(x))
        return self.proj(x.max(axis=-1))


class WordEncoder(Module):
    """Token + position embeddings, pre-norm transformer layers, final LayerNorm, pooling."""

    def __init__(self, cfg: LinguisticConfig, vocab_size: int, rng: np.random.Generator):
        self.tokens = Embedding(vocab_size, cfg.word_dim, rng)
        self.positions = Embedding(cfg.word_len_max, cfg.word_dim, rng)
        self.layers = ModuleList(TransformerLayer(cfg.word_dim, cfg.word_heads, cfg.ffn_mult, rng) for _ in range(cfg.word_layers))
        self.norm = LayerNorm(cfg.word_dim)
        self._pooling = cfg.pooling
        self._vocab_size = vocab_size

    def forward(self, ids: np.ndarray, mask: np.ndarray) -> Tensor:
        ids = np.asarray(ids)
        if ids.min() < 0 or ids.max() >= self._vocab_size:
            raise ValueError(f"token id out of range for vocabulary of {self._vocab_size}")
        x = self.tokens(ids) + self.positions(np.arange(ids.shape[1]))
        for layer in self.layers:
            x = layer(x, mask)
        x = self.norm(x)
        if self._pooling == "cls":
            return x[:, 0]
        w = mask.astype(np.float64)
        return (x * w[:, :, None]).sum(axis=1) * (1.0 / w.sum(axis=1, keepdims=True))

    def encode(self, seqs: list[TokenSequence]) -> Tensor:
        return self.forward(*pad_batch(seqs))


class LinguisticModel(Module):
    def __init__(self, cfg: LinguisticConfig, vocab: Vocabulary, rng: np.random.Generator):
        self.cfg = cfg
        self._vocab = vocab
        self.word = WordEncoder(cfg, len(vocab), rng)
        self.char = CharBranch(cfg, rng) if cfg.use_char_branch else None
        width = cfg.word_dim + (cfg.char_feature_dim if cfg.use_char_branch else 0)
        self.classifier = Linear(width, 2, rng)

    @property
    def vocab(self) -> Vocabulary:
        return self._vocab

    def features(self, word_texts: list[str], char_texts: list[str] | None = None) -> tuple[Tensor, Tensor]:
        """(word feature, classifier input)."""
        seqs = [tokenize(t, self._vocab, self.cfg.word_len_max) for t in word_texts]
        wf = self.word.encode(seqs)
        if self.char is None:
            return wf, wf
        if char_texts is None:
            char_texts = [char_transcript(t) for t in word_texts]
        mats = np.stack([char_encode(t, CHARS, self.cfg.char_len_max).matrix for t in char_texts])
        return wf, T.concat([wf, self.char(mats)], axis=-1)

    def forward(self, word_texts: list[str], char_texts: list[str] | None = None) -> Tensor:
        return self.classifier(self.features(word_texts, char_texts)[1])


def linguistic_forward(text_word: str, text_char: str, model: LinguisticModel) -> Tensor:
    return model([text_word], [text_char])
