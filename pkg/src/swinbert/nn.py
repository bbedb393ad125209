"""Parameter containers and the layers shared by every encoder."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor

MASK_VALUE = -1e9


class Module:
    """Holds parameters and child modules as attributes, in assignment order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, ModuleList):
                for i, child in enumerate(value):
                    yield from child.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data) for name, p in self.named_parameters())

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch; missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: checkpoint {value.shape} vs model {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(list):
    pass


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape))


def zeros(shape) -> Tensor:
    return T.parameter(np.zeros(shape))


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.weight = uniform_fan_in(rng, (out_dim, in_dim), in_dim)
        self.bias = zeros(out_dim) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.weight = T.parameter(np.ones(dim))
        self.bias = zeros(dim)
        self._eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self._eps)


class Embedding(Module):
    def __init__(self, num: int, dim: int, rng: np.random.Generator):
        self.weight = T.parameter(rng.normal(0.0, 0.02, size=(num, dim)))

    def forward(self, ids) -> Tensor:
        return self.weight[np.asarray(ids, dtype=np.int64)]


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, stride: int = 1, padding: int = 0):
        self.weight = uniform_fan_in(rng, (c_out, c_in, kernel), c_in * kernel)
        self.bias = zeros(c_out)
        self._stride = stride
        self._padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, self._stride, self._padding)


class MLP(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class QKVProjection(Module):
    """Joint query/key/value projection with query and value biases only.

    A key bias shifts every score in a row by the same amount, which softmax
    ignores, so it would be a parameter with identically zero gradient.
    """

    def __init__(self, dim: int, rng: np.random.Generator):
        self.weight = uniform_fan_in(rng, (3 * dim, dim), dim)
        self.q_bias = zeros(dim)
        self.v_bias = zeros(dim)

    def forward(self, x: Tensor) -> Tensor:
        bias = T.concat([self.q_bias, T.as_tensor(np.zeros(self.q_bias.shape[0]), self.q_bias.dtype), self.v_bias])
        return T.linear(x, self.weight, bias)


def merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, d = x.shape
    nd = len(lead)
    return x.transpose(*range(nd), nd + 1, nd, nd + 2).reshape(*lead, n, h * d)


def attention(q: Tensor, k: Tensor, v: Tensor, bias=None) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention; ``bias`` is added to the scores before softmax."""
    scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    if bias is not None:
        scores = scores + bias
    probs = T.softmax(scores, axis=-1)
    return probs @ v, probs


class SelfAttention(Module):
    """Multi-head self-attention over (B, N, C) with an optional key-padding mask."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.qkv = QKVProjection(dim, rng)
        self.proj = Linear(dim, dim, rng)
        self._heads = heads

    def forward(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self._heads, c // self._heads).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        bias = None
        if key_mask is not None:
            bias = np.where(key_mask, 0.0, MASK_VALUE)[:, None, None, :]
        out, _ = attention(q, k, v, bias)
        return self.proj(merge_heads(out))


class TransformerLayer(Module):
    """Pre-norm encoder layer: x + attn(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim: int, heads: int, ffn_mult: int, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(dim, ffn_mult * dim, rng)

    def forward(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.norm1(x), key_mask)
        return x + self.mlp(self.norm2(x))
