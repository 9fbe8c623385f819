"""Parameter containers and the layers both classifiers are assembled from."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..core.errors import ShapeError
from ..numcore import ops
from ..numcore.tensor import Tensor


def glorot_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int
) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng: np.random.Generator, size: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def parameter(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Walks instance attributes to find parameters, in definition order."""

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for idx, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{idx}.")

    def parameters(self) -> list[Tensor]:
        return [param for _, param in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ShapeError(f"state dict mismatch: missing {missing}, unexpected {unexpected}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.data.shape:
                raise ShapeError(
                    f"{name}: checkpoint shape {value.shape} vs model {param.data.shape}"
                )
            param.data = value.copy()


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        shape = (in_features, out_features)
        self.weight = parameter(glorot_uniform(rng, shape, in_features, out_features))
        self.bias = parameter(np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, width: int) -> None:
        self.gain = parameter(np.ones(width))
        self.bias = parameter(np.zeros(width))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)


class LSTMDirection(Module):
    """One recurrent direction; gates packed as [input, forget, cell, output]."""

    def __init__(self, in_features: int, hidden: int, rng: np.random.Generator) -> None:
        self.hidden = hidden
        self.input_kernel = parameter(
            glorot_uniform(rng, (in_features, 4 * hidden), in_features, 4 * hidden)
        )
        self.recurrent_kernel = parameter(
            np.concatenate([orthogonal(rng, hidden) for _ in range(4)], axis=1)
        )
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        self.bias = parameter(bias)

    def __call__(self, x: Tensor, reverse: bool = False) -> Tensor:
        """x: (B, T, F) -> hidden states (B, T, H) aligned with the input time axis."""
        if x.ndim != 3:
            raise ShapeError(f"LSTM expects (B, T, F), got {x.shape}")
        batch, steps, _ = x.shape
        hid = self.hidden
        projected = ops.add(ops.matmul(x, self.input_kernel), self.bias)
        h = Tensor(np.zeros((batch, hid)))
        c = Tensor(np.zeros((batch, hid)))
        states: list[Tensor | None] = [None] * steps
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        for t in order:
            step_input = ops.index(projected, (slice(None), t, slice(None)))
            gates = ops.add(step_input, ops.matmul(h, self.recurrent_kernel))
            i = ops.sigmoid(ops.index(gates, (slice(None), slice(0, hid))))
            f = ops.sigmoid(ops.index(gates, (slice(None), slice(hid, 2 * hid))))
            g = ops.tanh(ops.index(gates, (slice(None), slice(2 * hid, 3 * hid))))
            o = ops.sigmoid(ops.index(gates, (slice(None), slice(3 * hid, 4 * hid))))
            c = ops.add(ops.mul(f, c), ops.mul(i, g))
            h = ops.mul(o, ops.tanh(c))
            states[t] = h
        return ops.stack(states, axis=1)  # type: ignore[arg-type]


class BiLSTMLayer(Module):
    def __init__(self, in_features: int, hidden: int, rng: np.random.Generator) -> None:
        self.forward_cell = LSTMDirection(in_features, hidden, rng)
        self.backward_cell = LSTMDirection(in_features, hidden, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return bilstm_embed(x, self.forward_cell, self.backward_cell)


def bilstm_embed(x: Tensor, forward_cell: LSTMDirection, backward_cell: LSTMDirection) -> Tensor:
    """Concatenate left-to-right and right-to-left states per time step: (.., T, 2H).

    A 2-D ``(T, F)`` input is treated as a batch of one and returned as ``(T, 2H)``.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = ops.reshape(x, (1,) + x.shape)
    fused = ops.concat([forward_cell(x), backward_cell(x, reverse=True)], axis=-1)
    if squeeze:
        fused = ops.reshape(fused, fused.shape[1:])
    return fused


class MultiHeadSelfAttention(Module):
    def __init__(self, model_dim: int, heads: int, rng: np.random.Generator) -> None:
        if model_dim % heads:
            raise ShapeError(f"model_dim {model_dim} is not divisible by {heads} heads")
        self.heads = heads
        self.query = Linear(model_dim, model_dim, rng)
        self.key = Linear(model_dim, model_dim, rng)
        self.value = Linear(model_dim, model_dim, rng)
        self.output = Linear(model_dim, model_dim, rng)

    def _split_heads(self, x: Tensor) -> Tensor:
        batch, steps, width = x.shape
        split = ops.reshape(x, (batch, steps, self.heads, width // self.heads))
        return ops.transpose(split, (0, 2, 1, 3))

    def __call__(self, x: Tensor) -> Tensor:
        batch, steps, width = x.shape
        q = self._split_heads(self.query(x))
        k = self._split_heads(self.key(x))
        v = self._split_heads(self.value(x))
        scale = 1.0 / math.sqrt(width // self.heads)
        scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), scale)
        mixed = ops.matmul(ops.softmax(scores, axis=-1), v)
        merged = ops.reshape(ops.transpose(mixed, (0, 2, 1, 3)), (batch, steps, width))
        return self.output(merged)


class FeedForward(Module):
    def __init__(self, model_dim: int, expansion: int, rng: np.random.Generator) -> None:
        self.inner = Linear(model_dim, expansion * model_dim, rng)
        self.outer = Linear(expansion * model_dim, model_dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(ops.relu(self.inner(x)))


class EncoderBlock(Module):
    """Pre-norm residual block: x + attn(norm(x)), then x + ff(norm(x))."""

    def __init__(
        self,
        model_dim: int,
        heads: int,
        expansion: int,
        dropout_rate: float,
        rng: np.random.Generator,
    ) -> None:
        self.attn_norm = LayerNorm(model_dim)
        self.attention = MultiHeadSelfAttention(model_dim, heads, rng)
        self.ff_norm = LayerNorm(model_dim)
        self.feed_forward = FeedForward(model_dim, expansion, rng)
        self.dropout_rate = dropout_rate

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        attended = ops.dropout(
            self.attention(self.attn_norm(x)), self.dropout_rate, rng, self.training
        )
        x = ops.add(x, attended)
        fed = ops.dropout(self.feed_forward(self.ff_norm(x)), self.dropout_rate, rng, self.training)
        return ops.add(x, fed)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int,
        rng: np.random.Generator,
    ) -> None:
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        shape = (out_channels, in_channels, kernel, kernel)
        self.weight = parameter(glorot_uniform(rng, shape, fan_in, fan_out))
        self.bias = parameter(np.zeros(out_channels))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding="same")
