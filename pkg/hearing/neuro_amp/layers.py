"""Network building blocks composed from Tensor operations.

Each block has an `init_*` function that adds named arrays to a parameter
dict and an apply function that reads the same names from a dict of
Tensors. Sequences are laid out time-major: (T, features).
"""

from typing import Dict

import numpy as np

from .tensor import Tensor, concat, stack

Params = Dict[str, np.ndarray]
TensorParams = Dict[str, Tensor]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# dense ------------------------------------------------------------------------
def init_dense(
    params: Params, prefix: str, n_in: int, n_out: int, rng: np.random.Generator, scale: float = 1.0
) -> None:
    params[f"{prefix}.weight"] = scale * glorot(rng, n_in, n_out, (n_in, n_out))
    params[f"{prefix}.bias"] = np.zeros(n_out)


def dense(p: TensorParams, prefix: str, x: Tensor) -> Tensor:
    return x @ p[f"{prefix}.weight"] + p[f"{prefix}.bias"]


def dense_count(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out


# 1-D convolution along time -------------------------------------------------
def init_conv1d(params: Params, prefix: str, n_in: int, n_out: int, kernel: int, rng: np.random.Generator) -> None:
    params[f"{prefix}.weight"] = glorot(rng, kernel * n_in, n_out, (kernel, n_in, n_out))
    params[f"{prefix}.bias"] = np.zeros(n_out)


def conv1d(p: TensorParams, prefix: str, x: Tensor) -> Tensor:
    """Stride-1 'same' convolution of a (T, C_in) sequence."""
    weight = p[f"{prefix}.weight"]
    kernel, n_in, n_out = weight.shape
    n_frames = x.shape[0]
    left = (kernel - 1) // 2
    right = kernel - 1 - left
    padded = concat([Tensor(np.zeros((left, n_in))), x, Tensor(np.zeros((right, n_in)))], axis=0)
    columns = concat([padded[k : k + n_frames] for k in range(kernel)], axis=1)
    return columns @ weight.reshape(kernel * n_in, n_out) + p[f"{prefix}.bias"]


def conv1d_count(n_in: int, n_out: int, kernel: int) -> int:
    return kernel * n_in * n_out + n_out


# LSTM -------------------------------------------------------------------------
def init_lstm(params: Params, prefix: str, n_in: int, units: int, rng: np.random.Generator) -> None:
    params[f"{prefix}.w_input"] = glorot(rng, n_in, 4 * units, (n_in, 4 * units))
    params[f"{prefix}.w_hidden"] = glorot(rng, units, 4 * units, (units, 4 * units))
    bias = np.zeros(4 * units)
    bias[units : 2 * units] = 1.0  # forget gate
    params[f"{prefix}.bias"] = bias


def lstm(p: TensorParams, prefix: str, x: Tensor) -> Tensor:
    """Unidirectional LSTM over a (T, C) sequence, gate order i, f, g, o; returns (T, units)."""
    w_hidden = p[f"{prefix}.w_hidden"]
    units = w_hidden.shape[0]
    projected = x @ p[f"{prefix}.w_input"] + p[f"{prefix}.bias"]

    h = Tensor(np.zeros(units))
    c = Tensor(np.zeros(units))
    outputs = []
    for t in range(x.shape[0]):
        gates = projected[t] + h @ w_hidden
        i = gates[0:units].sigmoid()
        f = gates[units : 2 * units].sigmoid()
        g = gates[2 * units : 3 * units].tanh()
        o = gates[3 * units : 4 * units].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        outputs.append(h)
    return stack(outputs, axis=0)


def lstm_count(n_in: int, units: int) -> int:
    return n_in * 4 * units + units * 4 * units + 4 * units


# layer norm ---------------------------------------------------------------------
def init_layer_norm(params: Params, prefix: str, dim: int) -> None:
    params[f"{prefix}.gamma"] = np.ones(dim)
    params[f"{prefix}.beta"] = np.zeros(dim)


def layer_norm(p: TensorParams, prefix: str, x: Tensor, eps: float = 1e-5) -> Tensor:
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (variance + eps).sqrt() * p[f"{prefix}.gamma"] + p[f"{prefix}.beta"]


def layer_norm_count(dim: int) -> int:
    return 2 * dim


# transformer encoder block --------------------------------------------------------
def init_encoder_block(params: Params, prefix: str, dim: int, ffn_dim: int, rng: np.random.Generator) -> None:
    for name in ("query", "key", "value", "out"):
        init_dense(params, f"{prefix}.{name}", dim, dim, rng)
    init_layer_norm(params, f"{prefix}.norm1", dim)
    init_dense(params, f"{prefix}.ffn1", dim, ffn_dim, rng)
    init_dense(params, f"{prefix}.ffn2", ffn_dim, dim, rng)
    init_layer_norm(params, f"{prefix}.norm2", dim)


def self_attention(p: TensorParams, prefix: str, x: Tensor, heads: int) -> Tensor:
    """Multi-head scaled dot-product self-attention over all frames (no causal mask)."""
    n_frames, dim = x.shape
    head_dim = dim // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(n_frames, heads, head_dim).transpose(1, 0, 2)

    q = split(dense(p, f"{prefix}.query", x))
    k = split(dense(p, f"{prefix}.key", x))
    v = split(dense(p, f"{prefix}.value", x))
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(head_dim))
    attended = scores.softmax(axis=-1) @ v
    merged = attended.transpose(1, 0, 2).reshape(n_frames, dim)
    return dense(p, f"{prefix}.out", merged)


def encoder_block(p: TensorParams, prefix: str, x: Tensor, heads: int) -> Tensor:
    x = layer_norm(p, f"{prefix}.norm1", x + self_attention(p, prefix, x, heads))
    hidden = dense(p, f"{prefix}.ffn1", x).relu()
    return layer_norm(p, f"{prefix}.norm2", x + dense(p, f"{prefix}.ffn2", hidden))


def encoder_block_count(dim: int, ffn_dim: int) -> int:
    return 4 * dense_count(dim, dim) + 2 * layer_norm_count(dim) + dense_count(dim, ffn_dim) + dense_count(ffn_dim, dim)


def sinusoidal_positions(n_frames: int, dim: int) -> np.ndarray:
    position = np.arange(n_frames)[:, None]
    rate = np.exp(-np.log(10000.0) * (np.arange(0, dim, 2) / dim))
    table = np.zeros((n_frames, dim))
    table[:, 0::2] = np.sin(position * rate)
    table[:, 1::2] = np.cos(position * rate[: dim // 2])
    return table
