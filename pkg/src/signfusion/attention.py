"""Transformer building blocks and the clip-feature encoder stream.

Sequences are [length, d_model] tensors without a batch axis; training
processes one sample at a time. Layers use the post-norm arrangement:
normalize after each residual addition.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    layer_norm_affine,
    matmul,
    mul,
    narrow,
    relu,
    softmax,
    transpose,
)
from .autodiff import Parameter
from .params import ParameterStore

LAYER_NORM_EPS = 1e-5


def positional_encoding(pos: int, d_model: int) -> np.ndarray:
    """Sinusoidal position vector: sin on even slots, cos on odd slots."""
    if pos < 0:
        raise ValueError(f"position must be nonnegative, got {pos}")
    if d_model <= 0 or d_model % 2 != 0:
        raise ValueError(f"d_model must be a positive even integer, got {d_model}")
    i = np.arange(d_model // 2)
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    out = np.empty(d_model)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


@lru_cache(maxsize=64)
def _pe_matrix(length: int, d_model: int) -> np.ndarray:
    table = np.stack([positional_encoding(p, d_model) for p in range(length)])
    table.setflags(write=False)
    return table


def positional_encoding_matrix(length: int, d_model: int) -> np.ndarray:
    return _pe_matrix(length, d_model)


def causal_mask(n: int) -> np.ndarray:
    """True strictly above the diagonal: no attention to later positions."""
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         mask: np.ndarray | None = None) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V with optional boolean forbidden-mask."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(
            f"query/key width mismatch: {q.shape} vs {k.shape}"
        )
    if k.shape[0] != v.shape[0]:
        raise ShapeError(
            f"key/value length mismatch: {k.shape} vs {v.shape}"
        )
    if mask is not None and mask.shape != (q.shape[0], k.shape[0]):
        raise ShapeError(
            f"mask shape {mask.shape} does not match scores "
            f"({q.shape[0]}, {k.shape[0]})"
        )
    scores = mul(matmul(q, transpose(k)), 1.0 / np.sqrt(q.shape[-1]))
    weights = softmax(scores, axis=-1, mask=mask)
    return matmul(weights, v)


@dataclass
class AttentionHead:
    w_q: Parameter
    w_k: Parameter
    w_v: Parameter


@dataclass
class MultiHeadParams:
    heads: list
    w_out: Parameter
    d_model: int
    d_k: int


def build_multi_head(store: ParameterStore, prefix: str, d_model: int,
                     head_count: int) -> MultiHeadParams:
    if d_model % head_count != 0:
        raise ValueError(
            f"d_model {d_model} not divisible by head count {head_count}"
        )
    d_k = d_model // head_count
    heads = [
        AttentionHead(
            w_q=store.uniform(f"{prefix}.head{i}.wq", (d_model, d_k)),
            w_k=store.uniform(f"{prefix}.head{i}.wk", (d_model, d_k)),
            w_v=store.uniform(f"{prefix}.head{i}.wv", (d_model, d_k)),
        )
        for i in range(head_count)
    ]
    w_out = store.uniform(f"{prefix}.wo", (d_model, d_model))
    return MultiHeadParams(heads=heads, w_out=w_out, d_model=d_model, d_k=d_k)


def multi_head_attention(params: MultiHeadParams, q: Tensor, k: Tensor,
                         v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Project per head, attend, concatenate, then apply the output map.

    The per-head projections are stacked so each of Q/K/V costs one matrix
    product, then the heads attend over their own slices.
    """
    d_k = params.d_k
    if len(params.heads) == 1:
        head = params.heads[0]
        merged = scaled_dot_attention(
            matmul(q, head.w_q), matmul(k, head.w_k), matmul(v, head.w_v),
            mask=mask,
        )
        return matmul(merged, params.w_out)
    q_all = matmul(q, concat([h.w_q for h in params.heads], axis=1))
    k_all = matmul(k, concat([h.w_k for h in params.heads], axis=1))
    v_all = matmul(v, concat([h.w_v for h in params.heads], axis=1))
    outputs = [
        scaled_dot_attention(
            narrow(q_all, 1, i * d_k, (i + 1) * d_k),
            narrow(k_all, 1, i * d_k, (i + 1) * d_k),
            narrow(v_all, 1, i * d_k, (i + 1) * d_k),
            mask=mask,
        )
        for i in range(len(params.heads))
    ]
    return matmul(concat(outputs, axis=1), params.w_out)


@dataclass
class LayerNormParams:
    gain: Parameter
    bias: Parameter


def build_layer_norm(store: ParameterStore, prefix: str, width: int) -> LayerNormParams:
    return LayerNormParams(
        gain=store.ones(f"{prefix}.gain", (width,)),
        bias=store.zeros(f"{prefix}.bias", (width,)),
    )


def layer_norm(params: LayerNormParams, x: Tensor) -> Tensor:
    return layer_norm_affine(x, params.gain, params.bias, eps=LAYER_NORM_EPS)


@dataclass
class FeedForwardParams:
    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter


def build_feed_forward(store: ParameterStore, prefix: str, d_model: int,
                       hidden: int) -> FeedForwardParams:
    return FeedForwardParams(
        w1=store.uniform(f"{prefix}.w1", (d_model, hidden)),
        b1=store.zeros(f"{prefix}.b1", (hidden,)),
        w2=store.uniform(f"{prefix}.w2", (hidden, d_model)),
        b2=store.zeros(f"{prefix}.b2", (d_model,)),
    )


def feed_forward(params: FeedForwardParams, x: Tensor) -> Tensor:
    hidden = relu(add(matmul(x, params.w1), params.b1))
    return add(matmul(hidden, params.w2), params.b2)


@dataclass
class EncoderLayerParams:
    attn: MultiHeadParams
    norm1: LayerNormParams
    ffn: FeedForwardParams
    norm2: LayerNormParams


@dataclass
class DecoderLayerParams:
    self_attn: MultiHeadParams
    norm1: LayerNormParams
    cross_attn: MultiHeadParams
    norm2: LayerNormParams
    ffn: FeedForwardParams
    norm3: LayerNormParams


def build_encoder_layer(store: ParameterStore, prefix: str, d_model: int,
                        head_count: int, ffn_dim: int) -> EncoderLayerParams:
    return EncoderLayerParams(
        attn=build_multi_head(store, f"{prefix}.attn", d_model, head_count),
        norm1=build_layer_norm(store, f"{prefix}.norm1", d_model),
        ffn=build_feed_forward(store, f"{prefix}.ffn", d_model, ffn_dim),
        norm2=build_layer_norm(store, f"{prefix}.norm2", d_model),
    )


def build_decoder_layer(store: ParameterStore, prefix: str, d_model: int,
                        head_count: int, ffn_dim: int) -> DecoderLayerParams:
    return DecoderLayerParams(
        self_attn=build_multi_head(store, f"{prefix}.self", d_model, head_count),
        norm1=build_layer_norm(store, f"{prefix}.norm1", d_model),
        cross_attn=build_multi_head(store, f"{prefix}.cross", d_model, head_count),
        norm2=build_layer_norm(store, f"{prefix}.norm2", d_model),
        ffn=build_feed_forward(store, f"{prefix}.ffn", d_model, ffn_dim),
        norm3=build_layer_norm(store, f"{prefix}.norm3", d_model),
    )


def encoder_forward(layers, x: Tensor) -> Tensor:
    """Self-attention + FFN stack over an already position-encoded input."""
    for layer in layers:
        attended = multi_head_attention(layer.attn, x, x, x)
        x = layer_norm(layer.norm1, add(x, attended))
        x = layer_norm(layer.norm2, add(x, feed_forward(layer.ffn, x)))
    return x


def decoder_forward(layers, target: Tensor, memory: Tensor) -> Tensor:
    """Causally masked self-attention, cross-attention over memory, FFN."""
    mask = causal_mask(target.shape[0])
    x = target
    for layer in layers:
        self_att = multi_head_attention(layer.self_attn, x, x, x, mask=mask)
        x = layer_norm(layer.norm1, add(x, self_att))
        cross = multi_head_attention(layer.cross_attn, x, memory, memory)
        x = layer_norm(layer.norm2, add(x, cross))
        x = layer_norm(layer.norm3, add(x, feed_forward(layer.ffn, x)))
    return x


def clip_window_count(total_frames: int, window: int, stride: int) -> int:
    """Number of fixed-width clip windows covering a frame sequence."""
    if window < 1 or stride < 1:
        raise ValueError(f"window and stride must be positive, got {window}/{stride}")
    if total_frames < window:
        raise ShapeError(
            f"sequence of {total_frames} frames is shorter than one "
            f"{window}-frame window"
        )
    return (total_frames - window) // stride + 1


def embed_clip_features(features: np.ndarray, projection: Parameter) -> Tensor:
    """Project per-window clip descriptors to d_model and add position codes."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f"clip features must be [windows, width], got {features.shape}")
    if features.shape[1] != projection.shape[0]:
        raise ShapeError(
            f"feature width {features.shape[1]} does not match projection "
            f"input {projection.shape[0]}"
        )
    projected = matmul(Tensor(features), projection)
    pe = positional_encoding_matrix(features.shape[0], projection.shape[1])
    return add(projected, Tensor(pe))
