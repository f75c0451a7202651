"""Keypoint encoder: stacked graph-convolution blocks followed by an LSTM.

A block takes [channels, joints, frames], widens it with a temporal
convolution, aggregates over the skeleton per hop shell, then runs a
three-stage temporal cascade whose per-stage outputs are concatenated, so
patterns at several temporal scales survive to the output. The LSTM then
summarizes the joint axis away and window pooling aligns the sequence with
the clip stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    concat,
    conv_temporal,
    matmul,
    mul,
    narrow,
    relu,
    reshape,
    sigmoid,
    slice_rows,
    tanh,
    transpose,
)
from .autodiff import Parameter
from .attention import clip_window_count, positional_encoding_matrix
from .params import ParameterStore
from .skeleton import HopAdjacencySet


@dataclass(frozen=True)
class StgcnBlockConfig:
    """Shape plan for one block; defaults reproduce the shipped layout."""

    in_channels: int = 3
    temporal_filters: int = 64
    temporal_width: int = 9
    hops: int = 2
    graph_channels: int = 64
    tcn_widths: tuple = (9, 15, 19)
    tcn_channels: int = 16
    dropout_p: float = 0.1

    def __post_init__(self):
        for w in (self.temporal_width, *self.tcn_widths):
            if w % 2 == 0:
                raise ValueError(f"kernel widths must be odd, got {w}")

    @property
    def out_channels(self) -> int:
        return len(self.tcn_widths) * self.tcn_channels


@dataclass
class StgcnBlockParams:
    temporal_kernel: Parameter
    temporal_bias: Parameter
    hop_weights: list  # per hop: (weight [C_g, C_in + C_u], bias [C_g])
    tcn_kernels: list  # per stage: (kernel [C_l, C_prev, 1, w], bias [C_l])
    config: StgcnBlockConfig = field(repr=False, default=None)


def block_layer_parameter_counts(cfg: StgcnBlockConfig) -> list:
    """Trainable sizes of each weighted layer, in forward order."""
    mixed = cfg.in_channels + cfg.temporal_filters
    counts = [cfg.temporal_filters * cfg.in_channels * cfg.temporal_width
              + cfg.temporal_filters]
    counts += [cfg.graph_channels * mixed + cfg.graph_channels] * cfg.hops
    prev = cfg.hops * cfg.graph_channels
    for w in cfg.tcn_widths:
        counts.append(cfg.tcn_channels * prev * w + cfg.tcn_channels)
        prev = cfg.tcn_channels
    return counts


def block_parameter_count(cfg: StgcnBlockConfig) -> int:
    return sum(block_layer_parameter_counts(cfg))


def build_block(store: ParameterStore, prefix: str,
                cfg: StgcnBlockConfig) -> StgcnBlockParams:
    mixed = cfg.in_channels + cfg.temporal_filters
    kernel = store.uniform(
        f"{prefix}.temporal.kernel",
        (cfg.temporal_filters, cfg.in_channels, 1, cfg.temporal_width),
        fan_in=cfg.in_channels * cfg.temporal_width,
    )
    bias = store.zeros(f"{prefix}.temporal.bias", (cfg.temporal_filters,))
    hop_weights = [
        (
            store.uniform(f"{prefix}.hop{k}.weight", (cfg.graph_channels, mixed),
                          fan_in=mixed),
            store.zeros(f"{prefix}.hop{k}.bias", (cfg.graph_channels,)),
        )
        for k in range(cfg.hops)
    ]
    tcn_kernels = []
    prev = cfg.hops * cfg.graph_channels
    for stage, w in enumerate(cfg.tcn_widths):
        tcn_kernels.append(
            (
                store.uniform(f"{prefix}.tcn{stage}.kernel",
                              (cfg.tcn_channels, prev, 1, w), fan_in=prev * w),
                store.zeros(f"{prefix}.tcn{stage}.bias", (cfg.tcn_channels,)),
            )
        )
        prev = cfg.tcn_channels
    return StgcnBlockParams(
        temporal_kernel=kernel,
        temporal_bias=bias,
        hop_weights=hop_weights,
        tcn_kernels=tcn_kernels,
        config=cfg,
    )


def _channel_dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    # Drops whole channels (leading axis), inverted scaling keeps expectation.
    keep = (rng.random(x.shape[0]) >= p).astype(np.float64) / (1.0 - p)
    return mul(x, Tensor(keep.reshape(-1, 1, 1)))


def _mix_joints(adjacency: np.ndarray, x: Tensor) -> Tensor:
    # [C, N, T] -> aggregate over the joint axis with a constant matrix.
    c, n, t = x.shape
    flat = reshape(transpose(x, (1, 0, 2)), (n, c * t))
    mixed = matmul(Tensor(adjacency), flat)
    return transpose(reshape(mixed, (n, c, t)), (1, 0, 2))


def _channel_map(weight: Parameter, bias: Parameter, x: Tensor) -> Tensor:
    # 1x1 convolution over channels: [C_out, C] applied at every (joint, frame).
    c, n, t = x.shape
    out = matmul(weight, reshape(x, (c, n * t)))
    out = reshape(out, (weight.shape[0], n, t))
    return add(out, reshape(bias, (-1, 1, 1)))


def stgcn_block_forward(params: StgcnBlockParams, x: Tensor,
                        hops: HopAdjacencySet, training: bool = False,
                        rng: np.random.Generator | None = None) -> Tensor:
    """One block: temporal widen, per-hop graph aggregation, TCN cascade."""
    cfg = params.config
    if x.ndim != 3:
        raise ShapeError(f"block input must be [C, N, T], got {x.shape}")
    if x.shape[0] != cfg.in_channels:
        raise ShapeError(
            f"block expects {cfg.in_channels} input channels, got {x.shape[0]}"
        )
    if x.shape[1] != hops.joint_count:
        raise ShapeError(
            f"joint count mismatch: input has {x.shape[1]}, "
            f"hop set has {hops.joint_count}"
        )
    if cfg.hops > hops.max_hop + 1:
        raise ShapeError(
            f"block needs {cfg.hops} hop shells, hop set provides "
            f"{hops.max_hop + 1}"
        )
    widened = relu(conv_temporal(x, params.temporal_kernel, params.temporal_bias))
    mixed = concat([x, widened], axis=0)

    per_hop = []
    for k, (weight, bias) in enumerate(params.hop_weights):
        aggregated = _mix_joints(hops.normalized[k], mixed)
        per_hop.append(relu(_channel_map(weight, bias, aggregated)))
    features = concat(per_hop, axis=0)

    stages = []
    current = features
    drop = training and cfg.dropout_p > 0.0
    if drop and rng is None:
        raise ValueError("training-mode dropout needs an rng")
    for kernel, bias in params.tcn_kernels:
        current = relu(conv_temporal(current, kernel, bias))
        if drop:
            current = _channel_dropout(current, cfg.dropout_p, rng)
        stages.append(current)
    return concat(stages, axis=0)


def stack_blocks(blocks, x: Tensor, hops: HopAdjacencySet,
                 training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    if not blocks:
        raise ShapeError("block stack must contain at least one block")
    for prev, nxt in zip(blocks, blocks[1:]):
        if nxt.config.in_channels != prev.config.out_channels:
            raise ShapeError(
                f"block chain mismatch: {prev.config.out_channels} output "
                f"channels feed a block expecting {nxt.config.in_channels}"
            )
    for block in blocks:
        x = stgcn_block_forward(block, x, hops, training=training, rng=rng)
    return x


GATES = ("f", "i", "o", "c")


@dataclass
class LstmCellParams:
    """Gate weights: input maps W_*, recurrent maps U_*, biases b_*."""

    w: dict
    u: dict
    b: dict
    hidden: int
    input_dim: int


def build_lstm_cell(store: ParameterStore, prefix: str, input_dim: int,
                    hidden: int) -> LstmCellParams:
    w = {g: store.uniform(f"{prefix}.w_{g}", (hidden, input_dim), fan_in=input_dim)
         for g in GATES}
    u = {g: store.uniform(f"{prefix}.u_{g}", (hidden, hidden), fan_in=hidden)
         for g in GATES}
    b = {g: store.zeros(f"{prefix}.b_{g}", (hidden,)) for g in GATES}
    return LstmCellParams(w=w, u=u, b=b, hidden=hidden, input_dim=input_dim)


def lstm_forward(cell: LstmCellParams, seq: Tensor) -> Tensor:
    """Run the gate recurrence over [T, input_dim]; returns all hidden states.

    Gates use the zero initial state: forget/input/output are sigmoids, the
    candidate is a tanh, and the cell state blends the previous cell state
    with the candidate before the output gate reads it out.
    """
    if seq.ndim != 2 or seq.shape[1] != cell.input_dim:
        raise ShapeError(
            f"lstm input must be [T, {cell.input_dim}], got {seq.shape}"
        )
    steps = seq.shape[0]
    width = cell.hidden
    # All four gate maps ride one matrix so each step costs a single product;
    # input projections for every step are hoisted out of the recurrence.
    w_all = concat([cell.w[g] for g in GATES], axis=0)
    u_all_t = transpose(concat([cell.u[g] for g in GATES], axis=0))
    b_all = concat([cell.b[g] for g in GATES], axis=0)
    projected = matmul(seq, transpose(w_all))  # [T, 4 * hidden]

    h = Tensor(np.zeros((1, width)))
    c = Tensor(np.zeros((1, width)))
    outputs = []
    for t in range(steps):
        pre = add(add(slice_rows(projected, t, t + 1), matmul(h, u_all_t)),
                  b_all)
        f_gate = sigmoid(narrow(pre, 1, 0, width))
        i_gate = sigmoid(narrow(pre, 1, width, 2 * width))
        o_gate = sigmoid(narrow(pre, 1, 2 * width, 3 * width))
        candidate = tanh(narrow(pre, 1, 3 * width, 4 * width))
        c = add(mul(f_gate, c), mul(i_gate, candidate))
        h = mul(o_gate, tanh(c))
        outputs.append(h)
    return concat(outputs, axis=0)


def window_pool_matrix(total: int, window: int, stride: int) -> np.ndarray:
    """Constant [windows, total] matrix averaging each clip window."""
    count = clip_window_count(total, window, stride)
    pool = np.zeros((count, total))
    for w in range(count):
        pool[w, w * stride : w * stride + window] = 1.0 / window
    return pool


def keypoint_encode(blocks, lstm_cells, pose_seq: np.ndarray,
                    hops: HopAdjacencySet, window: int = 16, stride: int = 8,
                    add_positions: bool = False, training: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
    """Encode a [T, joints, 3] pose sequence to [windows, hidden].

    The block stack preserves the frame axis, the LSTM collapses joints, and
    mean pooling over the same windows the clip stream uses aligns the two
    stream lengths.
    """
    pose_seq = np.asarray(pose_seq, dtype=np.float64)
    if pose_seq.ndim != 3 or pose_seq.shape[1] != hops.joint_count \
            or pose_seq.shape[2] != 3:
        raise ShapeError(
            f"pose sequence must be [T, {hops.joint_count}, 3], "
            f"got {pose_seq.shape}"
        )
    if not np.isfinite(pose_seq).all():
        raise ValueError("pose sequence contains non-finite coordinates")
    total = pose_seq.shape[0]
    pool = window_pool_matrix(total, window, stride)  # validates total >= window

    x = Tensor(np.ascontiguousarray(pose_seq.transpose(2, 1, 0)))  # [3, N, T]
    features = stack_blocks(blocks, x, hops, training=training, rng=rng)
    c_out, joints, frames = features.shape
    flat = reshape(transpose(features, (2, 1, 0)), (frames, joints * c_out))
    hidden = flat
    for cell in lstm_cells:
        hidden = lstm_forward(cell, hidden)
    pooled = matmul(Tensor(pool), hidden)
    if add_positions:
        pe = positional_encoding_matrix(pooled.shape[0], pooled.shape[1])
        pooled = add(pooled, Tensor(pe))
    return pooled
