"""Combining the clip-stream and keypoint-stream encodings into one memory.

Three interchangeable strategies, all mapping a pair of [T, d] sequences to
one [T, d] sequence: elementwise summation (the default), a linear map of
the concatenation, or an LSTM run over the concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Parameter, ShapeError, Tensor, add, concat, matmul
from .params import ParameterStore
from .stgcn import LstmCellParams, build_lstm_cell, lstm_forward

STRATEGIES = ("summation", "linear", "lstm")


@dataclass
class FusionParams:
    strategy: str
    weight: Parameter | None = None
    bias: Parameter | None = None
    cell: LstmCellParams | None = None


def build_fusion(store: ParameterStore, prefix: str, strategy: str,
                 d_model: int) -> FusionParams:
    if strategy not in STRATEGIES:
        raise ValueError(
            f"unknown fusion strategy {strategy!r}; expected one of {STRATEGIES}"
        )
    if strategy == "summation":
        return FusionParams(strategy=strategy)
    if strategy == "linear":
        return FusionParams(
            strategy=strategy,
            weight=store.uniform(f"{prefix}.weight", (2 * d_model, d_model)),
            bias=store.zeros(f"{prefix}.bias", (d_model,)),
        )
    return FusionParams(
        strategy=strategy,
        cell=build_lstm_cell(store, f"{prefix}.cell", 2 * d_model, d_model),
    )


def fuse(clip_encoding: Tensor, keypoint_encoding: Tensor,
         params: FusionParams) -> Tensor:
    if clip_encoding.shape != keypoint_encoding.shape:
        raise ShapeError(
            f"fusion inputs must match: clip stream {clip_encoding.shape} vs "
            f"keypoint stream {keypoint_encoding.shape}"
        )
    if params.strategy == "summation":
        return add(clip_encoding, keypoint_encoding)
    merged = concat([clip_encoding, keypoint_encoding], axis=1)
    if params.strategy == "linear":
        return add(matmul(merged, params.weight), params.bias)
    return lstm_forward(params.cell, merged)
