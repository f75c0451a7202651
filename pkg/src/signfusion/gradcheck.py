"""Finite-difference verification suite covering every differentiable path.

Each entry builds a small seeded problem, compares analytic gradients with
central differences, and reports the worst relative error. The full suite
is what the ``gradcheck`` command and the acceptance tests run.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from . import attention, fusion, stgcn
from .autodiff import (
    Parameter,
    Tensor,
    concat,
    conv_temporal,
    div,
    exp,
    grad_check,
    log,
    log_softmax,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid,
    slice_rows,
    softmax,
    sqrt,
    take_rows,
    tanh,
    tensor_mean,
    tensor_sum,
    transpose,
)
from .config import ModelConfig
from .model import Sample, TranslationModel
from .params import ParameterStore
from .skeleton import build_hops, pose_topology
from .training import lsce_loss


class CheckResult(NamedTuple):
    name: str
    error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.error <= self.threshold


def _param(rng, name, shape, scale=1.0, offset=0.0) -> Parameter:
    return Parameter(offset + scale * rng.standard_normal(shape), name)


def _check(name: str, f: Callable, params, threshold: float = 1e-4,
           probes: int = 100, seed: int = 0) -> CheckResult:
    err = grad_check(f, params, eps=1e-5, probes=probes,
                     rng=np.random.default_rng(seed))
    return CheckResult(name=name, error=err, threshold=threshold)


def _elementwise_checks(results):
    rng = np.random.default_rng(11)
    x = _param(rng, "x", (4, 5), scale=0.8, offset=0.0)
    y = _param(rng, "y", (4, 5), scale=0.8)
    b = _param(rng, "b", (5,), scale=0.5)
    pos = Parameter(0.5 + rng.random((4, 5)), "pos")  # strictly positive
    # Keep relu probes away from the kink.
    shifted = Parameter(np.where(np.abs(x.data) < 0.2, 0.5, x.data), "shifted")

    results.append(_check("add_broadcast",
                          lambda: tensor_sum(mul(x + b, y)), [x, y, b]))
    results.append(_check("mul_div",
                          lambda: tensor_sum(div(mul(x, y), pos)), [x, y, pos]))
    results.append(_check("relu", lambda: tensor_sum(mul(relu(shifted), y)),
                          [shifted, y]))
    results.append(_check("sigmoid_tanh",
                          lambda: tensor_sum(mul(sigmoid(x), tanh(y))), [x, y]))
    results.append(_check("exp_log_sqrt",
                          lambda: tensor_sum(mul(exp(mul(x, 0.3)),
                                                 log(sqrt(pos)))), [x, pos]))
    results.append(_check("mean_reduce",
                          lambda: tensor_sum(mul(tensor_mean(x, axis=0,
                                                             keepdims=True), b)),
                          [x, b]))


def _structural_checks(results):
    rng = np.random.default_rng(12)
    a = _param(rng, "a", (3, 4))
    b = _param(rng, "b", (4, 5))
    c = _param(rng, "c", (2, 4))
    table = _param(rng, "table", (6, 3))

    results.append(_check("matmul", lambda: tensor_sum(matmul(a, b)), [a, b]))
    results.append(_check(
        "reshape_transpose",
        lambda: tensor_sum(mul(reshape(transpose(a), (2, 6)), 1.3)), [a]))
    results.append(_check(
        "concat_slice",
        lambda: tensor_sum(slice_rows(concat([a, c], axis=0), 1, 4)), [a, c]))
    results.append(_check(
        "take_rows",
        lambda: tensor_sum(mul(take_rows(table, [0, 2, 2, 5]), 0.7)), [table]))


def _softmax_checks(results):
    rng = np.random.default_rng(13)
    z = _param(rng, "z", (3, 4))
    pick = np.zeros((3, 4))
    pick[0, 1] = 1.0
    results.append(_check(
        "softmax_component",
        lambda: tensor_sum(mul(softmax(z, axis=-1), Tensor(pick))), [z],
        threshold=1e-6))
    mask = np.zeros((3, 4), dtype=bool)
    mask[:, 3] = True
    results.append(_check(
        "masked_softmax",
        lambda: tensor_sum(mul(softmax(z, axis=-1, mask=mask), Tensor(pick))),
        [z]))
    results.append(_check(
        "log_softmax",
        lambda: tensor_sum(mul(log_softmax(z, axis=-1), Tensor(pick))), [z]))


def _conv_checks(results):
    rng = np.random.default_rng(14)
    x = _param(rng, "x", (2, 3, 7))
    k = _param(rng, "k", (4, 2, 1, 3))
    bias = _param(rng, "bias", (4,))
    results.append(_check(
        "conv_temporal",
        lambda: tensor_sum(mul(conv_temporal(x, k, bias), 0.5)), [x, k, bias]))


def _attention_checks(results):
    rng = np.random.default_rng(15)
    d_model, heads, ffn = 8, 2, 12
    q = _param(rng, "q", (3, d_model), scale=0.7)
    mem = _param(rng, "mem", (4, d_model), scale=0.7)

    mha_store = ParameterStore(np.random.default_rng(21))
    mha = attention.build_multi_head(mha_store, "mha", d_model, heads)
    enc_store = ParameterStore(np.random.default_rng(26))
    enc = [attention.build_encoder_layer(enc_store, f"enc{i}", d_model, heads, ffn)
           for i in range(2)]
    dec_store = ParameterStore(np.random.default_rng(27))
    dec = [attention.build_decoder_layer(dec_store, "dec0", d_model, heads, ffn)]

    results.append(_check(
        "scaled_dot_attention",
        lambda: tensor_sum(attention.scaled_dot_attention(q, mem, mem)),
        [q, mem]))
    results.append(_check(
        "multi_head_attention",
        lambda: tensor_sum(attention.multi_head_attention(mha, q, q, q)),
        [q] + mha_store.parameters()))
    results.append(_check(
        "encoder_2_layers",
        lambda: tensor_sum(attention.encoder_forward(enc, q)),
        [q] + enc_store.parameters()))
    results.append(_check(
        "encoder_decoder_end_to_end",
        lambda: tensor_sum(
            attention.decoder_forward(
                dec, q, attention.encoder_forward(enc, mem))),
        [q, mem] + enc_store.parameters() + dec_store.parameters()))


def _stgcn_checks(results):
    topology = pose_topology()
    hops = build_hops(topology, 1)
    store = ParameterStore(np.random.default_rng(22))
    block = stgcn.build_block(store, "block", stgcn.StgcnBlockConfig())
    rng = np.random.default_rng(16)
    x = _param(rng, "pose", (3, 33, 8), scale=0.6)
    results.append(_check(
        "stgcn_block_shipped",
        lambda: tensor_sum(stgcn.stgcn_block_forward(block, x, hops)),
        [x] + store.parameters()))

    cell_store = ParameterStore(np.random.default_rng(23))
    cell = stgcn.build_lstm_cell(cell_store, "cell", 5, 4)
    seq = _param(rng, "seq", (6, 5), scale=0.8)
    readout = Tensor(np.random.default_rng(24).standard_normal((6, 4)))
    results.append(_check(
        "lstm_scalar_readout",
        lambda: tensor_sum(mul(stgcn.lstm_forward(cell, seq), readout)),
        [seq] + cell_store.parameters()))


def _fusion_checks(results):
    rng = np.random.default_rng(17)
    a = _param(rng, "a", (3, 6), scale=0.7)
    b = _param(rng, "b", (3, 6), scale=0.7)
    for strategy in fusion.STRATEGIES:
        store = ParameterStore(np.random.default_rng(25))
        params = fusion.build_fusion(store, "fusion", strategy, 6)
        results.append(_check(
            f"fusion_{strategy}",
            lambda p=params: tensor_sum(fusion.fuse(a, b, p)),
            [a, b] + store.parameters()))


def _loss_checks(results):
    rng = np.random.default_rng(18)
    logits = _param(rng, "logits", (4, 6))
    results.append(_check(
        "lsce_loss",
        lambda: lsce_loss(logits, [1, 4, 0, 2], alpha=0.1), [logits]))
    probe = Parameter(np.array(3.0), "probe_at_three")
    results.append(_check(
        "square", lambda: mul(probe, probe), [probe], threshold=1e-8))


def tiny_config() -> ModelConfig:
    return ModelConfig(
        encoder_layers=2, decoder_layers=1, heads=2, embed_dim=8, ffn_dim=12,
        stgcn_layers=1, lstm_layers=1, feature_dim=4, clip_window=4,
        clip_stride=2, vocab_size=9, dropout=0.0, seed=3,
    )


def _full_model_check(results):
    config = tiny_config()
    model = TranslationModel(config, vocab_size=9)
    rng = np.random.default_rng(19)
    sample = Sample(
        sample_id="probe",
        keypoints=0.4 * rng.standard_normal((8, 33, 3)),
        text="",
    )
    prefix = [1, 5, 6, 4]
    targets = [5, 6, 4, 2]

    def f():
        log_probs = model.forward_log_probs(sample, prefix)
        return lsce_loss(log_probs, targets, alpha=0.1)

    results.append(_check("full_model_end_to_end", f,
                          model.store.parameters(), probes=100))


def run_gradient_suite() -> list:
    """All checks, worst-first ordering preserved as built."""
    results: list[CheckResult] = []
    _elementwise_checks(results)
    _structural_checks(results)
    _softmax_checks(results)
    _conv_checks(results)
    _attention_checks(results)
    _stgcn_checks(results)
    _fusion_checks(results)
    _loss_checks(results)
    _full_model_check(results)
    return results
