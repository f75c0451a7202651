"""The two-stream translation model: construction and forward passes.

One sample flows keypoints -> STGCN-LSTM stream and clip features ->
transformer encoder stream; the fused memory conditions a causally masked
decoder whose projected outputs are log-probabilities over the vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import stgcn
from .attention import (
    build_decoder_layer,
    build_encoder_layer,
    decoder_forward,
    embed_clip_features,
    encoder_forward,
)
from .autodiff import ShapeError, Tensor, add, log_softmax, matmul
from .config import ModelConfig
from .features import features_for_sample
from .fusion import build_fusion, fuse
from .params import ParameterStore
from .skeleton import build_hops, pose_topology
from .tokenizer import Vocabulary, embed_target


@dataclass
class Sample:
    """One dataset record: keypoints, optional clip features, reference text."""

    sample_id: str
    keypoints: np.ndarray
    text: str
    features: np.ndarray | None = None
    token_ids: list = field(default_factory=list)


class TranslationModel:
    """Owns every trainable parameter plus the frozen skeleton constants."""

    def __init__(self, config: ModelConfig, vocab_size: int, seed: int | None = None):
        config.validate()
        if vocab_size < 5:
            raise ValueError(f"vocabulary too small to decode: {vocab_size}")
        self.config = config
        self.vocab_size = vocab_size
        self.topology = pose_topology()
        self.hops = build_hops(self.topology, max_hop=1)
        rng = np.random.default_rng(config.seed if seed is None else seed)
        store = ParameterStore(rng)
        self.store = store

        self.blocks = []
        for i in range(config.stgcn_layers):
            block_cfg = stgcn.StgcnBlockConfig(
                in_channels=3 if i == 0 else stgcn.StgcnBlockConfig().out_channels,
                dropout_p=config.dropout,
            )
            self.blocks.append(stgcn.build_block(store, f"stgcn.block{i}", block_cfg))

        joint_features = self.topology.joint_count * self.blocks[-1].config.out_channels
        self.lstm_cells = []
        for i in range(config.lstm_layers):
            input_dim = joint_features if i == 0 else config.embed_dim
            self.lstm_cells.append(
                stgcn.build_lstm_cell(store, f"keypoint.lstm{i}", input_dim,
                                      config.embed_dim)
            )

        self.feature_projection = store.uniform(
            "video.projection", (config.feature_dim, config.embed_dim)
        )
        self.encoder_layers = [
            build_encoder_layer(store, f"encoder.layer{i}", config.embed_dim,
                                config.heads, config.ffn_dim)
            for i in range(config.encoder_layers)
        ]
        self.decoder_layers = [
            build_decoder_layer(store, f"decoder.layer{i}", config.embed_dim,
                                config.heads, config.ffn_dim)
            for i in range(config.decoder_layers)
        ]
        self.fusion = build_fusion(store, "fusion", config.fusion, config.embed_dim)
        self.embedding = store.uniform("text.embedding",
                                       (vocab_size, config.embed_dim))
        self.out_weight = store.uniform("output.weight",
                                        (config.embed_dim, vocab_size))
        self.out_bias = store.zeros("output.bias", (vocab_size,))

    # Construction metadata -------------------------------------------------

    def parameter_count(self) -> int:
        return self.store.total_size()

    def stgcn_block_parameter_count(self) -> int:
        return stgcn.block_parameter_count(self.blocks[0].config)

    # Forward passes ---------------------------------------------------------

    def encode_memory(self, sample: Sample, training: bool = False,
                      rng: np.random.Generator | None = None) -> Tensor:
        """Run both streams and fuse them into the decoder memory."""
        cfg = self.config
        if sample.keypoints is None:
            raise ValueError(f"sample {sample.sample_id!r} is missing keypoints")
        keypoint_encoding = stgcn.keypoint_encode(
            self.blocks, self.lstm_cells, sample.keypoints, self.hops,
            window=cfg.clip_window, stride=cfg.clip_stride,
            add_positions=cfg.keypoint_positions, training=training, rng=rng,
        )
        clip_features = features_for_sample(
            np.asarray(sample.keypoints, dtype=np.float64), sample.features,
            cfg.feature_dim, cfg.clip_window, cfg.clip_stride,
        )
        embedded = embed_clip_features(clip_features, self.feature_projection)
        clip_encoding = encoder_forward(self.encoder_layers, embedded)
        return fuse(clip_encoding, keypoint_encoding, self.fusion)

    def decode_log_probs(self, memory: Tensor, prefix_ids) -> Tensor:
        """Log-probabilities [len(prefix), V] of the next token per position."""
        prefix_ids = list(prefix_ids)
        if not prefix_ids:
            raise ShapeError("decoder prefix must contain at least <bos>")
        target = embed_target(self.embedding, prefix_ids)
        decoded = decoder_forward(self.decoder_layers, target, memory)
        logits = add(matmul(decoded, self.out_weight), self.out_bias)
        return log_softmax(logits, axis=-1)

    def forward_log_probs(self, sample: Sample, prefix_ids,
                          training: bool = False,
                          rng: np.random.Generator | None = None) -> Tensor:
        memory = self.encode_memory(sample, training=training, rng=rng)
        return self.decode_log_probs(memory, prefix_ids)

    def step_fn(self, sample: Sample):
        """Next-token distribution closure for the decoding searches.

        The memory is computed once and reused across decode steps.
        """
        memory = self.encode_memory(sample, training=False)

        def step(prefix_ids) -> np.ndarray:
            return self.decode_log_probs(memory, prefix_ids).data[-1]

        return step


def build_model(config: ModelConfig, vocab: Vocabulary) -> TranslationModel:
    return TranslationModel(config, vocab_size=len(vocab))
