"""Clip-level feature vectors: file ingestion and the synthetic fallback.

The pretrained video network is abstracted behind a provider that yields one
fixed-width descriptor per clip window. Descriptors can be read from FEAT1
binaries named in the manifest; samples without a feature file fall back to
a deterministic synthetic provider that aggregates per-frame keypoint
statistics over each window and passes them through a fixed random
projection.
"""

from __future__ import annotations

import struct

import numpy as np

from .attention import clip_window_count
from .errors import ParseError

FEATURE_MAGIC = b"FEAT1"
SYNTHETIC_SEED = 7


def save_features(path, features: np.ndarray) -> None:
    arr = np.asarray(features, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"features must be [windows, width], got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def load_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    source = str(path)
    if len(blob) < len(FEATURE_MAGIC) + 8:
        raise ParseError(source, "feature file too short for its header")
    if blob[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise ParseError(source, "bad feature-file magic")
    count, width = struct.unpack_from("<II", blob, len(FEATURE_MAGIC))
    expected = len(FEATURE_MAGIC) + 8 + 4 * count * width
    if len(blob) != expected:
        raise ParseError(
            source,
            f"feature payload truncated: expected {expected} bytes, "
            f"got {len(blob)}",
        )
    data = np.frombuffer(blob, dtype="<f4", offset=len(FEATURE_MAGIC) + 8)
    return data.reshape(count, width).astype(np.float64)


class SyntheticClipFeatures:
    """Deterministic window descriptors derived from the pose sequence.

    Per window: mean and standard deviation of the flattened coordinates
    across frames, projected through a seeded Gaussian matrix. The seed is a
    fixed constant so features are a pure function of the input.
    """

    def __init__(self, width: int = 64, window: int = 16, stride: int = 8,
                 seed: int = SYNTHETIC_SEED):
        self.width = width
        self.window = window
        self.stride = stride
        self._seed = seed
        self._projection: np.ndarray | None = None

    def _matrix(self, stat_width: int) -> np.ndarray:
        if self._projection is None or self._projection.shape[0] != stat_width:
            rng = np.random.default_rng(self._seed)
            self._projection = rng.standard_normal((stat_width, self.width))
            self._projection /= np.sqrt(stat_width)
        return self._projection

    def features(self, keypoints: np.ndarray) -> np.ndarray:
        kp = np.asarray(keypoints, dtype=np.float64)
        frames = kp.shape[0]
        flat = kp.reshape(frames, -1)
        count = clip_window_count(frames, self.window, self.stride)
        stats = np.empty((count, 2 * flat.shape[1]))
        for w in range(count):
            chunk = flat[w * self.stride : w * self.stride + self.window]
            stats[w, : flat.shape[1]] = chunk.mean(axis=0)
            stats[w, flat.shape[1] :] = chunk.std(axis=0)
        return stats @ self._matrix(stats.shape[1])


def features_for_sample(keypoints: np.ndarray, features: np.ndarray | None,
                        width: int, window: int, stride: int) -> np.ndarray:
    """Resolve a sample's clip features, checking window-count agreement."""
    expected = clip_window_count(keypoints.shape[0], window, stride)
    if features is None:
        provider = SyntheticClipFeatures(width=width, window=window, stride=stride)
        return provider.features(keypoints)
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != expected:
        raise ValueError(
            f"feature file has {features.shape[0]} windows but the keypoint "
            f"sequence yields {expected}"
        )
    if features.shape[1] != width:
        raise ValueError(
            f"feature width {features.shape[1]} does not match the configured "
            f"width {width}"
        )
    return features
