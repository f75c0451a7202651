"""Dataset files: keypoint sequences and the manifest that indexes them.

Keypoint files are line-delimited, one frame per line: an integer frame
index followed by 99 reals (33 joints times x y z). Manifests are
tab-separated records ``id<TAB>keypoints<TAB>features-or-dash<TAB>text``
with paths resolved relative to the manifest's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .features import load_features
from .model import Sample

JOINTS = 33
COORDS_PER_FRAME = JOINTS * 3


def load_keypoints(path) -> np.ndarray:
    """Parse a keypoint file into a [frames, 33, 3] float array."""
    source = str(path)
    frames = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != COORDS_PER_FRAME + 1:
                got_joints = (len(fields) - 1) / 3
                raise ParseError(
                    source,
                    f"frame {len(frames)} has {got_joints:g} joints "
                    f"({len(fields) - 1} values), expected {JOINTS}",
                    line=lineno,
                )
            try:
                int(fields[0])
                values = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise ParseError(source, f"non-numeric field: {exc}",
                                 line=lineno) from None
            frames.append(values)
    if not frames:
        raise ParseError(source, "keypoint file contains no frames")
    arr = np.asarray(frames, dtype=np.float64).reshape(len(frames), JOINTS, 3)
    if not np.isfinite(arr).all():
        raise ParseError(source, "keypoint file contains non-finite values")
    return arr


def save_keypoints(path, keypoints: np.ndarray) -> None:
    arr = np.asarray(keypoints, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1:] != (JOINTS, 3):
        raise ValueError(f"keypoints must be [frames, {JOINTS}, 3], got {arr.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        for t in range(arr.shape[0]):
            flat = " ".join(repr(float(v)) for v in arr[t].reshape(-1))
            fh.write(f"{t} {flat}\n")


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    keypoints_path: str
    features_path: str | None
    text: str


@dataclass(frozen=True)
class Manifest:
    records: tuple
    source: str = ""

    def __len__(self) -> int:
        return len(self.records)


def load_manifest(path) -> Manifest:
    source = str(path)
    base = os.path.dirname(os.path.abspath(source))
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ParseError(
                    source,
                    f"expected 4 tab-separated fields, got {len(fields)}",
                    line=lineno,
                )
            sample_id, kp, feat, text = fields
            if sample_id in seen:
                raise ParseError(source, f"duplicate id {sample_id!r}",
                                 line=lineno)
            seen.add(sample_id)
            kp_path = os.path.join(base, kp)
            if not os.path.exists(kp_path):
                raise ParseError(source, f"keypoint file not found: {kp}",
                                 line=lineno)
            feat_path = None
            if feat != "-":
                feat_path = os.path.join(base, feat)
                if not os.path.exists(feat_path):
                    raise ParseError(source, f"feature file not found: {feat}",
                                     line=lineno)
            records.append(ManifestRecord(sample_id, kp_path, feat_path, text))
    return Manifest(records=tuple(records), source=source)


def load_samples(manifest: Manifest) -> list:
    samples = []
    for rec in manifest.records:
        keypoints = load_keypoints(rec.keypoints_path)
        features = load_features(rec.features_path) if rec.features_path else None
        samples.append(
            Sample(sample_id=rec.sample_id, keypoints=keypoints,
                   text=rec.text, features=features)
        )
    return samples
