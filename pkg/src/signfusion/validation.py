"""Input validation helpers shared by the estimator and the data loaders."""

from __future__ import annotations

import numpy as np

JOINTS = 33


def check_pose_sequence(value, name: str = "X") -> np.ndarray:
    """Coerce to a finite [frames, 33, 3] float64 array or raise ValueError."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1] != JOINTS or arr.shape[2] != 3:
        raise ValueError(
            f"{name} must have shape [frames, {JOINTS}, 3], got {arr.shape}"
        )
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one frame")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def check_pose_corpus(X, name: str = "X") -> list:
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    sequences = [check_pose_sequence(x, name=f"{name}[{i}]")
                 for i, x in enumerate(X)]
    if not sequences:
        raise ValueError(f"{name} must contain at least one sequence")
    return sequences


def check_sentences(y, length: int, name: str = "y") -> list:
    sentences = [str(s) for s in y]
    if len(sentences) != length:
        raise ValueError(
            f"{name} has {len(sentences)} sentences for {length} sequences"
        )
    return sentences
