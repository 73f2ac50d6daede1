import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import torch

from glsed.algorithms.algorithm.sed_model import CheckpointMismatchError, SEDModel
from glsed.features.logmel import FeatureConfig
from glsed.features.store import read_probabilities, storage_name, write_probabilities
from glsed.utils.util import _t2n

logger = logging.getLogger(__name__)


@dataclass
class ClipProbabilitySet:
    """
    Model outputs for a list of clips, frame axis at feature resolution.
    clip_probs: N x C, frame_probs: N x T x C.
    """
    clip_ids: List[str]
    clip_probs: np.ndarray
    frame_probs: np.ndarray

    def __post_init__(self):
        assert self.clip_probs.shape[0] == self.frame_probs.shape[0] == len(self.clip_ids)
        assert self.clip_probs.shape[1] == self.frame_probs.shape[2]

    def save(self, directory: Union[str, Path]) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i, clip_id in enumerate(self.clip_ids):
            write_probabilities(directory / storage_name(clip_id), self.clip_probs[i], self.frame_probs[i])
        (directory / "clips.txt").write_text("\n".join(self.clip_ids) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: Union[str, Path]) -> 'ClipProbabilitySet':
        directory = Path(directory)
        clip_ids = (directory / "clips.txt").read_text(encoding="utf-8").split()
        pairs = [read_probabilities(directory / storage_name(c)) for c in clip_ids]
        return cls(clip_ids, np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs]))


def upsample_frames(frame_probs: np.ndarray, target: int, pooling: Optional[int] = None) -> np.ndarray:
    """
    Nearest-neighbour repetition of the frame axis (axis -2) up to target frames.
    :param pooling: (int) encoder time pooling. Output frame t then covers input frames [t * pooling, (t + 1) * pooling)
        and the tail dropped by the pooling repeats the last frame. Without it the frames are stretched over target.
    """
    n = frame_probs.shape[-2]
    if n == target:
        return frame_probs
    if pooling:
        index = np.minimum(np.arange(target) // pooling, n - 1)
    else:
        index = (np.arange(target) * n) // target
    return np.take(frame_probs, index, axis=-2)


@torch.no_grad()
def predict(model: SEDModel, features: np.ndarray, clip_ids: Sequence[str],
            feature_config: Optional[FeatureConfig] = None, batch_size: int = 64) -> ClipProbabilitySet:
    """
    Inference-mode forward passes over a stack of clips.
    :param model: (SEDModel) trained model.
    :param features: (np.ndarray) N x T x F features.
    :param clip_ids: (Sequence[str]) ids of the N clips.
    :param feature_config: (FeatureConfig) frontend the features came from, checked against the model.
    :param batch_size: (int) clips per forward pass.

    :return probs: (ClipProbabilitySet) probabilities with frame axis of length T.
    """
    expected = getattr(model, "feature_fingerprint", None)
    if feature_config is not None and expected is not None and expected != feature_config.fingerprint:
        raise CheckpointMismatchError("model was trained on features from a different frontend config")
    model.eval()
    clip_parts, frame_parts = [], []
    for i in range(0, features.shape[0], batch_size):
        out = model(features[i:i + batch_size])
        clip_parts.append(_t2n(out.clip_probs))
        frame_parts.append(_t2n(out.frame_probs))
    target = features.shape[1]
    frame_probs = upsample_frames(np.concatenate(frame_parts), target, model.config.time_pooling)
    return ClipProbabilitySet(list(clip_ids), np.concatenate(clip_parts), frame_probs)


def ensemble(prob_sets: Sequence[ClipProbabilitySet]) -> ClipProbabilitySet:
    """Arithmetic mean of clip- and frame-level probabilities over models."""
    if not prob_sets:
        raise ValueError("nothing to ensemble")
    first = prob_sets[0]
    for other in prob_sets[1:]:
        if other.clip_ids != first.clip_ids:
            raise ValueError("probability sets cover different clips")
        if other.clip_probs.shape != first.clip_probs.shape or other.frame_probs.shape != first.frame_probs.shape:
            raise ValueError("probability sets have different shapes")
    if len(prob_sets) == 1:
        return first
    # float64 accumulation: k identical members average back to the member exactly
    clip_probs = np.mean([p.clip_probs for p in prob_sets], axis=0, dtype=np.float64).astype(first.clip_probs.dtype)
    frame_probs = np.mean([p.frame_probs for p in prob_sets], axis=0, dtype=np.float64).astype(first.frame_probs.dtype)
    return ClipProbabilitySet(list(first.clip_ids), clip_probs, frame_probs)
