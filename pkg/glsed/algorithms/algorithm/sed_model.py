import hashlib
import logging
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn as nn

from glsed.algorithms.utils.cnn import CNNEncoder, EncoderConfig
from glsed.algorithms.utils.util import check

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class CheckpointMismatchError(ValueError):
    pass


class ProbabilitySet(NamedTuple):
    """
    clip_probs: B x C, frame_probs: B x T' x C, attention: B x C x T' (rows on the simplex),
    contextual: B x C x d.
    """
    clip_probs: torch.Tensor
    frame_probs: torch.Tensor
    attention: torch.Tensor
    contextual: torch.Tensor


class AttentionHead(nn.Module):
    """
    Embedding-level attention pooling with one trainable (w_c, b_c) per class,
    each restricted to the first k_c feature coordinates by a fixed binary mask.
    :param d: (int) feature dimension, also the softmax temperature divisor.
    :param masks: (np.ndarray) C x d binary DF masks.
    """

    def __init__(self, d, masks):
        super(AttentionHead, self).__init__()
        masks = check(masks, dtype=torch.float32)
        assert masks.shape[1] == d, "mask width must equal the feature dimension"
        self.d = d
        self.weight = nn.Parameter(torch.empty(masks.shape[0], d))
        self.bias = nn.Parameter(torch.zeros(masks.shape[0]))
        self.register_buffer("masks", masks)
        nn.init.xavier_uniform_(self.weight)

    def scores(self, x):
        """(w_c . (x_t * mask_c) + b_c) for every frame and class: B x T' x C."""
        return x @ (self.weight * self.masks).t() + self.bias

    def forward(self, x):
        """
        :param x: (torch.Tensor) B x T' x d high-level features.

        :return attention: (torch.Tensor) B x C x T' softmax weights over time.
        :return contextual: (torch.Tensor) B x C x d pooled, masked contextual vectors.
        :return frame_probs: (torch.Tensor) B x T' x C frame-level probabilities.
        """
        if x.shape[-1] != self.d:
            raise ValueError(f"feature dimension {x.shape[-1]} != head dimension {self.d}")
        scores = self.scores(x)
        attention = torch.softmax(scores / self.d, dim=1).transpose(1, 2)
        contextual = torch.einsum("bct,btd->bcd", attention, x) * self.masks
        return attention, contextual, torch.sigmoid(scores)


class Classifier(nn.Module):
    """Independent fully-connected + sigmoid head per class: sigma(u_c . h_c + v_c)."""

    def __init__(self, n_classes, d):
        super(Classifier, self).__init__()
        self.weight = nn.Parameter(torch.empty(n_classes, d))
        self.bias = nn.Parameter(torch.zeros(n_classes))
        nn.init.xavier_uniform_(self.weight)

    def forward(self, contextual):
        return torch.sigmoid((contextual * self.weight).sum(-1) + self.bias)


class SEDModel(nn.Module):
    """
    CNN encoder + attention pooling + per-class classifier.
    :param config: (EncoderConfig) encoder layout (PS or PT).
    :param masks: (np.ndarray) C x d DF masks; all ones disables DF.
    :param device: (torch.device) specifies the device to run on (cpu/gpu).
    """

    def __init__(self, config: EncoderConfig, masks, device=torch.device("cpu")):
        super(SEDModel, self).__init__()
        masks = np.asarray(masks, dtype=np.float32)
        assert masks.shape[1] == config.output_dim, (
            f"DF masks have width {masks.shape[1]} but the encoder outputs d={config.output_dim}")
        self.config = config
        self.n_classes = masks.shape[0]
        self.tpdv = dict(dtype=torch.float32, device=device)

        self.encoder = CNNEncoder(config)
        self.attention = AttentionHead(config.output_dim, masks)
        self.classifier = Classifier(self.n_classes, config.output_dim)

        self.to(device)

    def encode(self, features):
        return self.encoder(check(features, **self.tpdv))

    def forward(self, features) -> ProbabilitySet:
        """
        :param features: (np.ndarray / torch.Tensor) B x T x F log-mel features.

        :return probs: (ProbabilitySet) clip, frame, attention and contextual outputs.
        """
        x = self.encode(features)
        attention, contextual, frame_probs = self.attention(x)
        clip_probs = self.classifier(contextual)
        return ProbabilitySet(clip_probs, frame_probs, attention, contextual)


def clip_prediction(clip_probs, alpha=0.5):
    """1 iff P(y_c | x) >= alpha."""
    assert 0 < alpha < 1, "alpha must lie in (0, 1)"
    return (np.asarray(clip_probs) >= alpha).astype(np.float32)


def frame_prediction(frame_probs, clip_pred, alpha=0.5):
    """
    1 iff p(y_c | x_t) * phi_c(x) >= alpha, so columns of absent classes are all zero.
    :param frame_probs: (np.ndarray) ... x T x C frame-level probabilities.
    :param clip_pred: (np.ndarray) ... x C binary clip-level predictions.
    """
    frame_probs = np.asarray(frame_probs)
    clip_pred = np.asarray(clip_pred)
    assert frame_probs.shape[-1] == clip_pred.shape[-1], "class axes disagree"
    return (frame_probs * clip_pred[..., None, :] >= alpha).astype(np.float32)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def masks_fingerprint(masks) -> str:
    return hashlib.sha1(np.asarray(masks, dtype=np.float32).tobytes()).hexdigest()


def save_checkpoint(path, model: SEDModel, vocabulary_fingerprint: str, feature_fingerprint: str,
                    extra: Optional[dict] = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "state_dict": model.state_dict(),
        "encoder_config": model.config.to_dict(),
        "masks": model.attention.masks.cpu().numpy(),
        "vocabulary_fingerprint": vocabulary_fingerprint,
        "feature_fingerprint": feature_fingerprint,
    }
    if extra:
        payload.update(extra)
    torch.save(payload, str(path))


def load_checkpoint(path, vocabulary_fingerprint: str, feature_fingerprint: Optional[str] = None,
                    device=torch.device("cpu")):
    """
    Rebuild a model from a checkpoint, refusing files made for another vocabulary or frontend.

    :return model: (SEDModel) model in eval mode.
    :return payload: (dict) the raw checkpoint content.
    """
    payload = torch.load(str(path), map_location=device, weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if payload["vocabulary_fingerprint"] != vocabulary_fingerprint:
        raise CheckpointMismatchError(f"{path}: trained for a different event vocabulary")
    if feature_fingerprint is not None and payload["feature_fingerprint"] != feature_fingerprint:
        raise CheckpointMismatchError(f"{path}: trained on features from a different frontend config")
    model = SEDModel(EncoderConfig.from_dict(payload["encoder_config"]), payload["masks"], device=device)
    model.load_state_dict(payload["state_dict"])
    model.feature_fingerprint = payload["feature_fingerprint"]
    model.eval()
    return model, payload
