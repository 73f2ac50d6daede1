from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np


@dataclass
class MinibatchPlan:
    """
    One epoch of minibatches over L (labeled) and U (unlabeled).
    Batch entries are positions in the concatenated [L; U] arrays; entries >= n_labeled belong to U.
    """
    n_labeled: int
    n_unlabeled: int
    batches: List[np.ndarray]

    @classmethod
    def shuffled(cls, n_labeled: int, n_unlabeled: int, batch_size: int, rng: np.random.Generator) -> 'MinibatchPlan':
        """Shuffle L and U together, so each batch holds both in proportion to their sizes on average."""
        assert batch_size >= 1, "batch size must be positive"
        order = rng.permutation(n_labeled + n_unlabeled)
        batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
        return cls(n_labeled, n_unlabeled, batches)

    def __len__(self) -> int:
        return len(self.batches)

    def is_labeled(self, batch: np.ndarray) -> np.ndarray:
        return batch < self.n_labeled


class TrainingSet:
    """
    In-memory features and weak targets of L followed by U.
    :param features: (np.ndarray) N x T x F features, labeled clips first.
    :param labels: (np.ndarray) N x C multi-hot labels (zeros for unlabeled clips).
    :param n_labeled: (int) number of leading rows that belong to L.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, n_labeled: int) -> None:
        assert features.shape[0] == labels.shape[0], "features and labels disagree on N"
        assert 0 <= n_labeled <= features.shape[0]
        if n_labeled == 0:
            raise ValueError("empty training set: no labeled clips")
        self.features = features
        self.labels = labels
        self.n_labeled = n_labeled

    @property
    def n_unlabeled(self) -> int:
        return self.features.shape[0] - self.n_labeled

    def plan(self, batch_size: int, rng: np.random.Generator, use_unlabeled: bool = True) -> MinibatchPlan:
        return MinibatchPlan.shuffled(self.n_labeled, self.n_unlabeled if use_unlabeled else 0, batch_size, rng)

    def batches(self, plan: MinibatchPlan) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        for batch in plan.batches:
            yield self.features[batch], self.labels[batch], plan.is_labeled(batch)


@dataclass
class ValidationSet:
    """
    Held-out clips scored after every epoch.
    :param features: (np.ndarray) N x T x F features.
    :param clip_ids: (List[str]) ids of the N clips.
    :param tags: (np.ndarray) N x C weakened reference labels for the clip-level score.
    :param refs: (Dict[str, List[DetectionEvent]]) strong reference events per clip.
    :param durations: (Dict[str, float]) clip durations in seconds.
    """
    features: np.ndarray
    clip_ids: List[str]
    tags: np.ndarray
    refs: Dict[str, list]
    durations: Dict[str, float]

    def __post_init__(self):
        assert self.features.shape[0] == len(self.clip_ids) == self.tags.shape[0]
        if len(self.clip_ids) == 0:
            raise ValueError("empty validation set")
