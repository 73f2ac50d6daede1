import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from glsed.corpus.statistics import CooccurrenceTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DFConfig:
    """
    :param m: (float) floor fraction that keeps rare classes from collapsing, 0 <= m < 1.
    :param d: (int) dimension of the encoder output.
    :param r: (Tuple[float]) importance of clips with i = 1, 2, ... labels; missing entries are 0.
    """
    m: float = 0.04
    d: int = 160
    r: Tuple[float, ...] = field(default=(1.0,))

    def __post_init__(self):
        assert 0 <= self.m < 1, "m must lie in [0, 1)"
        assert self.d >= 1, "d must be positive"


@dataclass
class DFAssignment:
    classes: List[str]
    f: np.ndarray
    k: np.ndarray
    d: int

    @property
    def masks(self) -> np.ndarray:
        return make_masks(self.k, self.d)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"event_label": self.classes, "f": self.f, "k": self.k})

    def write_report(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, sep="\t", index=False, float_format="%.6f")


def compute_f(table: CooccurrenceTable, r: Sequence[float] = (1.0,)) -> np.ndarray:
    """
    f_c = sum_i r_i N_ci / R, with R the largest weighted count over classes.
    :param table: (CooccurrenceTable) label co-occurrence counts.
    :param r: (Sequence[float]) importance weights, r[0] for single-label clips.
    """
    counts = table.counts.astype(np.float64)
    weights = np.zeros(counts.shape[1])
    for i in range(1, counts.shape[1]):
        weights[i] = r[i - 1] if i <= len(r) else 0.0
    scores = counts @ weights
    R = scores.max() if scores.size else 0.0
    if R <= 0:
        raise ValueError("no class has a positive weighted count (no single-label clips?)")
    return scores / R


def compute_k(f_c: float, config: DFConfig) -> int:
    """k_c = ceil(((1 - m) f_c + m) d), clipped to [1, d]."""
    assert 0.0 <= f_c <= 1.0, f"f_c must lie in [0, 1], got {f_c}"
    value = ((1.0 - config.m) * f_c + config.m) * config.d
    # float noise must not push an exact integer over the ceiling
    k = math.ceil(round(value, 9))
    return int(min(max(k, 1), config.d))


def make_masks(k: Sequence[int], d: int) -> np.ndarray:
    """mask[c, j] = 1 iff j < k_c."""
    k = np.asarray(k, dtype=np.int64)
    assert np.all((k >= 1) & (k <= d)), "every k_c must lie in [1, d]"
    return (np.arange(d)[None, :] < k[:, None]).astype(np.float32)


def assign(table: CooccurrenceTable, config: DFConfig) -> DFAssignment:
    f = compute_f(table, config.r)
    k = np.array([compute_k(float(v), config) for v in f], dtype=np.int64)
    for name, fc, kc in zip(table.classes, f, k):
        logger.info("DF %-28s f=%.4f k=%d", name, fc, kc)
    return DFAssignment(list(table.classes), f, k, config.d)


def full_assignment(classes: Sequence[str], d: int) -> DFAssignment:
    """All classes see the whole feature space (the ablation without DF)."""
    return DFAssignment(list(classes), np.ones(len(classes)), np.full(len(classes), d, dtype=np.int64), d)
