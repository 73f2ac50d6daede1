import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

VARIANTS = ("event", "segment", "clip")


class EventRangeError(ValueError):
    pass


@dataclass(frozen=True)
class CollarConfig:
    """
    Tolerances for event matching. Onsets and offsets share one absolute collar.
    :param onset_collar: (float) seconds allowed between reference and system onsets.
    :param offset_collar_abs: (float) minimum seconds allowed between offsets; equal to onset_collar.
    :param offset_collar_rel: (float) offset tolerance as a fraction of the reference event length, in [0, 1].
    :param segment_length: (float) segment size of the segment-based measure, in seconds.
    """
    onset_collar: float = 0.2
    offset_collar_abs: float = 0.2
    offset_collar_rel: float = 0.2
    segment_length: float = 1.0

    def __post_init__(self):
        for name in ("onset_collar", "offset_collar_abs", "segment_length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.offset_collar_rel <= 1.0:
            raise ValueError("offset_collar_rel must lie in [0, 1]")
        if self.onset_collar != self.offset_collar_abs:
            raise ValueError("onset_collar and offset_collar_abs must be equal")


def safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class ScoreReport:
    """Pooled per-class counts with derived precision, recall and F1 (0 whenever a denominator is 0)."""
    variant: str
    classes: List[str]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __post_init__(self):
        assert self.variant in VARIANTS, f"unknown score variant {self.variant}"
        self.tp = np.asarray(self.tp, dtype=np.int64)
        self.fp = np.asarray(self.fp, dtype=np.int64)
        self.fn = np.asarray(self.fn, dtype=np.int64)
        assert self.tp.shape == self.fp.shape == self.fn.shape == (len(self.classes),)

    @property
    def precision(self) -> np.ndarray:
        return safe_divide(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> np.ndarray:
        return safe_divide(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        return safe_divide(2 * p * r, p + r)

    @property
    def macro_f1(self) -> float:
        if len(self.classes) == 0:
            return 0.0
        return float(np.mean(self.f1))

    def class_f1(self) -> Dict[str, float]:
        return dict(zip(self.classes, self.f1.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"event_label": self.classes, "tp": self.tp, "fp": self.fp, "fn": self.fn,
                             "precision": self.precision, "recall": self.recall, "f1": self.f1})

    def summary(self) -> dict:
        return {"variant": self.variant, "macro_f1": self.macro_f1,
                "class_f1": self.class_f1(),
                "tp": int(self.tp.sum()), "fp": int(self.fp.sum()), "fn": int(self.fn.sum())}

    def write(self, directory: Union[str, Path]) -> None:
        """Writes <variant>_scores.tsv and <variant>_summary.json."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(directory / f"{self.variant}_scores.tsv", sep="\t", index=False, float_format="%.6f")
        with open(directory / f"{self.variant}_summary.json", "w") as f:
            json.dump(self.summary(), f, indent=2)

    def __str__(self) -> str:
        lines = [f"{self.variant}-based macro F1: {self.macro_f1 * 100:.2f}%"]
        for name, p, r, f in zip(self.classes, self.precision, self.recall, self.f1):
            lines.append(f"  {name:<28s} P {p * 100:6.2f}%  R {r * 100:6.2f}%  F1 {f * 100:6.2f}%")
        return "\n".join(lines)
