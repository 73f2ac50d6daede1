import hashlib
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

DCASE_CLASSES = (
    "Alarm_bell_ringing",
    "Blender",
    "Cat",
    "Dishes",
    "Dog",
    "Electric_shaver_toothbrush",
    "Frying",
    "Running_water",
    "Speech",
    "Vacuum_cleaner",
)


class EventVocabulary:
    """
    Ordered set of event classes with the per-class quantities the pipeline attaches to them.
    :param classes: (Sequence[str]) class names, in model output order.
    :param avg_duration_s: (Dict[str, float]) average event duration per class, if known.
    :param df_dim: (Dict[str, int]) disentangled feature dimension per class, if assigned.
    :param window_frames: (Dict[str, int]) median filter window per class, if planned.
    """

    def __init__(self, classes: Sequence[str],
                 avg_duration_s: Optional[Dict[str, float]] = None,
                 df_dim: Optional[Dict[str, int]] = None,
                 window_frames: Optional[Dict[str, int]] = None) -> None:
        assert len(classes) > 0, "a vocabulary needs at least one class"
        assert len(set(classes)) == len(classes), "duplicate class names"
        self.__classes = tuple(classes)
        self.__index = {name: i for i, name in enumerate(self.__classes)}
        self.avg_duration_s = dict(avg_duration_s or {})
        self.df_dim = dict(df_dim or {})
        self.window_frames = dict(window_frames or {})

    @classmethod
    def dcase(cls) -> 'EventVocabulary':
        return cls(DCASE_CLASSES)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> 'EventVocabulary':
        """Build a vocabulary in the fixed alphabetical order used for indexing."""
        return cls(sorted(set(n.strip() for n in names if n.strip())))

    @property
    def classes(self) -> List[str]:
        return list(self.__classes)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha1("\n".join(self.__classes).encode("utf-8")).hexdigest()

    def __len__(self) -> int:
        return len(self.__classes)

    def __contains__(self, name: str) -> bool:
        return name in self.__index

    def __iter__(self):
        return iter(self.__classes)

    def index(self, name: str) -> int:
        return self.__index[name]

    def encode(self, events: Iterable[str]) -> np.ndarray:
        """Multi-hot vector y with y_c = 1 iff class c is in events."""
        y = np.zeros(len(self), dtype=np.float32)
        for name in events:
            y[self.__index[name]] = 1.0
        return y

    def decode(self, y: Sequence[float]) -> List[str]:
        return [name for name, v in zip(self.__classes, y) if v >= 0.5]

    def durations(self, default: Optional[float] = None) -> List[Optional[float]]:
        return [self.avg_duration_s.get(name, default) for name in self.__classes]

    def to_frame(self) -> pd.DataFrame:
        """Per-class table of average duration, DF dimension and median window; unknown entries are empty."""
        return pd.DataFrame({
            "event_label": self.classes,
            "avg_duration": [self.avg_duration_s.get(name, np.nan) for name in self.__classes],
            "df_dim": pd.array([self.df_dim.get(name) for name in self.__classes], dtype="Int64"),
            "window": pd.array([self.window_frames.get(name) for name in self.__classes], dtype="Int64"),
        })
