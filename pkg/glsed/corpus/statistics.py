from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from glsed.corpus.labels import StrongAnnotation, WeakLabel
from glsed.corpus.vocabulary import EventVocabulary


@dataclass
class CooccurrenceTable:
    """counts[c, i] = number of clips with exactly i classes that include class c (column 0 unused)."""
    classes: List[str]
    counts: np.ndarray

    @property
    def max_cardinality(self) -> int:
        return self.counts.shape[1] - 1

    def single_label_counts(self) -> np.ndarray:
        if self.max_cardinality < 1:
            return np.zeros(len(self.classes), dtype=np.int64)
        return self.counts[:, 1].copy()


def count_cooccurrence(labels: Sequence[WeakLabel], vocabulary: EventVocabulary) -> CooccurrenceTable:
    """
    Count N_ci over a set of weak labels. The table is sized to the largest label set observed.
    :param labels: (Sequence[WeakLabel]) training labels.
    :param vocabulary: (EventVocabulary) class order of the table rows.

    :return table: (CooccurrenceTable) integer counts, shape (C, max_cardinality + 1).
    """
    max_cardinality = max((len(label.events) for label in labels), default=0)
    counts = np.zeros((len(vocabulary), max_cardinality + 1), dtype=np.int64)
    for label in labels:
        i = len(label.events)
        for name in label.events:
            counts[vocabulary.index(name), i] += 1
    return CooccurrenceTable(vocabulary.classes, counts)


@dataclass
class EventStatistics:
    classes: List[str]
    total_duration_s: np.ndarray
    event_count: np.ndarray

    @property
    def avg_duration_s(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.event_count > 0, self.total_duration_s / np.maximum(self.event_count, 1), np.nan)


def event_statistics(annotations: Sequence[StrongAnnotation], vocabulary: EventVocabulary) -> EventStatistics:
    total = np.zeros(len(vocabulary))
    count = np.zeros(len(vocabulary), dtype=np.int64)
    for annotation in annotations:
        for event in annotation.events:
            c = vocabulary.index(event.label)
            total[c] += event.offset - event.onset
            count[c] += 1
    return EventStatistics(vocabulary.classes, total, count)


def write_durations(stats: EventStatistics, path: Union[str, Path]) -> None:
    frame = pd.DataFrame({
        "event_label": stats.classes,
        "avg_duration": stats.avg_duration_s,
        "total_duration": stats.total_duration_s,
        "count": stats.event_count,
    })
    frame.to_csv(path, sep="\t", index=False, float_format="%.4f")


def read_durations(path: Union[str, Path]) -> Dict[str, float]:
    frame = pd.read_csv(path, sep="\t")
    frame = frame.dropna(subset=["avg_duration"])
    return {str(row.event_label): float(row.avg_duration) for row in frame.itertuples(index=False)}
