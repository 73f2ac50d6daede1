import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd

from glsed.corpus.vocabulary import EventVocabulary

logger = logging.getLogger(__name__)

SUBSETS = ("weak", "unlabeled", "synthetic", "validation")
CLIP_DURATION_S = 10.0


class LabelFormatError(ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None) -> None:
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super(LabelFormatError, self).__init__(message)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionEvent:
    label: str
    onset: float
    offset: float


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    audio_path: str
    subset: str
    duration_s: float = CLIP_DURATION_S


@dataclass(frozen=True)
class WeakLabel:
    clip_id: str
    events: FrozenSet[str] = frozenset()


@dataclass(frozen=True)
class StrongAnnotation:
    clip_id: str
    events: Tuple[DetectionEvent, ...] = field(default_factory=tuple)


def _lines(text: str) -> Iterable[Tuple[int, List[str]]]:
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        yield number, line.split("\t")


def _is_header(fields: List[str]) -> bool:
    return fields[0].strip().lower() in ("filename", "clip_id")


def parse_weak_labels(text: str, vocabulary: EventVocabulary) -> List[WeakLabel]:
    """
    Parse a weak-label TSV ("filename<TAB>label,label,...").
    :param text: (str) file content; an optional one-line header is skipped.
    :param vocabulary: (EventVocabulary) allowed class names.

    :return labels: (List[WeakLabel]) one label set per clip, in file order.
    """
    merged: Dict[str, set] = {}
    for i, (number, fields) in enumerate(_lines(text)):
        if i == 0 and _is_header(fields):
            continue
        if len(fields) != 2 or not fields[0].strip():
            raise LabelFormatError("expected 'filename<TAB>labels'", number)
        names = [n.strip() for n in fields[1].split(",") if n.strip()]
        if not names:
            raise LabelFormatError(f"no labels for {fields[0].strip()}", number)
        for name in names:
            if name not in vocabulary:
                raise LabelFormatError(f"unknown class '{name}'", number)
        # duplicate (clip, class) pairs collapse to one
        merged.setdefault(fields[0].strip(), set()).update(names)
    return [WeakLabel(clip_id, frozenset(events)) for clip_id, events in merged.items()]


def _parse_time(value: str, number: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise LabelFormatError(f"non-numeric time '{value}'", number) from None


def parse_strong_labels(text: str, vocabulary: Optional[EventVocabulary] = None) -> List[StrongAnnotation]:
    """
    Parse a strong-label TSV ("filename<TAB>onset<TAB>offset<TAB>event_label").
    A line holding only a filename declares a clip without events.
    :param text: (str) file content; an optional one-line header is skipped.
    :param vocabulary: (EventVocabulary) if given, labels outside it are rejected.

    :return annotations: (List[StrongAnnotation]) events grouped by clip and ordered by onset.
    """
    grouped: Dict[str, List[DetectionEvent]] = {}
    for i, (number, fields) in enumerate(_lines(text)):
        if i == 0 and _is_header(fields):
            continue
        clip_id = fields[0].strip()
        if not clip_id:
            raise LabelFormatError("missing filename", number)
        rest = [f.strip() for f in fields[1:]]
        if not any(rest):
            grouped.setdefault(clip_id, [])
            continue
        if len(fields) != 4:
            raise LabelFormatError("expected 'filename<TAB>onset<TAB>offset<TAB>event_label'", number)
        onset, offset = _parse_time(rest[0], number), _parse_time(rest[1], number)
        label = rest[2]
        if offset <= onset:
            raise LabelFormatError(f"inverted interval {onset} >= {offset}", number)
        if onset < 0:
            raise LabelFormatError(f"negative onset {onset}", number)
        if vocabulary is not None and label not in vocabulary:
            raise LabelFormatError(f"unknown class '{label}'", number)
        grouped.setdefault(clip_id, []).append(DetectionEvent(label, onset, offset))
    return [
        StrongAnnotation(clip_id, tuple(sorted(events, key=lambda e: (e.onset, e.offset, e.label))))
        for clip_id, events in grouped.items()
    ]


def format_weak_labels(labels: Sequence[WeakLabel]) -> str:
    rows = ["filename\tevent_labels"]
    rows.extend(f"{label.clip_id}\t{','.join(sorted(label.events))}" for label in labels)
    return "\n".join(rows) + "\n"


def format_strong_labels(annotations: Sequence[StrongAnnotation]) -> str:
    rows = ["filename\tonset\toffset\tevent_label"]
    for annotation in annotations:
        if not annotation.events:
            rows.append(annotation.clip_id)
        for event in annotation.events:
            rows.append(f"{annotation.clip_id}\t{event.onset:.3f}\t{event.offset:.3f}\t{event.label}")
    return "\n".join(rows) + "\n"


def weaken(annotations: Sequence[StrongAnnotation]) -> List[WeakLabel]:
    """Drop timestamps: each clip keeps the set of distinct classes it contains."""
    return [WeakLabel(a.clip_id, frozenset(e.label for e in a.events)) for a in annotations]


def check_event_ranges(annotations: Sequence[StrongAnnotation], durations: Dict[str, float]) -> None:
    for annotation in annotations:
        duration = durations.get(annotation.clip_id, CLIP_DURATION_S)
        for event in annotation.events:
            if not 0 <= event.onset < event.offset <= duration + 1e-6:
                raise LabelFormatError(
                    f"{annotation.clip_id}: event {event.label} ({event.onset}, {event.offset}) "
                    f"outside [0, {duration}]")


def read_labels(path: Union[str, Path], vocabulary: EventVocabulary, strong: bool):
    text = Path(path).read_text(encoding="utf-8")
    if strong:
        return parse_strong_labels(text, vocabulary)
    return parse_weak_labels(text, vocabulary)


def read_manifest(path: Union[str, Path]) -> List[ClipRecord]:
    """
    Read the clip manifest TSV with columns clip_id, path, subset, duration.
    :param path: (str / Path) manifest location.

    :return clips: (List[ClipRecord]) records in file order.
    """
    frame = pd.read_csv(path, sep="\t", dtype={"clip_id": str, "path": str, "subset": str})
    missing = {"clip_id", "path", "subset", "duration"} - set(frame.columns)
    if missing:
        raise ManifestError(f"{path}: missing columns {sorted(missing)}")
    if frame["clip_id"].duplicated().any():
        dupes = frame.loc[frame["clip_id"].duplicated(), "clip_id"].tolist()
        raise ManifestError(f"{path}: duplicate clip ids {dupes[:5]}")
    bad_subset = ~frame["subset"].isin(SUBSETS)
    if bad_subset.any():
        raise ManifestError(f"{path}: unknown subset(s) {sorted(frame.loc[bad_subset, 'subset'].unique())}")
    if (frame["duration"] <= 0).any():
        raise ManifestError(f"{path}: durations must be positive")
    return [ClipRecord(r.clip_id, r.path, r.subset, float(r.duration)) for r in frame.itertuples(index=False)]


def write_manifest(clips: Sequence[ClipRecord], path: Union[str, Path]) -> None:
    frame = pd.DataFrame(
        [(c.clip_id, c.audio_path, c.subset, c.duration_s) for c in clips],
        columns=["clip_id", "path", "subset", "duration"],
    )
    frame.to_csv(path, sep="\t", index=False, float_format="%.3f")
