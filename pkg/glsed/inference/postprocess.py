import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from glsed.algorithms.algorithm.sed_model import clip_prediction
from glsed.corpus.labels import DetectionEvent
from glsed.inference.predict import ClipProbabilitySet

logger = logging.getLogger(__name__)

FIXED_WINDOW = 27


@dataclass
class WindowPlan:
    """Median filter window (in frames) per class."""
    classes: List[str]
    window_frames: np.ndarray
    beta: float
    hop_ms: float

    def __post_init__(self):
        assert np.all(self.window_frames >= 1), "windows must be at least one frame"

    @classmethod
    def fixed(cls, classes: Sequence[str], window: int = FIXED_WINDOW, hop_ms: float = 20.0) -> 'WindowPlan':
        return cls(list(classes), np.full(len(classes), window, dtype=np.int64), float("nan"), hop_ms)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def adaptive_windows(classes: Sequence[str], avg_durations_s: Sequence[Optional[float]], beta: float = 1.0 / 3,
                     hop_ms: float = 20.0, default_window: int = FIXED_WINDOW) -> WindowPlan:
    """
    S_win = average duration (in frames) * beta, rounded half up, at least 1.
    Classes with no known duration fall back to default_window.
    """
    assert beta > 0, "beta must be positive"
    windows = []
    for name, duration in zip(classes, avg_durations_s):
        if duration is None or not np.isfinite(duration):
            logger.warning("no average duration for %s, using window %d", name, default_window)
            windows.append(default_window)
            continue
        assert duration > 0, f"average duration of {name} must be positive"
        frames = duration * 1000.0 / hop_ms
        windows.append(max(1, round_half_up(frames * beta)))
    return WindowPlan(list(classes), np.asarray(windows, dtype=np.int64), beta, hop_ms)


def median_smooth(sequence: np.ndarray, window: int) -> np.ndarray:
    """
    Sliding lower median. Near the ends both sides of the window shrink by the same amount,
    so the window stays (almost) centred on the frame.
    :param sequence: (np.ndarray) 1-D frame values.
    :param window: (int) window length in frames, >= 1.
    """
    assert window >= 1, "window must be at least 1"
    sequence = np.asarray(sequence)
    n = len(sequence)
    if window == 1 or n == 0:
        return sequence.copy()
    left = (window - 1) // 2
    right = window - 1 - left
    out = np.empty_like(sequence)

    # frames whose full window fits inside the sequence
    if n >= window:
        full = np.sort(sliding_window_view(sequence, window), axis=-1)
        out[left:n - right] = full[:, (window - 1) // 2]
        edges = list(range(0, min(left, n))) + list(range(max(n - right, left), n))
    else:
        edges = range(n)
    for t in edges:
        shrink = max(0, left - t, right - (n - 1 - t))
        lo = t - max(left - shrink, 0)
        hi = t + max(right - shrink, 0)
        values = np.sort(sequence[lo:hi + 1])
        out[t] = values[(len(values) - 1) // 2]
    return out


def smooth_to_root(sequence: np.ndarray, window: int, max_passes: Optional[int] = None) -> np.ndarray:
    """
    Repeats median_smooth until the sequence stops changing, so one more pass is a no-op.
    :param max_passes: (int) pass limit, the sequence length by default.
    """
    current = np.asarray(sequence)
    max_passes = max_passes or max(1, len(current))
    for _ in range(max_passes):
        smoothed = median_smooth(current, window)
        if np.array_equal(smoothed, current):
            return smoothed
        current = smoothed
    logger.warning("median smoothing with window %d still changing after %d passes", window, max_passes)
    return current


def runs_to_events(binary: np.ndarray, label: str, hop_ms: float) -> List[DetectionEvent]:
    """Maximal runs of ones as events; frame run [a, b] spans a*hop to (b+1)*hop seconds."""
    padded = np.concatenate([[0], (np.asarray(binary) > 0).astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded))
    hop_s = hop_ms / 1000.0
    return [DetectionEvent(label, round(start * hop_s, 6), round(end * hop_s, 6))
            for start, end in zip(edges[::2], edges[1::2])]


def decode_clip(clip_probs: np.ndarray, frame_probs: np.ndarray, plan: WindowPlan,
                alpha: float = 0.5) -> List[DetectionEvent]:
    """
    Events of one clip: smooth, gate and binarise, smooth the binary sequence again until it settles, extract runs.
    :param clip_probs: (np.ndarray) C clip-level probabilities.
    :param frame_probs: (np.ndarray) T x C frame-level probabilities at feature resolution.
    """
    gate = clip_prediction(clip_probs, alpha)
    events: List[DetectionEvent] = []
    for c, label in enumerate(plan.classes):
        if gate[c] == 0:
            continue
        window = int(plan.window_frames[c])
        smoothed = median_smooth(frame_probs[:, c], window)
        binary = (smoothed * gate[c] >= alpha).astype(np.float32)
        binary = smooth_to_root(binary, window)
        events.extend(runs_to_events(binary, label, plan.hop_ms))
    events.sort(key=lambda e: (e.onset, e.label))
    return events


def decode_events(prob_set: ClipProbabilitySet, plan: WindowPlan, alpha: float = 0.5) -> Dict[str, List[DetectionEvent]]:
    """
    :return events: (Dict[str, List[DetectionEvent]]) detections per clip id (possibly empty lists).
    """
    return {clip_id: decode_clip(prob_set.clip_probs[i], prob_set.frame_probs[i], plan, alpha)
            for i, clip_id in enumerate(prob_set.clip_ids)}


def format_submission(events: Dict[str, List[DetectionEvent]]) -> str:
    """DCASE submission TSV with 3-decimal times; clips without detections are omitted."""
    rows = ["filename\tonset\toffset\tevent_label"]
    for clip_id in sorted(events):
        for event in events[clip_id]:
            rows.append(f"{clip_id}\t{event.onset:.3f}\t{event.offset:.3f}\t{event.label}")
    return "\n".join(rows) + "\n"


def write_submission(events: Dict[str, List[DetectionEvent]], path: Union[str, Path]) -> None:
    Path(path).write_text(format_submission(events), encoding="utf-8")
