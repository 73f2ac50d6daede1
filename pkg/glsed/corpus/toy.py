"""Toy corpus: tone bursts vs noise bursts, laid out like the DCASE task 4 data."""
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import soundfile as sf

from glsed.corpus.labels import (ClipRecord, DetectionEvent, StrongAnnotation, WeakLabel, format_strong_labels,
                                 format_weak_labels, write_manifest)

logger = logging.getLogger(__name__)

TOY_CLASSES = ("Noise", "Tone")
TOY_SIZES = {"weak": 200, "unlabeled": 400, "synthetic": 200, "validation": 60}


def _place(rng: np.random.Generator, n_events: int, low: float, high: float,
           duration: float) -> List[Tuple[float, float]]:
    """Non-overlapping intervals, lengths in [low, high], inside [0, duration]."""
    intervals = []
    for _ in range(n_events * 10):
        if len(intervals) == n_events:
            break
        length = rng.uniform(low, high)
        onset = round(rng.uniform(0.0, duration - length), 2)
        offset = round(onset + length, 2)
        if all(offset <= a or onset >= b for a, b in intervals):
            intervals.append((onset, offset))
    return sorted(intervals)


def synthesize_clip(rng: np.random.Generator, sample_rate: int, duration: float,
                    require_event: bool) -> Tuple[np.ndarray, List[DetectionEvent]]:
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    audio = 0.005 * rng.standard_normal(n)
    events: List[DetectionEvent] = []
    while True:
        present = [name for name in TOY_CLASSES if rng.random() < 0.6]
        if present or not require_event:
            break
    for name in present:
        if name == "Tone":
            spans = _place(rng, int(rng.integers(1, 3)), 0.4, 1.5, duration)
        else:
            spans = _place(rng, int(rng.integers(1, 3)), 1.0, 3.5, duration)
        for onset, offset in spans:
            a, b = int(onset * sample_rate), int(offset * sample_rate)
            if name == "Tone":
                freq = rng.uniform(600.0, 2000.0)
                audio[a:b] += rng.uniform(0.2, 0.4) * np.sin(2 * np.pi * freq * t[a:b])
            else:
                audio[a:b] += rng.uniform(0.1, 0.2) * rng.standard_normal(b - a)
            events.append(DetectionEvent(name, onset, offset))
    events.sort(key=lambda e: (e.onset, e.label))
    return np.clip(audio, -1.0, 1.0).astype(np.float32), events


def generate_toy_corpus(root: Union[str, Path], sizes: Dict[str, int] = None, sample_rate: int = 16000,
                        duration: float = 10.0, seed: int = 0) -> Path:
    """
    Write audio, manifest.tsv, weak.tsv, synthetic.tsv and validation.tsv under root.
    :param root: (str / Path) data root, created if missing.
    :param sizes: (Dict[str, int]) clips per subset.
    :param sample_rate: (int) audio rate of the written WAV files.
    :param duration: (float) clip length in seconds.
    :param seed: (int) generator seed; the corpus is a pure function of it.

    :return root: (Path) the data root.
    """
    root = Path(root)
    sizes = dict(TOY_SIZES if sizes is None else sizes)
    rng = np.random.default_rng(seed)
    clips: List[ClipRecord] = []
    weak: List[WeakLabel] = []
    strong: Dict[str, List[StrongAnnotation]] = {"synthetic": [], "validation": []}

    for subset, count in sizes.items():
        (root / "audio" / subset).mkdir(parents=True, exist_ok=True)
        for k in range(count):
            clip_id = f"{subset}_{k:04d}.wav"
            audio, events = synthesize_clip(rng, sample_rate, duration, require_event=subset in ("weak", "synthetic"))
            relative = f"audio/{subset}/{clip_id}"
            sf.write(str(root / relative), audio, sample_rate, subtype="PCM_16")
            clips.append(ClipRecord(clip_id, relative, subset, duration))
            if subset == "weak":
                weak.append(WeakLabel(clip_id, frozenset(e.label for e in events)))
            elif subset in strong:
                strong[subset].append(StrongAnnotation(clip_id, tuple(events)))
        logger.info("wrote %d %s clips", count, subset)

    write_manifest(clips, root / "manifest.tsv")
    (root / "weak.tsv").write_text(format_weak_labels(weak), encoding="utf-8")
    (root / "synthetic.tsv").write_text(format_strong_labels(strong["synthetic"]), encoding="utf-8")
    (root / "validation.tsv").write_text(format_strong_labels(strong["validation"]), encoding="utf-8")
    return root
