import logging
from typing import List, Mapping, Optional, Sequence, Tuple

import dcase_util
import numpy as np
from sed_eval.sound_event import EventBasedMetrics, SegmentBasedMetrics
from sed_eval.util import bipartite_match

from glsed.corpus.labels import CLIP_DURATION_S, DetectionEvent
from glsed.metrics.report import CollarConfig, EventRangeError, ScoreReport

logger = logging.getLogger(__name__)

EventLists = Mapping[str, Sequence[DetectionEvent]]

MATCHING_STRATEGIES = ("optimal", "greedy")

# float slack on collar comparisons, so 1.30 - 1.10 still counts as 0.2
TIME_EPS = 1e-9


def t_collar(collars: CollarConfig) -> float:
    return float(collars.onset_collar + TIME_EPS)


def _item(event: DetectionEvent, clip_id: str = "") -> dict:
    return {"filename": clip_id, "event_label": event.label, "onset": float(event.onset),
            "offset": float(event.offset)}


def validate_onset(ref: DetectionEvent, est: DetectionEvent, collars: CollarConfig) -> bool:
    return EventBasedMetrics.validate_onset(_item(ref), _item(est), t_collar=t_collar(collars))


def validate_offset(ref: DetectionEvent, est: DetectionEvent, collars: CollarConfig) -> bool:
    return EventBasedMetrics.validate_offset(_item(ref), _item(est), t_collar=t_collar(collars),
                                             percentage_of_length=float(collars.offset_collar_rel))


def check_range(clip_id: str, events: Sequence[DetectionEvent], duration: float) -> None:
    for e in events:
        if not (0.0 <= e.onset < e.offset <= duration + TIME_EPS):
            raise EventRangeError(f"{clip_id}: event {e.label} ({e.onset}, {e.offset}) outside [0, {duration}]")


def _check_strategy(strategy: str) -> None:
    if strategy not in MATCHING_STRATEGIES:
        raise ValueError(f"unknown matching strategy {strategy}")


def _by_onset(events: Sequence[DetectionEvent]) -> List[DetectionEvent]:
    return sorted(events, key=lambda e: (e.onset, e.offset))


def match_events(refs: Sequence[DetectionEvent], preds: Sequence[DetectionEvent],
                 collars: CollarConfig = CollarConfig(), strategy: str = "optimal") -> List[Tuple[int, int]]:
    """
    One-to-one matching of same-class events of one clip, with sed_eval's onset and offset conditions.
    :param refs: (Sequence[DetectionEvent]) reference events of a single class.
    :param preds: (Sequence[DetectionEvent]) system events of the same class.
    :param strategy: (str) "optimal" for a maximum bipartite matching, "greedy" for a single onset-order pass.
    :return pairs: (List[Tuple[int, int]]) (ref index, pred index) pairs into the onset-sorted lists.
    """
    _check_strategy(strategy)
    refs, preds = _by_onset(refs), _by_onset(preds)
    hits = np.array([[validate_onset(r, p, collars) and validate_offset(r, p, collars) for p in preds]
                     for r in refs], dtype=bool).reshape(len(refs), len(preds))

    if strategy == "greedy":
        pairs = []
        used = np.zeros(len(preds), dtype=bool)
        for i in range(len(refs)):
            for j in range(len(preds)):
                if hits[i, j] and not used[j]:
                    used[j] = True
                    pairs.append((i, j))
                    break
        return pairs

    graph = {}
    for i, j in zip(*np.where(hits)):
        graph.setdefault(int(j), []).append(int(i))
    return sorted((int(i), int(j)) for i, j in bipartite_match(graph).items())


def count_matches(refs: Sequence[DetectionEvent], preds: Sequence[DetectionEvent],
                  collars: CollarConfig = CollarConfig(), strategy: str = "optimal") -> Tuple[int, int, int]:
    """:return (tp, fp, fn): (Tuple[int, int, int])"""
    tp = len(match_events(refs, preds, collars, strategy))
    return tp, len(preds) - tp, len(refs) - tp


def _clip_ids(refs: EventLists, preds: EventLists) -> List[str]:
    return sorted(set(refs) | set(preds))


def _check_labels(events: Sequence[DetectionEvent], classes: Sequence[str]) -> None:
    for e in events:
        if e.label not in classes:
            raise EventRangeError(f"unknown event label {e.label}")


def to_container(clip_id: str, events: Sequence[DetectionEvent]) -> dcase_util.containers.MetaDataContainer:
    return dcase_util.containers.MetaDataContainer([_item(e, clip_id) for e in _by_onset(events)])


def _clips(refs: EventLists, preds: EventLists, classes: Sequence[str], durations: Mapping[str, float]):
    """Validated (clip id, duration, reference container, system container) per clip."""
    for clip_id in _clip_ids(refs, preds):
        duration = durations.get(clip_id, CLIP_DURATION_S)
        clip_refs, clip_preds = refs.get(clip_id, ()), preds.get(clip_id, ())
        for events in (clip_refs, clip_preds):
            check_range(clip_id, events, duration)
            _check_labels(events, classes)
        yield clip_id, duration, to_container(clip_id, clip_refs), to_container(clip_id, clip_preds)


def report_from_metrics(variant: str, classes: Sequence[str], metrics) -> ScoreReport:
    """ScoreReport from the class-wise counts of a sed_eval metrics object."""
    counts = [metrics.class_wise[name] for name in classes]
    return ScoreReport(variant, list(classes),
                       [int(round(c["Ntp"])) for c in counts],
                       [int(round(c["Nfp"])) for c in counts],
                       [int(round(c["Nfn"])) for c in counts])


def event_based_f1(refs: EventLists, preds: EventLists, classes: Sequence[str],
                   collars: CollarConfig = CollarConfig(), durations: Optional[Mapping[str, float]] = None,
                   strategy: str = "optimal") -> ScoreReport:
    """
    Event-based scores pooled over all clips per class, then macro averaged.
    :param refs: (Mapping[str, Sequence[DetectionEvent]]) reference events per clip id.
    :param preds: (Mapping[str, Sequence[DetectionEvent]]) system events per clip id.
    :param durations: (Mapping[str, float]) clip durations; clips missing here are 10 s long.
    :param strategy: (str) sed_eval event matching type, "optimal" or "greedy".
    """
    _check_strategy(strategy)
    metrics = EventBasedMetrics(event_label_list=list(classes), evaluate_onset=True, evaluate_offset=True,
                                t_collar=t_collar(collars),
                                percentage_of_length=float(collars.offset_collar_rel),
                                event_matching_type=strategy)
    for _, _, ref_list, est_list in _clips(refs, preds, classes, durations or {}):
        metrics.evaluate(reference_event_list=ref_list, estimated_event_list=est_list)
    return report_from_metrics("event", classes, metrics)


def segment_based_f1(refs: EventLists, preds: EventLists, classes: Sequence[str], segment_length: float = 1.0,
                     durations: Optional[Mapping[str, float]] = None) -> ScoreReport:
    """Segment-based scores on a fixed grid covering each whole clip; a segment is active when any event overlaps it."""
    assert segment_length > 0, "segment length must be positive"
    metrics = SegmentBasedMetrics(event_label_list=list(classes), time_resolution=float(segment_length))
    for _, duration, ref_list, est_list in _clips(refs, preds, classes, durations or {}):
        metrics.evaluate(reference_event_list=ref_list, estimated_event_list=est_list,
                         evaluated_length_seconds=float(duration))
    return report_from_metrics("segment", classes, metrics)


def clip_f1(ref_tags: np.ndarray, pred_tags: np.ndarray, classes: Sequence[str]) -> ScoreReport:
    """
    :param ref_tags: (np.ndarray) N x C binary reference tags.
    :param pred_tags: (np.ndarray) N x C binary predicted tags.
    """
    ref_tags = np.asarray(ref_tags) > 0.5
    pred_tags = np.asarray(pred_tags) > 0.5
    assert ref_tags.shape == pred_tags.shape, "tag matrices must have the same shape"
    assert ref_tags.ndim == 2 and ref_tags.shape[1] == len(classes), "tag matrices must be N x C"
    tp = np.sum(ref_tags & pred_tags, axis=0)
    fp = np.sum(~ref_tags & pred_tags, axis=0)
    fn = np.sum(ref_tags & ~pred_tags, axis=0)
    return ScoreReport("clip", list(classes), tp, fp, fn)


def tags_from_events(events: EventLists, clip_ids: Sequence[str], classes: Sequence[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    tags = np.zeros((len(clip_ids), len(classes)), dtype=np.float32)
    for n, clip_id in enumerate(clip_ids):
        for e in events.get(clip_id, ()):
            tags[n, index[e.label]] = 1.0
    return tags


def greedy_shortfall(refs: EventLists, preds: EventLists, classes: Sequence[str],
                     collars: CollarConfig = CollarConfig()) -> int:
    """TP lost by the onset-order greedy pass compared with the optimal matching; logged when positive."""
    greedy = event_based_f1(refs, preds, classes, collars, strategy="greedy").tp.sum()
    optimal = event_based_f1(refs, preds, classes, collars, strategy="optimal").tp.sum()
    if optimal > greedy:
        logger.info("greedy matching found %d of %d optimal true positives", greedy, optimal)
    return int(optimal - greedy)
