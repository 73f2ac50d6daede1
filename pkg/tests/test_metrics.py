import itertools
import json
import logging

import numpy as np
import pytest

from glsed.corpus import DetectionEvent
from glsed.metrics import (CollarConfig, EventRangeError, ScoreReport, clip_f1, event_based_f1, greedy_shortfall,
                           segment_based_f1)
from glsed.metrics.sed_metrics import count_matches, tags_from_events, validate_offset, validate_onset
from tests.conftest import read_fixture


def scene_events(frame, kind):
    events = {}
    for row in frame[frame["kind"] == kind].itertuples():
        events.setdefault(row.clip, []).append(DetectionEvent(row.label, float(row.onset), float(row.offset)))
    return events


def brute_force_tp(refs, preds, collars):
    hits = [[validate_onset(r, p, collars) and validate_offset(r, p, collars) for p in preds] for r in refs]
    if not refs or not preds:
        return 0
    best = 0
    if len(refs) <= len(preds):
        for chosen in itertools.permutations(range(len(preds)), len(refs)):
            best = max(best, sum(hits[i][j] for i, j in enumerate(chosen)))
    else:
        for chosen in itertools.permutations(range(len(refs)), len(preds)):
            best = max(best, sum(hits[i][j] for j, i in enumerate(chosen)))
    return best


def random_events(rng, label, n):
    events = []
    for _ in range(n):
        onset = round(float(rng.uniform(0, 8)), 2)
        events.append(DetectionEvent(label, onset, round(onset + float(rng.uniform(0.1, 2.0)), 2)))
    return events


class TestEventBased:

    @pytest.mark.parametrize("scene, tp, fp, fn", [
        ("overlap_chain", 2, 0, 0),
        ("collar_tp", 1, 0, 0),
        ("onset_miss", 0, 1, 1),
        ("long_event", 1, 0, 0),
        ("mixed", 1, 1, 1),
    ])
    def test_scenes(self, scene, tp, fp, fn):
        frame = read_fixture("scenes.tsv")
        frame = frame[frame["scene"] == scene]
        classes = sorted(set(frame["label"]))
        report = event_based_f1(scene_events(frame, "ref"), scene_events(frame, "pred"), classes)
        assert (report.tp.sum(), report.fp.sum(), report.fn.sum()) == (tp, fp, fn)

    def test_optimal_against_brute_force(self):
        rng = np.random.default_rng(21)
        collars = CollarConfig()
        for _ in range(200):
            refs = random_events(rng, "Dog", int(rng.integers(0, 5)))
            preds = random_events(rng, "Dog", int(rng.integers(0, 5)))
            tp, fp, fn = count_matches(refs, preds, collars)
            assert tp == brute_force_tp(sorted(refs, key=lambda e: (e.onset, e.offset)),
                                        sorted(preds, key=lambda e: (e.onset, e.offset)), collars)
            assert tp + fp == len(preds) and tp + fn == len(refs)

    def test_scores_agree_with_single_clip_matching(self):
        rng = np.random.default_rng(24)
        for strategy in ("optimal", "greedy"):
            for _ in range(50):
                refs = {"a": random_events(rng, "Dog", int(rng.integers(0, 5)))}
                preds = {"a": random_events(rng, "Dog", int(rng.integers(0, 5)))}
                report = event_based_f1(refs, preds, ["Dog"], strategy=strategy)
                tp, fp, fn = count_matches(refs["a"], preds["a"], strategy=strategy)
                assert (report.tp[0], report.fp[0], report.fn[0]) == (tp, fp, fn)

    def test_symmetric_with_absolute_collars(self):
        rng = np.random.default_rng(22)
        collars = CollarConfig(offset_collar_rel=0.0)
        for _ in range(50):
            refs = {"a": random_events(rng, "Dog", 4)}
            preds = {"a": random_events(rng, "Dog", 3)}
            forward = event_based_f1(refs, preds, ["Dog"], collars)
            backward = event_based_f1(preds, refs, ["Dog"], collars)
            assert forward.tp[0] == backward.tp[0]
            assert forward.fp[0] == backward.fn[0]
            assert forward.macro_f1 == pytest.approx(backward.macro_f1)

    def test_wider_collars_never_lose_matches(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            refs = random_events(rng, "Dog", 4)
            preds = random_events(rng, "Dog", 4)
            narrow = count_matches(refs, preds, CollarConfig(0.1, 0.1, 0.1))[0]
            wide = count_matches(refs, preds, CollarConfig(0.4, 0.4, 0.4))[0]
            assert wide >= narrow

    def test_greedy_shortfall(self, caplog):
        refs = {"a": [DetectionEvent("Dog", 1.0, 2.0), DetectionEvent("Dog", 1.25, 2.25)]}
        preds = {"a": [DetectionEvent("Dog", 1.1, 2.1), DetectionEvent("Dog", 1.15, 1.9)]}
        assert event_based_f1(refs, preds, ["Dog"], strategy="greedy").tp[0] == 1
        assert event_based_f1(refs, preds, ["Dog"]).tp[0] == 2
        with caplog.at_level(logging.INFO):
            assert greedy_shortfall(refs, preds, ["Dog"]) == 1
        assert "greedy" in caplog.text

    def test_perfect_and_empty(self):
        refs = {"a": [DetectionEvent("Dog", 1.0, 2.0)], "b": [DetectionEvent("Cat", 0.0, 10.0)]}
        assert event_based_f1(refs, refs, ["Cat", "Dog"]).macro_f1 == 1.0
        empty = event_based_f1({"a": []}, {"a": []}, ["Cat", "Dog"])
        assert empty.macro_f1 == 0.0

    def test_out_of_range_events(self):
        refs = {"a": [DetectionEvent("Dog", 1.0, 2.0)]}
        with pytest.raises(EventRangeError):
            event_based_f1(refs, {"a": [DetectionEvent("Dog", 9.5, 10.5)]}, ["Dog"])
        with pytest.raises(EventRangeError):
            event_based_f1(refs, {"a": [DetectionEvent("Lion", 1.0, 2.0)]}, ["Dog"])
        event_based_f1(refs, {"a": [DetectionEvent("Dog", 9.5, 10.5)]}, ["Dog"], durations={"a": 11.0})

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            count_matches([DetectionEvent("Dog", 0, 1)], [DetectionEvent("Dog", 0, 1)], strategy="hungarian")

    def test_invalid_collars(self):
        with pytest.raises(ValueError):
            CollarConfig(onset_collar=0.0, offset_collar_abs=0.0)
        with pytest.raises(ValueError):
            CollarConfig(offset_collar_rel=1.5)
        with pytest.raises(ValueError):
            CollarConfig(onset_collar=0.2, offset_collar_abs=0.3)


class TestSegmentBased:

    def test_partial_overlap(self):
        refs = {"a": [DetectionEvent("Dog", 0.5, 1.5)]}
        preds = {"a": [DetectionEvent("Dog", 1.2, 2.0)]}
        report = segment_based_f1(refs, preds, ["Dog"])
        assert (report.tp[0], report.fp[0], report.fn[0]) == (1, 0, 1)
        assert report.macro_f1 == pytest.approx(2 / 3)

    def test_boundary_offset(self):
        refs = {"a": [DetectionEvent("Dog", 0.0, 1.0)]}
        preds = {"a": [DetectionEvent("Dog", 1.0, 2.0)]}
        report = segment_based_f1(refs, preds, ["Dog"])
        assert (report.tp[0], report.fp[0], report.fn[0]) == (0, 1, 1)

    def test_short_clip(self):
        refs = {"a": [DetectionEvent("Dog", 0.0, 2.5)]}
        report = segment_based_f1(refs, refs, ["Dog"], durations={"a": 2.5})
        assert report.tp[0] == 3


class TestClipLevel:

    def test_two_thirds(self):
        report = clip_f1(np.array([[1], [1]]), np.array([[1], [0]]), ["Dog"])
        assert report.macro_f1 == pytest.approx(2 / 3)

    def test_zero_when_nothing_predicted(self):
        report = clip_f1(np.zeros((3, 2)), np.zeros((3, 2)), ["Cat", "Dog"])
        assert report.macro_f1 == 0.0
        np.testing.assert_array_equal(report.precision, [0.0, 0.0])

    def test_tags_from_events(self):
        events = {"b": [DetectionEvent("Dog", 0, 1), DetectionEvent("Dog", 2, 3)]}
        np.testing.assert_array_equal(tags_from_events(events, ["a", "b"], ["Cat", "Dog"]), [[0, 0], [0, 1]])


class TestScoreReport:

    def test_write(self, tmp_path):
        report = ScoreReport("event", ["Cat", "Dog"], [1, 0], [1, 0], [0, 2])
        report.write(tmp_path)
        summary = json.loads((tmp_path / "event_summary.json").read_text())
        assert summary["macro_f1"] == pytest.approx((2 / 3) / 2)
        assert summary["class_f1"]["Dog"] == 0.0
        assert (tmp_path / "event_scores.tsv").read_text().startswith("event_label\ttp\tfp\tfn")
        assert "Cat" in str(report)
