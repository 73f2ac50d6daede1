import logging

import numpy as np
import pytest
import torch

from glsed.algorithms.algorithm.sed_model import SEDModel
from glsed.algorithms.utils.cnn import EncoderConfig
from glsed.algorithms.utils.disentangled import make_masks
from glsed.corpus import DetectionEvent
from glsed.inference.postprocess import (FIXED_WINDOW, WindowPlan, adaptive_windows, decode_clip, decode_events,
                                         format_submission, median_smooth, runs_to_events, smooth_to_root,
                                         write_submission)
from glsed.inference.predict import ClipProbabilitySet, ensemble, predict, upsample_frames
from tests.conftest import read_fixture


def runs_sequence(rng, min_run, length=120):
    values, value = [], int(rng.integers(0, 2))
    while len(values) < length:
        values.extend([value] * int(rng.integers(min_run, min_run + 6)))
        value = 1 - value
    return np.asarray(values, dtype=np.float32)


class TestWindows:

    def test_adaptive_from_durations(self):
        expected = read_fixture("window_durations.tsv")
        plan = adaptive_windows(list(expected["event_label"]), list(expected["avg_duration"]))
        np.testing.assert_array_equal(plan.window_frames, expected["window"].to_numpy())

    def test_missing_duration_falls_back(self, caplog):
        with caplog.at_level(logging.WARNING):
            plan = adaptive_windows(["a", "b"], [1.02, float("nan")])
        np.testing.assert_array_equal(plan.window_frames, [17, FIXED_WINDOW])
        assert "b" in caplog.text

    def test_short_events_get_one_frame(self):
        assert adaptive_windows(["a"], [0.01]).window_frames[0] == 1

    def test_fixed(self):
        plan = WindowPlan.fixed(["a", "b", "c"])
        np.testing.assert_array_equal(plan.window_frames, [27, 27, 27])

    def test_beta_must_be_positive(self):
        with pytest.raises(AssertionError):
            adaptive_windows(["a"], [1.0], beta=0.0)


class TestMedianSmooth:

    def test_isolated_spike(self):
        np.testing.assert_array_equal(median_smooth(np.array([0, 0, 1, 0, 0]), 3), [0, 0, 0, 0, 0])

    def test_constant_and_unit_window(self, rng):
        np.testing.assert_array_equal(median_smooth(np.full(9, 0.7), 5), np.full(9, 0.7))
        x = rng.random(30)
        np.testing.assert_array_equal(median_smooth(x, 1), x)

    def test_matches_direct_definition(self, rng):
        for _ in range(50):
            n, window = int(rng.integers(1, 40)), int(rng.integers(1, 12))
            x = rng.random(n)
            left, right = (window - 1) // 2, window - 1 - (window - 1) // 2
            expected = []
            for t in range(n):
                shrink = max(0, left - t, right - (n - 1 - t))
                part = np.sort(x[t - max(left - shrink, 0):t + max(right - shrink, 0) + 1])
                expected.append(part[(len(part) - 1) // 2])
            np.testing.assert_array_equal(median_smooth(x, window), expected)

    @pytest.mark.parametrize("window", [3, 5, 9])
    def test_long_runs_are_fixed_points(self, window):
        rng = np.random.default_rng(window)
        for _ in range(20):
            x = runs_sequence(rng, window)
            np.testing.assert_array_equal(median_smooth(x, window), x)

    def test_alternating_sequence_settles(self):
        x = np.array([1, 0, 1, 0, 1, 0, 1], dtype=np.float32)
        np.testing.assert_array_equal(median_smooth(x, 3), [1, 1, 0, 1, 0, 1, 1])
        np.testing.assert_array_equal(smooth_to_root(x, 3), np.ones(7))

    @pytest.mark.parametrize("window", [3, 5, 9, 27])
    def test_second_smoothing_is_a_fixed_point(self, window, caplog):
        rng = np.random.default_rng(window)
        for _ in range(50):
            binary = (median_smooth(rng.random(500), window) >= 0.5).astype(np.float32)
            with caplog.at_level(logging.WARNING):
                settled = smooth_to_root(binary, window)
            np.testing.assert_array_equal(median_smooth(settled, window), settled)
        assert "still changing" not in caplog.text


class TestDecode:

    def test_runs_to_events(self):
        binary = np.zeros(500)
        binary[100:200] = 1
        binary[495:] = 1
        assert runs_to_events(binary, "Dog", 20.0) == [DetectionEvent("Dog", 2.0, 4.0),
                                                       DetectionEvent("Dog", 9.9, 10.0)]

    def test_single_run(self):
        frames = np.full((500, 1), 0.1, dtype=np.float32)
        frames[100:200] = 0.9
        events = decode_clip(np.array([0.9]), frames, WindowPlan.fixed(["Dog"], window=5))
        assert events == [DetectionEvent("Dog", 2.0, 4.0)]

    def test_clip_gate(self):
        frames = np.full((500, 1), 0.9, dtype=np.float32)
        assert decode_clip(np.array([0.3]), frames, WindowPlan.fixed(["Dog"])) == []

    def test_spikes_removed(self):
        frames = np.full((500, 2), 0.1, dtype=np.float32)
        frames[300, 0] = 0.95
        frames[50:80, 1] = 0.8
        events = decode_clip(np.array([0.9, 0.9]), frames, WindowPlan.fixed(["Cat", "Dog"], window=5))
        assert events == [DetectionEvent("Dog", 1.0, 1.6)]

    def test_events_sorted_by_onset(self):
        frames = np.zeros((500, 2), dtype=np.float32)
        frames[200:260, 0] = 1.0
        frames[10:40, 1] = 1.0
        events = decode_clip(np.ones(2), frames, WindowPlan.fixed(["Cat", "Dog"], window=3))
        assert [e.label for e in events] == ["Dog", "Cat"]

    @pytest.mark.parametrize("window", [3, 5, 9])
    def test_decoded_events_survive_another_pass(self, window):
        rng = np.random.default_rng(40 + window)
        for _ in range(20):
            frames = rng.random((500, 1)).astype(np.float32)
            events = decode_clip(np.array([0.9]), frames, WindowPlan.fixed(["Dog"], window=window))
            binary = np.zeros(500, dtype=np.float32)
            for e in events:
                binary[int(round(e.onset * 50)):int(round(e.offset * 50))] = 1.0
            np.testing.assert_array_equal(median_smooth(binary, window), binary)

    def test_decode_events_keeps_empty_clips(self):
        probs = ClipProbabilitySet(["a.wav", "b.wav"], np.array([[0.1], [0.9]], dtype=np.float32),
                                   np.full((2, 500, 1), 0.9, dtype=np.float32))
        events = decode_events(probs, WindowPlan.fixed(["Dog"]))
        assert events == {"a.wav": [], "b.wav": [DetectionEvent("Dog", 0.0, 10.0)]}


class TestProbabilities:

    def test_upsample(self):
        coarse = np.arange(125 * 2, dtype=np.float32).reshape(1, 125, 2)
        fine = upsample_frames(coarse, 500)
        assert fine.shape == (1, 500, 2)
        np.testing.assert_array_equal(fine[0, :4], np.repeat(coarse[0, :1], 4, axis=0))
        np.testing.assert_array_equal(fine[0, 496:], np.repeat(coarse[0, -1:], 4, axis=0))
        np.testing.assert_array_equal(upsample_frames(coarse, 125), coarse)

    def test_upsample_follows_pooling(self):
        coarse = np.arange(7, dtype=np.float32).reshape(1, 7, 1)
        fine = upsample_frames(coarse, 500, pooling=64)
        assert fine[0, 63, 0] == 0 and fine[0, 64, 0] == 1
        np.testing.assert_array_equal(fine[0, 384:, 0], 6)
        assert upsample_frames(coarse, 500)[0, 64, 0] == 0

    def test_predict_with_coarse_model(self, rng):
        torch.manual_seed(0)
        model = SEDModel(EncoderConfig.pt(channels=(4, 8, 160)), make_masks([160, 80], 160))
        features = rng.standard_normal((3, 500, 64)).astype(np.float32)
        probs = predict(model, features, ["a", "b", "c"], batch_size=2)
        assert probs.frame_probs.shape == (3, 500, 2)
        with torch.no_grad():
            coarse = model(features).frame_probs.numpy()
        np.testing.assert_allclose(probs.frame_probs[:, :448:64], coarse, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(probs.frame_probs[:, 499], coarse[:, -1], rtol=1e-5, atol=1e-7)

    def test_ensemble(self):
        a = ClipProbabilitySet(["x"], np.array([[0.2]], dtype=np.float32), np.full((1, 3, 1), 0.2, dtype=np.float32))
        b = ClipProbabilitySet(["x"], np.array([[0.6]], dtype=np.float32), np.full((1, 3, 1), 0.6, dtype=np.float32))
        mean = ensemble([a, b])
        np.testing.assert_allclose(mean.clip_probs, [[0.4]], rtol=1e-6)
        np.testing.assert_allclose(mean.frame_probs, 0.4, rtol=1e-6)
        same = ensemble([a, a, a])
        np.testing.assert_array_equal(same.clip_probs, a.clip_probs)
        np.testing.assert_array_equal(same.frame_probs, a.frame_probs)

    def test_ensemble_rejects_mismatch(self):
        a = ClipProbabilitySet(["x"], np.zeros((1, 1)), np.zeros((1, 3, 1)))
        b = ClipProbabilitySet(["y"], np.zeros((1, 1)), np.zeros((1, 3, 1)))
        with pytest.raises(ValueError):
            ensemble([a, b])
        with pytest.raises(ValueError):
            ensemble([])

    def test_save_and_load(self, tmp_path, rng):
        probs = ClipProbabilitySet(["a.wav", "sub/b.wav"], rng.random((2, 3)).astype(np.float32),
                                   rng.random((2, 500, 3)).astype(np.float32))
        probs.save(tmp_path / "probs")
        loaded = ClipProbabilitySet.load(tmp_path / "probs")
        assert loaded.clip_ids == probs.clip_ids
        np.testing.assert_array_equal(loaded.clip_probs, probs.clip_probs)
        np.testing.assert_array_equal(loaded.frame_probs, probs.frame_probs)


class TestSubmission:

    def test_format(self, tmp_path):
        events = {"b.wav": [DetectionEvent("Dog", 0.5, 1.25)], "a.wav": [DetectionEvent("Cat", 2.0, 4.0)],
                  "c.wav": []}
        text = format_submission(events)
        assert text == "filename\tonset\toffset\tevent_label\na.wav\t2.000\t4.000\tCat\nb.wav\t0.500\t1.250\tDog\n"
        write_submission(events, tmp_path / "predictions.tsv")
        assert (tmp_path / "predictions.tsv").read_text() == text
