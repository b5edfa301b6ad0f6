import unittest
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from preprocessor import (
    RSSIPreprocessor,
    apply_normalizer,
    denormalize,
    fit_normalizer,
    forward_fill,
    resample_to_grid,
    segment_windows,
    sentinel_fill,
)
from rssi_types import HouseConfig, NormStats, RawHouseData, RawStream, RoomLabel, validate_dataset

NAN = np.nan


def stream(readings, labels=None, rate=5.0, segment_id="s"):
    readings = np.asarray(readings, dtype=np.float64)
    if readings.ndim == 1:
        readings = readings[:, None]
    n = len(readings)
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels)
    return RawStream(np.arange(n) / rate, readings, labels, segment_id)


class TestForwardFill(unittest.TestCase):
    def test_fills_within_one_second(self):
        """-60 at t=0 carries forward through t=1.0"""
        s = stream([-60, NAN, NAN, NAN, NAN, NAN, NAN, NAN])
        filled = forward_fill(s, 1.0).readings[:, 0]
        np.testing.assert_array_equal(filled[:6], [-60] * 6)

    def test_gap_longer_than_one_second_stays_missing(self):
        s = stream([-60, NAN, NAN, NAN, NAN, NAN, NAN, NAN])
        filled = forward_fill(s, 1.0).readings[:, 0]
        self.assertTrue(np.isnan(filled[6]))  # t=1.2
        self.assertTrue(np.isnan(filled[7]))  # t=1.4

    def test_refill_after_new_observation(self):
        s = stream([-60, NAN, NAN, NAN, NAN, NAN, NAN, -70, NAN])
        filled = forward_fill(s, 1.0).readings[:, 0]
        self.assertTrue(np.isnan(filled[6]))
        self.assertEqual(filled[8], -70)

    def test_aps_are_filled_independently(self):
        s = stream([[-60, NAN], [NAN, -50], [NAN, NAN]])
        filled = forward_fill(s, 1.0).readings
        np.testing.assert_array_equal(filled[:, 0], [-60, -60, -60])
        self.assertTrue(np.isnan(filled[0, 1]))
        np.testing.assert_array_equal(filled[1:, 1], [-50, -50])

    def test_fully_observed_stream_unchanged(self):
        s = stream([[-60, -70], [-61, -71], [-62, -72]])
        np.testing.assert_array_equal(forward_fill(s).readings, s.readings)

    def test_leading_gap_stays_missing(self):
        s = stream([NAN, -60])
        self.assertTrue(np.isnan(forward_fill(s).readings[0, 0]))


class TestSentinelFill(unittest.TestCase):
    def test_remaining_gaps_become_sentinel(self):
        s = stream([[-60, NAN], [NAN, NAN]])
        out = sentinel_fill(s).readings
        np.testing.assert_array_equal(out, [[-60, -120], [-120, -120]])

    def test_fully_observed_unchanged(self):
        s = stream([-60, -65])
        np.testing.assert_array_equal(sentinel_fill(s).readings, s.readings)

    def test_fill_chain_is_idempotent(self):
        s = stream([-60, NAN, NAN, NAN, NAN, NAN, NAN, NAN])
        once = sentinel_fill(forward_fill(s))
        twice = sentinel_fill(forward_fill(once))
        np.testing.assert_array_equal(once.readings, twice.readings)


class TestNormalizer(unittest.TestCase):
    def test_endpoints_and_midpoint(self):
        stats = NormStats(np.array([-120.0]), np.array([-20.0]))
        out = apply_normalizer(stream([-120, -20, -70]), stats).readings[:, 0]
        np.testing.assert_allclose(out, [0.0, 1.0, 0.5])

    def test_out_of_range_values_clamp(self):
        fitted = fit_normalizer([stream([-90, -40])])
        out = apply_normalizer(stream([-100, -30]), fitted).readings[:, 0]
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_degenerate_ap_maps_to_zero_and_warns(self):
        with self.assertLogs("preprocessor", level="WARNING"):
            stats = fit_normalizer([stream([[-50, -60], [-50, -70]])])
        out = apply_normalizer(stream([[-50, -65]]), stats).readings
        self.assertEqual(out[0, 0], 0.0)

    def test_fit_rejects_missing_values(self):
        with self.assertRaises(ValueError):
            fit_normalizer([stream([-60, NAN])])

    def test_denormalize_inverts_in_range_values(self):
        stats = NormStats(np.array([-110.0, -95.0]), np.array([-35.0, -20.0]))
        values = np.array([[-100.0, -50.0], [-36.5, -94.0]])
        roundtrip = denormalize(stats.normalize(values), stats)
        np.testing.assert_allclose(roundtrip, values, atol=1e-9)


class TestSegmentWindows(unittest.TestCase):
    def setUp(self):
        self.config = HouseConfig("h", 1, (RoomLabel(0, "kitchen"), RoomLabel(1, "hall")))

    def test_thirty_samples_give_two_windows(self):
        windows = segment_windows(stream(np.linspace(0, 1, 30)), self.config)
        self.assertEqual(len(windows), 2)
        self.assertEqual([w.origin for w, _ in windows], ["fingerprint:s:0", "fingerprint:s:10"])
        self.assertTrue(all(label.name == "kitchen" for _, label in windows))

    def test_window_columns_are_contiguous_slices(self):
        values = np.linspace(0, 1, 30)
        windows = segment_windows(stream(values), self.config)
        np.testing.assert_array_equal(windows[1][0].values[0], values[10:30])
        self.assertEqual(windows[0][0].values.shape, (1, 20))

    def test_exactly_one_window(self):
        self.assertEqual(len(segment_windows(stream(np.zeros(20)), self.config)), 1)

    def test_short_stream_gives_nothing(self):
        self.assertEqual(segment_windows(stream(np.zeros(19)), self.config), [])

    def test_majority_label(self):
        labels = [0] * 12 + [1] * 8
        windows = segment_windows(stream(np.zeros(20), labels), self.config)
        self.assertEqual(windows[0][1].name, "kitchen")

    def test_tie_is_dropped(self):
        labels = [0] * 10 + [1] * 10
        self.assertEqual(segment_windows(stream(np.zeros(20), labels), self.config), [])

    def test_unlabeled_window_is_dropped(self):
        labels = [0] * 19 + [-1]
        self.assertEqual(segment_windows(stream(np.zeros(20), labels), self.config), [])


class TestResample(unittest.TestCase):
    def test_five_hz_stream_passes_through(self):
        s = stream(np.arange(10.0))
        self.assertIs(resample_to_grid(s, 5.0), s)

    def test_four_hz_stream_snaps_to_five_hz_grid(self):
        s = RawStream(np.arange(5) / 4.0, np.arange(5.0)[:, None] - 60, np.zeros(5, dtype=np.int64))
        out = resample_to_grid(s, 5.0)
        np.testing.assert_allclose(out.timestamps, np.arange(6) / 5.0)
        self.assertEqual(out.readings[0, 0], -60)
        self.assertEqual(out.readings[-1, 0], -56)
        self.assertEqual(out.readings.shape, (6, 1))


class TestPreprocessHouse(unittest.TestCase):
    def test_end_to_end_house(self):
        config = HouseConfig("h", 2, (RoomLabel(0, "kitchen"), RoomLabel(1, "hall")))
        rng = np.random.default_rng(3)
        readings = rng.uniform(-90, -40, size=(60, 2))
        readings[rng.random(readings.shape) < 0.2] = NAN
        labels = np.repeat([0, 1], 30)
        fp = RawStream(np.arange(60) / 5.0, readings, labels, "fp")
        fl = RawStream(np.arange(40) / 5.0, rng.uniform(-95, -35, size=(40, 2)), np.repeat([1, 0], 20), "fl")
        ds = RSSIPreprocessor().preprocess_house(RawHouseData(config, [fp], [fl]))
        self.assertEqual(validate_dataset(ds), [])
        self.assertGreater(len(ds.fingerprint), 0)
        self.assertGreater(len(ds.free_living), 0)
        self.assertTrue(all(w.origin.startswith("free_living:fl:") for w, _ in ds.free_living))


if __name__ == '__main__':
    unittest.main()
