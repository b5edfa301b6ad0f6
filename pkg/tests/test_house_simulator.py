import unittest
import sys
import os
import tempfile

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from house_simulator import (
    HouseSpec,
    PropagationParams,
    RoomRegion,
    builtin_specs,
    generate_trajectory,
    load_spec,
    rssi_at,
    save_spec,
    synthesize_dataset,
)
from rssi_types import RoomLabel


def two_room_spec(exponent=2.7, sigma=0.0, drop_prob=0.15, split=True):
    """Room A spans x 0..20 (or 0..10 with room B beside it); one AP at (2, 2, 2)"""
    if split:
        regions = [RoomRegion(RoomLabel(0, "A"), 0, 0.0, 0.0, 10.0, 4.0),
                   RoomRegion(RoomLabel(1, "B"), 0, 10.0, 0.0, 20.0, 4.0)]
        aps = [(2.0, 2.0, 2.0), (18.0, 2.0, 2.0)]
    else:
        regions = [RoomRegion(RoomLabel(0, "A"), 0, 0.0, 0.0, 20.0, 4.0),
                   RoomRegion(RoomLabel(1, "B"), 0, 20.0, 0.0, 30.0, 4.0)]
        aps = [(2.0, 2.0, 2.0)]
    return HouseSpec("two_room", regions, aps,
                     PropagationParams(path_loss_exponent=exponent, shadowing_sigma_db=sigma),
                     drop_prob=drop_prob)


class TestRssiAt(unittest.TestCase):
    def test_reference_distance_gives_tx_power(self):
        spec = two_room_spec(split=False)
        self.assertAlmostEqual(rssi_at(spec, (3.0, 2.0, 2.0), 0), -40.0, places=9)

    def test_ten_reference_distances_lose_twenty_db(self):
        spec = two_room_spec(exponent=2.0, split=False)
        self.assertAlmostEqual(rssi_at(spec, (12.0, 2.0, 2.0), 0), -60.0, places=9)

    def test_wall_crossing_attenuates(self):
        spec = two_room_spec(exponent=2.0)
        self.assertAlmostEqual(rssi_at(spec, (12.0, 2.0, 2.0), 0), -66.0, places=9)

    def test_never_reaches_sentinel(self):
        spec = two_room_spec(exponent=9.0, sigma=30.0)
        values = [rssi_at(spec, (19.0, 3.0, 1.0), 0, seed=s) for s in range(50)]
        self.assertGreaterEqual(min(values), -119.0)
        self.assertLessEqual(max(values), 0.0)

    def test_bad_ap_index(self):
        with self.assertRaises(IndexError):
            rssi_at(two_room_spec(), (1.0, 1.0, 1.0), 5)

    def test_same_seed_same_value(self):
        spec = two_room_spec(sigma=4.0)
        self.assertEqual(rssi_at(spec, (5.0, 1.0, 1.0), 1, seed=3), rssi_at(spec, (5.0, 1.0, 1.0), 1, seed=3))


class TestTrajectory(unittest.TestCase):
    def test_scripted_visits_every_room(self):
        spec = builtin_specs()["target_b"]
        for seed in range(3):
            rooms = {room for _, _, room in generate_trajectory(spec, 600.0, "scripted", seed)}
            self.assertEqual(rooms, set(spec.rooms))

    def test_short_duration_gives_one_sample(self):
        self.assertEqual(len(generate_trajectory(two_room_spec(), 0.2, "scripted", 0)), 1)

    def test_free_living_rare_room_fraction(self):
        spec = builtin_specs()["target_c"]
        stairs = spec.house_config().room_by_name("stairs")
        fractions = []
        for seed in range(20):
            samples = generate_trajectory(spec, 3600.0, "free_living", seed)
            fractions.append(np.mean([room == stairs for _, _, room in samples]))
        self.assertAlmostEqual(float(np.mean(fractions)), 0.02, delta=0.01)

    def test_rejects_non_positive_duration(self):
        with self.assertRaises(ValueError):
            generate_trajectory(two_room_spec(), 0.0)


class TestSynthesizeDataset(unittest.TestCase):
    def test_no_drops(self):
        raw = synthesize_dataset(two_room_spec(drop_prob=0.0), 2.0, 2.0, seed=1)
        self.assertFalse(np.isnan(raw.fingerprint[0].readings).any())

    def test_drop_fraction(self):
        raw = synthesize_dataset(two_room_spec(drop_prob=0.3), 20.0, 1.0, seed=2)
        readings = raw.fingerprint[0].readings
        self.assertGreaterEqual(readings.size, 10_000)
        self.assertAlmostEqual(float(np.isnan(readings).mean()), 0.3, delta=0.02)

    def test_deterministic(self):
        spec = builtin_specs()["source_1"]
        a = synthesize_dataset(spec, 3.0, 3.0, seed=5)
        b = synthesize_dataset(spec, 3.0, 3.0, seed=5)
        np.testing.assert_array_equal(a.fingerprint[0].readings, b.fingerprint[0].readings)
        np.testing.assert_array_equal(a.free_living[0].labels, b.free_living[0].labels)

    def test_spatial_coherence(self):
        spec = two_room_spec(sigma=0.0, drop_prob=0.0)
        stream = synthesize_dataset(spec, 4.0, 1.0, seed=0).fingerprint[0]
        in_a = stream.readings[stream.labels == 0, 0].mean()
        in_b = stream.readings[stream.labels == 1, 0].mean()
        self.assertGreater(in_a - in_b, spec.propagation.wall_attenuation_db / 2)

    def test_minority_house_scripted_minutes(self):
        spec = builtin_specs()["minority_house"]
        raw = synthesize_dataset(spec, 80.0, 5.0, seed=0)
        stairs = spec.house_config().room_by_name("lower stairs").id
        self.assertEqual(int(np.sum(raw.fingerprint[0].labels == stairs)), int(3.0 * 60 * spec.sample_rate_hz))


class TestBuiltinSpecs(unittest.TestCase):
    def test_library_shapes(self):
        specs = builtin_specs()
        self.assertEqual([specs[h].n_aps for h in ("target_b", "target_c", "target_d")], [11, 11, 11])
        self.assertEqual([specs[h].n_aps for h in ("source_1", "source_2", "source_3")], [9, 9, 9])
        self.assertEqual([len(specs[h].rooms) for h in ("target_b", "target_c", "target_d")], [11, 9, 10])

    def test_spec_json_roundtrip(self):
        spec = builtin_specs()["target_d"]
        with tempfile.TemporaryDirectory() as tmp:
            path = save_spec(spec, os.path.join(tmp, "house.json"))
            self.assertEqual(load_spec(path).to_dict(), spec.to_dict())

    def test_unknown_builtin(self):
        with self.assertRaises(KeyError):
            load_spec("builtin:nowhere")

    def test_spec_validation(self):
        with self.assertRaises(ValueError):
            HouseSpec("bad", [RoomRegion(RoomLabel(0, "only"), 0, 0, 0, 1, 1)], [(0, 0, 0)])


if __name__ == '__main__':
    unittest.main()
