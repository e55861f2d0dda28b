import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from hearing.exceptions import InvalidAudiogram
from hearing.prescription import (
    Audiogram,
    GainCurve,
    HearingLossPattern,
    LossShape,
    Severity,
    apply_linear_gain,
    classify_severity,
    generate_audiogram,
    generate_audiogram_bank,
    interpolate_db,
    interpolate_gains,
    load_audiograms,
    nalr_gains,
    pure_tone_average,
    save_audiograms,
)
from hearing.signal_core import WaveBuffer, rms_db

thresholds = st.lists(st.floats(min_value=0, max_value=100), min_size=6, max_size=6)


class NalrTests(SimpleTestCase):
    def test_normal_hearing_is_clamped(self):
        gains = nalr_gains(Audiogram((0,) * 6)).gains_db
        self.assertEqual(gains, (0.0, 0.0, 1.0, 0.0, 0.0, 0.0))

    def test_flat_forty(self):
        gains = nalr_gains(Audiogram((40,) * 6)).gains_db
        np.testing.assert_allclose(gains, [1.4, 10.4, 19.4, 17.4, 16.4, 16.4], atol=1e-9)

    def test_sloping_loss(self):
        gains = nalr_gains(Audiogram((20, 25, 35, 50, 65, 70))).gains_db
        self.assertAlmostEqual(gains[4], 23.65, places=9)

    @given(thresholds, st.integers(min_value=0, max_value=5), st.floats(min_value=0, max_value=20))
    @settings(max_examples=60)
    def test_more_loss_never_means_less_gain(self, values, index, extra):
        raised = list(values)
        raised[index] += extra
        before = np.asarray(nalr_gains(Audiogram(values)).gains_db)
        after = np.asarray(nalr_gains(Audiogram(raised)).gains_db)
        self.assertTrue(np.all(after >= before - 1e-12))

    @given(thresholds)
    @settings(max_examples=40)
    def test_gains_nonnegative(self, values):
        self.assertTrue(all(g >= 0 for g in nalr_gains(Audiogram(values)).gains_db))


class AudiogramTests(SimpleTestCase):
    def test_wrong_length(self):
        with self.assertRaises(InvalidAudiogram):
            Audiogram((10, 20, 30, 40, 50))

    def test_out_of_range(self):
        with self.assertRaises(InvalidAudiogram):
            Audiogram((10, 20, 30, 40, 50, 130))
        with self.assertRaises(InvalidAudiogram):
            Audiogram((-5, 20, 30, 40, 50, 60))

    def test_pure_tone_average(self):
        self.assertAlmostEqual(pure_tone_average(Audiogram((0, 30, 40, 50, 90, 90))), 40.0)

    def test_severity_bands(self):
        self.assertEqual(classify_severity(10), Severity.MILD)
        self.assertEqual(classify_severity(30), Severity.MILD)
        self.assertEqual(classify_severity(50), Severity.MODERATE)
        self.assertEqual(classify_severity(60), Severity.MODERATELY_SEVERE)
        self.assertEqual(classify_severity(80), Severity.SEVERE)

    def test_load_single_and_list(self):
        with tempfile.TemporaryDirectory() as tmp:
            single = Path(tmp) / "one.json"
            single.write_text(json.dumps({"id": "p1", "thresholds_db_hl": [10, 20, 30, 40, 50, 60]}))
            self.assertEqual(load_audiograms(single)[0].id, "p1")

            bank = generate_audiogram_bank(4, seed=2)
            many = Path(tmp) / "bank.json"
            save_audiograms(many, bank)
            self.assertEqual(load_audiograms(many), bank)

    def test_load_rejects_duplicates_and_bad_values(self):
        with tempfile.TemporaryDirectory() as tmp:
            dup = Path(tmp) / "dup.json"
            entry = {"id": "same", "thresholds_db_hl": [0] * 6}
            dup.write_text(json.dumps([entry, entry]))
            with self.assertRaises(InvalidAudiogram):
                load_audiograms(dup)

            bad = Path(tmp) / "bad.json"
            bad.write_text(json.dumps({"id": "x", "thresholds_db_hl": [0, 0, 0, 0, 0, 200]}))
            with self.assertRaises(InvalidAudiogram):
                load_audiograms(bad)

            with self.assertRaises(InvalidAudiogram):
                load_audiograms(Path(tmp) / "missing.json")


class InterpolationTests(SimpleTestCase):
    def test_zero_curve_is_unit_gain(self):
        np.testing.assert_array_equal(interpolate_gains(GainCurve.flat(0.0)), np.ones(257))

    def test_constant_curve(self):
        np.testing.assert_allclose(interpolate_gains(GainCurve.flat(20.0)), np.full(257, 10.0), rtol=1e-12)

    def test_midpoint_on_log_axis(self):
        db = interpolate_db(np.array([0, 0, 0, 0, 0, 12.0]))
        bin_index = int(round(np.sqrt(4000 * 6000) / 31.25))
        self.assertAlmostEqual(db[bin_index], 6.0, delta=0.1)

    def test_anchor_bins_are_exact(self):
        anchors = np.array([3.0, 7.0, 11.0, 13.0, 17.0, 19.0])
        db = interpolate_db(anchors)
        # 250, 500, 1000, 2000, 4000 and 6000 Hz fall exactly on bins
        np.testing.assert_array_equal(db[[8, 16, 32, 64, 128, 192]], anchors)

    def test_held_outside_anchor_range(self):
        db = interpolate_db(np.array([3.0, 7.0, 11.0, 13.0, 17.0, 19.0]))
        np.testing.assert_array_equal(db[:8], 3.0)
        np.testing.assert_array_equal(db[192:], 19.0)

    def test_batched_anchors(self):
        rows = np.array([[0.0] * 6, [12.0] * 6])
        db = interpolate_db(rows)
        self.assertEqual(db.shape, (2, 257))
        np.testing.assert_allclose(db[1], 12.0)


class GenerationTests(SimpleTestCase):
    def test_flat_mild(self):
        for seed in (0, 1, 17):
            a = generate_audiogram(HearingLossPattern(LossShape.FLAT, Severity.MILD), seed)
            self.assertEqual(len(set(a.thresholds_db_hl)), 1)
            self.assertTrue(26 <= a.thresholds_db_hl[0] <= 40)

    def test_deterministic(self):
        p = HearingLossPattern(LossShape.NOTCHED, Severity.MODERATE, jitter_db=5.0)
        self.assertEqual(generate_audiogram(p, 9), generate_audiogram(p, 9))

    def test_steep_slope(self):
        a = generate_audiogram(HearingLossPattern(LossShape.STEEPLY_SLOPING, Severity.SEVERE), 4)
        slope = a.thresholds_db_hl[5] - a.thresholds_db_hl[2]
        self.assertAlmostEqual(slope, 15 * np.log2(6), delta=1.0)

    @given(
        st.sampled_from(LossShape.values),
        st.sampled_from(Severity.values),
        st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=80)
    def test_severity_lands_in_its_band(self, shape, severity, seed):
        a = generate_audiogram(HearingLossPattern(shape, severity), seed)
        self.assertEqual(classify_severity(pure_tone_average(a)), severity)

    def test_unknown_shape(self):
        with self.assertRaises(InvalidAudiogram):
            HearingLossPattern("cookie_bite", Severity.MILD)

    def test_bank(self):
        bank = generate_audiogram_bank(12, seed=5)
        self.assertEqual(len({a.id for a in bank}), 12)
        self.assertEqual(bank, generate_audiogram_bank(12, seed=5))


class LinearGainTests(SimpleTestCase):
    def setUp(self):
        t = np.arange(16000) / 16000
        self.tone = WaveBuffer(0.05 * np.sin(2 * np.pi * 500 * t))

    def test_zero_curve_is_identity(self):
        out = apply_linear_gain(self.tone, GainCurve.flat(0.0))
        np.testing.assert_allclose(out.samples, self.tone.samples, atol=1e-9)

    def test_gain_at_one_anchor(self):
        out = apply_linear_gain(self.tone, GainCurve((0, 20, 0, 0, 0, 0)))
        # Hamming leakage spreads the tone into bins that receive less gain
        self.assertAlmostEqual(rms_db(out) - rms_db(self.tone), 20.0, delta=1.0)

    def test_silence(self):
        out = apply_linear_gain(WaveBuffer(np.zeros(2000)), GainCurve.flat(30.0))
        self.assertFalse(np.any(out.samples))
