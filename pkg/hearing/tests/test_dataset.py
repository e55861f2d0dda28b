import json
import shutil
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from hearing.dataset import (
    AUDIOGRAMS_FILE,
    MANIFEST_FILE,
    Condition,
    ManifestEntry,
    NoiseKind,
    PairingMode,
    Split,
    achieved_snr_db,
    assign_splits,
    build_targets,
    derive_seed,
    load_pair,
    mix_at_snr,
    read_manifest,
    select_split,
    synth_corpus,
    synth_noise,
    synth_utterance,
    write_manifest,
)
from hearing.exceptions import InvalidAudiogram, IoFailure, MissingAudio, ShapeMismatch, SilentClean, SilentNoise, UsageError
from hearing.prescription import Audiogram, load_audiograms
from hearing.signal_core import WaveBuffer, read_wav, write_wav
from hearing.wdrc import amplify_reference


def scaled_noise(n, rms, seed=0):
    x = np.random.default_rng(seed).standard_normal(n)
    return WaveBuffer(x * rms / np.sqrt(np.mean(x**2)))


class MixTests(SimpleTestCase):
    def setUp(self):
        self.clean = scaled_noise(8000, 0.1, seed=1)

    def test_equal_rms_at_zero_db(self):
        mixture = mix_at_snr(self.clean, scaled_noise(8000, 0.1), 0.0, seed=3)
        self.assertAlmostEqual(mixture.noise_scale, 1.0, places=12)

    def test_ratio_arithmetic(self):
        mixture = mix_at_snr(self.clean, scaled_noise(8000, 0.2), 0.0, seed=3)
        self.assertAlmostEqual(mixture.noise_scale, 0.5, places=12)

    def test_positive_snr(self):
        mixture = mix_at_snr(self.clean, scaled_noise(8000, 0.1), 5.0, seed=3)
        self.assertAlmostEqual(mixture.noise_scale, 10 ** -0.25, places=9)

    @given(st.floats(min_value=-10, max_value=20), st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_achieved_snr(self, snr, seed):
        mixture = mix_at_snr(self.clean, scaled_noise(20000, 0.05, seed=seed), snr, seed)
        self.assertAlmostEqual(achieved_snr_db(self.clean, mixture), snr, places=6)
        self.assertLessEqual(np.max(np.abs(mixture.wave.samples)), 1.0 + 1e-12)

    def test_peak_scaling(self):
        t = np.arange(8000) / 16000
        loud = WaveBuffer(0.9 * np.sin(2 * np.pi * 300 * t))
        mixture = mix_at_snr(loud, scaled_noise(8000, 0.1), -6.0, seed=0)
        self.assertLess(mixture.peak_scale, 1.0)
        self.assertAlmostEqual(np.max(np.abs(mixture.wave.samples)), 1.0)
        self.assertAlmostEqual(achieved_snr_db(loud, mixture), -6.0, places=6)

    def test_silent_inputs(self):
        with self.assertRaises(SilentClean):
            mix_at_snr(WaveBuffer(np.zeros(100)), scaled_noise(100, 0.1), 0.0, 0)
        with self.assertRaises(SilentNoise):
            mix_at_snr(self.clean, WaveBuffer(np.zeros(9000)), 0.0, 0)
        with self.assertRaises(SilentNoise):
            mix_at_snr(self.clean, WaveBuffer(np.zeros(0)), 0.0, 0)

    def test_short_noise_loops(self):
        mixture = mix_at_snr(self.clean, scaled_noise(300, 0.1), 0.0, seed=5)
        self.assertEqual(len(mixture.wave), len(self.clean))
        residual = mixture.wave.samples - self.clean.samples
        np.testing.assert_allclose(residual[:300], residual[300:600], atol=1e-12)

    def test_seeded_offset(self):
        noise = scaled_noise(40000, 0.1)
        a = mix_at_snr(self.clean, noise, 0.0, seed=11)
        b = mix_at_snr(self.clean, noise, 0.0, seed=11)
        self.assertEqual(a.offset, b.offset)
        np.testing.assert_array_equal(a.wave.samples, b.wave.samples)


class SynthesisTests(SimpleTestCase):
    def test_utterance_is_deterministic(self):
        a, b = synth_utterance(42), synth_utterance(42)
        np.testing.assert_array_equal(a.samples, b.samples)
        self.assertTrue(1.0 <= a.duration_s <= 3.0)
        self.assertAlmostEqual(np.sqrt(np.mean(a.samples**2)), 0.1, places=9)

    def test_noise_kinds(self):
        for kind in NoiseKind.values:
            noise = synth_noise(kind, 8000, seed=1)
            self.assertEqual(len(noise), 8000)
            self.assertAlmostEqual(np.sqrt(np.mean(noise.samples**2)), 0.1, places=9)
        with self.assertRaises(UsageError):
            synth_noise("brown", 8000, seed=1)

    def test_derive_seed(self):
        self.assertEqual(derive_seed(3, "u0001"), derive_seed(3, "u0001"))
        self.assertNotEqual(derive_seed(3, "u0001"), derive_seed(3, "u0002"))
        self.assertNotEqual(derive_seed(3, "u0001"), derive_seed(4, "u0001"))

    @given(st.integers(min_value=1, max_value=60), st.integers(min_value=0, max_value=1000))
    @settings(max_examples=40)
    def test_splits_keep_training_data(self, n, seed):
        ids = [f"u{i:04d}" for i in range(n)]
        splits = assign_splits(ids, seed)
        self.assertEqual(set(splits), set(ids))
        self.assertGreaterEqual(list(splits.values()).count(Split.TRAIN), 1)
        self.assertEqual(splits, assign_splits(ids, seed))


class CorpusTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.mkdtemp()
        cls.root = Path(cls.tmp) / "corpus"
        cls.entries = synth_corpus(10, seed=7, out_dir=cls.root)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)
        super().tearDownClass()

    def test_entry_counts(self):
        clean = [e for e in self.entries if e.condition == Condition.CLEAN]
        noisy = [e for e in self.entries if e.condition == Condition.NOISY]
        self.assertEqual(len(clean), 10)
        self.assertEqual(len(noisy), 30)

    def test_snr_sets_follow_split(self):
        for entry in self.entries:
            if entry.condition != Condition.NOISY:
                self.assertIsNone(entry.snr_db)
            elif entry.split == Split.TEST:
                self.assertIn(entry.snr_db, (-6.0, 0.0, 6.0))
            else:
                self.assertIn(entry.snr_db, (-5.0, 0.0, 5.0))

    def test_splits_are_per_source(self):
        split_of = {}
        for entry in self.entries:
            self.assertEqual(split_of.setdefault(entry.source_id, entry.split), entry.split)
        self.assertEqual(len(select_split(self.entries, Split.TEST)), 2 * 4)

    def test_manifest_and_bank_written(self):
        loaded = read_manifest(self.root / MANIFEST_FILE)
        self.assertEqual([e.utt_id for e in loaded], [e.utt_id for e in self.entries])
        self.assertTrue(all(Path(e.input_path).is_file() for e in loaded))
        self.assertEqual(len(load_audiograms(self.root / AUDIOGRAMS_FILE)), 2)

    def test_noisy_shares_clean_length(self):
        for entry in self.entries[:8]:
            self.assertEqual(len(read_wav(entry.input_path)), len(read_wav(entry.clean_path)))

    def test_same_seed_same_bytes(self):
        with tempfile.TemporaryDirectory() as other:
            synth_corpus(10, seed=7, out_dir=other)
            for sub in ("clean/u0003.wav", "noisy/u0003_snr+5.wav", MANIFEST_FILE, AUDIOGRAMS_FILE):
                original = self.root / sub
                if not original.exists():
                    continue
                self.assertEqual((Path(other) / sub).read_bytes(), original.read_bytes())

    def test_rejects_empty_request(self):
        with tempfile.TemporaryDirectory() as other:
            with self.assertRaises(UsageError):
                synth_corpus(0, seed=1, out_dir=other)


class TargetTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.clean = synth_utterance(5)
        self.noisy = mix_at_snr(self.clean, scaled_noise(len(self.clean), 0.1), 0.0, 1).wave
        write_wav(self.root / "clean" / "s1.wav", self.clean)
        write_wav(self.root / "noisy" / "s1_snr+0.wav", self.noisy)
        clean_path = str(self.root / "clean" / "s1.wav")
        self.entries = [
            ManifestEntry("s1", clean_path, clean_path, Condition.CLEAN, Split.TRAIN, source_id="s1"),
            ManifestEntry("s1_snr+0", str(self.root / "noisy" / "s1_snr+0.wav"), clean_path, Condition.NOISY,
                          Split.TRAIN, snr_db=0.0, source_id="s1"),
        ]
        self.bank = [Audiogram((20, 25, 35, 50, 65, 70), "slope"), Audiogram((40,) * 6, "flat")]

    def tearDown(self):
        self.tmp.cleanup()

    def assertTargetMatches(self, entry, source):
        by_id = {a.id: a for a in self.bank}
        expected, _ = amplify_reference(read_wav(source), by_id[entry.audiogram_id])
        written = read_wav(entry.target_path)
        np.testing.assert_allclose(written.samples, expected.samples, atol=1.0 / 32768)

    def test_neuroamp_pairs(self):
        updated = build_targets(self.entries, self.bank, k=2)
        self.assertEqual(len(updated), 4)
        self.assertEqual({e.audiogram_id for e in updated}, {"slope", "flat"})
        self.assertTrue(all(Path(e.target_path).parent == self.root / "target" for e in updated))
        for entry in updated:
            self.assertTargetMatches(entry, entry.input_path)

    def test_denoising_targets_come_from_clean(self):
        updated = build_targets(self.entries, self.bank, mode=PairingMode.DENOISING, k=1)
        noisy = [e for e in updated if e.condition == Condition.NOISY]
        self.assertEqual(len(noisy), 1)
        self.assertTargetMatches(noisy[0], noisy[0].clean_path)
        self.assertEqual(noisy[0].input_path, self.entries[1].input_path)

    def test_missing_clean_file(self):
        broken = [replace(self.entries[0], clean_path=str(self.root / "clean" / "gone.wav"))]
        with self.assertRaises(MissingAudio):
            build_targets(broken, self.bank)
        self.assertFalse((self.root / "target").exists())

    def test_unknown_mode_and_empty_manifest(self):
        with self.assertRaises(UsageError):
            build_targets(self.entries, self.bank, mode="karaoke")
        with self.assertRaises(UsageError):
            build_targets([], self.bank)

    def test_load_pair_shapes(self):
        updated = build_targets(self.entries, self.bank, k=1)
        pair = load_pair(updated[1], {a.id: a for a in self.bank})
        self.assertEqual(pair.input_logmag.shape, pair.target_logmag.shape)
        self.assertEqual(pair.input_logmag.shape[1], 257)
        self.assertEqual(pair.origin_len, len(self.clean))
        self.assertEqual(pair.key, f"s1_snr+0__{updated[1].audiogram_id}")

    def test_load_pair_silence(self):
        write_wav(self.root / "quiet.wav", WaveBuffer(np.zeros(4000)))
        write_wav(self.root / "quiet_target.wav", WaveBuffer(np.zeros(4000)))
        entry = ManifestEntry("quiet", str(self.root / "quiet.wav"), str(self.root / "quiet.wav"),
                              target_path=str(self.root / "quiet_target.wav"), audiogram_id="flat")
        pair = load_pair(entry, {"flat": self.bank[1]})
        self.assertFalse(np.any(pair.input_logmag))

    def test_load_pair_errors(self):
        write_wav(self.root / "a.wav", WaveBuffer(np.zeros(4000)))
        write_wav(self.root / "b.wav", WaveBuffer(np.zeros(6000)))
        entry = ManifestEntry("a", str(self.root / "a.wav"), str(self.root / "a.wav"),
                              target_path=str(self.root / "b.wav"), audiogram_id="flat")
        with self.assertRaises(ShapeMismatch):
            load_pair(entry, {"flat": self.bank[1]})
        with self.assertRaises(InvalidAudiogram):
            load_pair(entry, {})
        with self.assertRaises(MissingAudio):
            load_pair(replace(entry, target_path=""), {"flat": self.bank[1]})


class ManifestTests(SimpleTestCase):
    def test_paths_relative_on_disk(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            entry = ManifestEntry("u1", str(root / "noisy" / "u1.wav"), str(root / "clean" / "u1.wav"),
                                  Condition.NOISY, Split.VAL, snr_db=5.0)
            write_manifest(root / "m.jsonl", [entry])
            row = json.loads((root / "m.jsonl").read_text().splitlines()[0])
            self.assertEqual(row["input_path"], "noisy/u1.wav")
            self.assertEqual(row["source_id"], "u1")

            loaded = read_manifest(root / "m.jsonl")[0]
            self.assertEqual(Path(loaded.input_path), (root / "noisy" / "u1.wav").resolve())
            self.assertEqual(loaded.split, Split.VAL)
            self.assertEqual(loaded.snr_db, 5.0)

    def test_invalid_rows(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "m.jsonl"
            path.write_text(json.dumps({"utt_id": "u1", "input_path": "a.wav", "clean_path": "a.wav",
                                        "condition": "muffled", "split": "train"}) + "\n")
            with self.assertRaises(IoFailure):
                read_manifest(path)
            path.write_text("{not json\n")
            with self.assertRaises(IoFailure):
                read_manifest(path)
            with self.assertRaises(IoFailure):
                read_manifest(Path(tmp) / "absent.jsonl")
