import struct
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from hearing.exceptions import CorruptCheckpoint, IoFailure, VersionMismatch
from hearing.neuro_amp import AmpModel, Architecture, load_model, preset_config, save_model
from hearing.neuro_amp.checkpoint import MAGIC, decode_model, encode_model


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.model = AmpModel.initialize(preset_config("desk", arch=Architecture.CRNN), seed=4)
        self.blob = encode_model(self.model)

    def test_save_and_load_are_bit_exact(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "runs" / "model.namp"
            save_model(path, self.model)
            loaded = load_model(path)
        self.assertEqual(loaded.config, self.model.config)
        self.assertEqual(loaded.rng_seed, 4)
        self.assertEqual(set(loaded.params), set(self.model.params))
        for name, value in self.model.params.items():
            self.assertEqual(loaded.params[name].tobytes(), value.tobytes())

    def test_encoding_is_stable(self):
        self.assertEqual(encode_model(decode_model(self.blob)), self.blob)

    def test_truncated(self):
        for cut in (2, 10, len(self.blob) // 2, len(self.blob) - 1):
            with self.assertRaises(CorruptCheckpoint):
                decode_model(self.blob[:cut])

    def test_wrong_magic(self):
        with self.assertRaises(CorruptCheckpoint):
            decode_model(b"XXXX" + self.blob[4:])

    def test_future_version(self):
        blob = MAGIC + struct.pack("<I", 2) + self.blob[8:]
        with self.assertRaises(VersionMismatch):
            decode_model(blob)

    def test_trailing_bytes(self):
        with self.assertRaises(CorruptCheckpoint):
            decode_model(self.blob + b"\x00")

    def test_non_finite_values(self):
        model = self.model.copy()
        model.params["head.bias"][0] = np.nan
        with self.assertRaises(CorruptCheckpoint):
            decode_model(encode_model(model))

    def test_shape_disagreeing_with_config(self):
        other = AmpModel.initialize(preset_config("desk", arch=Architecture.CRNN, lstm_units=8))
        params = dict(self.model.params)
        params["core.lstm0.w_hidden"] = other.params["core.lstm0.w_hidden"]
        with self.assertRaises(CorruptCheckpoint):
            decode_model(encode_model(AmpModel(self.model.config, params)))

    def test_missing_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(IoFailure):
                load_model(Path(tmp) / "absent.namp")
