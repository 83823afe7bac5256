#!/usr/bin/env python3
"""
Detailed Server Functionality Tests

Calls the tool functions of each server module directly, without launching
Gradio, covering normal responses, edge cases and error payloads.
"""

import importlib.util
import json
import os
import sys
import unittest
from pathlib import Path

import numpy as np

# Add the parent directory to the path so we can import from tests
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from config_loader import get_config_loader  # noqa: E402
from jamgrip.oracles import synthetic_grip_trace  # noqa: E402
from jamgrip.waveform import WaveformSpec  # noqa: E402

PROJECT_ROOT = Path(parent_dir)


def load_server(server_key: str):
    """Import a server module from the path recorded in config.json."""
    path = PROJECT_ROOT / get_config_loader().get_server_path(server_key)
    spec = importlib.util.spec_from_file_location(f"{server_key}_server", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class TestWaveformServerFunctionality(unittest.TestCase):
    """Test waveform synthesis tools in detail."""

    @classmethod
    def setUpClass(cls):
        cls.server = load_server("waveform")

    def test_synthesize_tone(self):
        spec = WaveformSpec.tone(200.0, 100.0, duration=1.0).to_json()
        result = json.loads(self.server.synthesize_waveform(spec, 8000.0, 10))
        self.assertNotIn("error", result)
        self.assertEqual(result["label"], "200Hz@100%")
        self.assertEqual(result["sample_count"], 8000)
        self.assertEqual(len(result["samples"]), 10)
        self.assertAlmostEqual(result["rms_mm"], 0.5 / np.sqrt(2.0), places=3)
        self.assertLessEqual(result["peak_mm"], 0.5 + 1e-9)

    def test_synthesize_sweep_label(self):
        spec = WaveformSpec.sweep(100.0, 800.0, duration=1.0).to_json()
        result = json.loads(self.server.synthesize_waveform(spec, 8000.0, 0))
        self.assertEqual(result["label"], "100-800Hz")
        self.assertEqual(result["samples"], [])

    def test_synthesize_rejects_low_sample_rate(self):
        spec = WaveformSpec.tone(800.0, 100.0, duration=1.0).to_json()
        result = json.loads(self.server.synthesize_waveform(spec, 3000.0))
        self.assertIn("error", result)
        self.assertTrue(result["error"].startswith("Error synthesizing"))

    def test_synthesize_rejects_bad_json(self):
        result = json.loads(self.server.synthesize_waveform("{not json"))
        self.assertIn("error", result)

    def test_sample_waveform(self):
        spec = WaveformSpec.sweep(100.0, 200.0, duration=10.0).to_json()
        result = json.loads(self.server.sample_waveform(spec, 5.0))
        self.assertAlmostEqual(result["frequency_hz"], 150.0)
        self.assertEqual(result["t"], 5.0)

    def test_sample_outside_waveform(self):
        spec = WaveformSpec.tone(200.0, 100.0, duration=1.0).to_json()
        result = json.loads(self.server.sample_waveform(spec, -1.0))
        self.assertIn("error", result)


class TestAnalysisServerFunctionality(unittest.TestCase):
    """Test metric extraction and comparison tools in detail."""

    @classmethod
    def setUpClass(cls):
        cls.server = load_server("analysis")

    def _csv(self, trace):
        lines = ["t_seconds,force_newtons"]
        lines += [f"{float(t)!r},{float(f)!r}" for t, f in zip(trace.t, trace.f)]
        return "\n".join(lines) + "\n"

    def test_analyze_planted_trace(self):
        planted = synthetic_grip_trace(np.random.default_rng(3))
        phases = json.dumps([s.to_dict() for s in planted.trace.phases])
        result = json.loads(
            self.server.analyze_force_trace(self._csv(planted.trace), phases)
        )
        self.assertNotIn("error", result)
        self.assertTrue(result["holding_detected"])
        self.assertAlmostEqual(result["push_force"], planted.push, delta=0.01)
        self.assertAlmostEqual(
            result["holding_force"], planted.holding, delta=0.01 * planted.holding
        )

    def test_analyze_without_phases(self):
        planted = synthetic_grip_trace(np.random.default_rng(4))
        result = json.loads(
            self.server.analyze_force_trace(self._csv(planted.trace))
        )
        self.assertIn("push_force", result)

    def test_analyze_empty_csv(self):
        result = json.loads(
            self.server.analyze_force_trace("t_seconds,force_newtons\n")
        )
        self.assertIn("error", result)
        self.assertTrue(result["error"].startswith("Error analyzing"))

    def test_compare_conditions(self):
        groups = {"0%": [1, 2, 3], "150%": [4, 5, 6]}
        result = json.loads(self.server.compare_conditions(json.dumps(groups)))
        self.assertEqual(result["labels"], ["0%", "150%"])
        pair = result["pairs"][0]
        self.assertEqual(pair["u"], 0.0)
        self.assertAlmostEqual(pair["p"], 0.1)
        self.assertFalse(pair["significant"])

    def test_compare_with_correction(self):
        groups = {"a": [1, 2, 3, 4], "b": [5, 6, 7, 8], "c": [9, 10, 11, 12]}
        result = json.loads(
            self.server.compare_conditions(json.dumps(groups), 0.05, "holm")
        )
        self.assertEqual(result["correction"], "holm")
        self.assertEqual(len(result["pairs"]), 3)

    def test_compare_errors(self):
        for payload in ("[1, 2]", '{"only": [1]}', '{"a": [], "b": [1]}'):
            with self.subTest(payload=payload):
                result = json.loads(self.server.compare_conditions(payload))
                self.assertIn("error", result)
        result = json.loads(
            self.server.compare_conditions('{"a": [1], "b": [2]}', 0.05, "fdr")
        )
        self.assertIn("error", result)


class TestRigServerFunctionality(unittest.TestCase):
    """Rig tools that fail before any simulation starts."""

    @classmethod
    def setUpClass(cls):
        cls.server = load_server("rig")

    def test_bad_waveform_json(self):
        result = json.loads(self.server.run_grip_test("{broken"))
        self.assertIn("error", result)
        self.assertTrue(result["error"].startswith("Error running grip test"))

    def test_push_height_above_lift(self):
        result = json.loads(self.server.run_grip_test("", push_height=90.0))
        self.assertIn("error", result)

    def test_thin_trace(self):
        planted = synthetic_grip_trace(np.random.default_rng(2))
        thinned = self.server._thin(planted.trace, 50)
        self.assertLessEqual(len(thinned["t"]), 2 * 50 + 1)
        self.assertEqual(len(thinned["t"]), len(thinned["f"]))
        self.assertEqual(len(thinned["phases"]), len(planted.trace.phases))

    def test_contact_area_volume_out_of_range(self):
        result = json.loads(self.server.measure_contact_area(volume=500.0))
        self.assertIn("error", result)
        self.assertTrue(result["error"].startswith("Error measuring contact area"))

    def test_stiffness_bad_grain_count(self):
        result = json.loads(self.server.measure_stiffness(grain_count=-5))
        self.assertIn("error", result)
        self.assertTrue(result["error"].startswith("Error measuring stiffness"))


if __name__ == "__main__":
    unittest.main()
