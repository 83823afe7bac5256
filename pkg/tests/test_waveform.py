#!/usr/bin/env python3
"""
Waveform Tests - synthesis, sampling and validation of exciter waveforms
"""

import json
import math
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add the parent directory to the path so we can import from tests
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from jamgrip.errors import ConfigurationError, DomainError  # noqa: E402
from jamgrip.waveform import (  # noqa: E402
    WaveformKind,
    WaveformSpec,
    instantaneous_frequency,
    rms,
    sample,
    sample_many,
    synthesize,
    volume_to_amplitude,
)


def _crossing_frequencies(buffer):
    """Frequency from spacing of upward zero crossings, at interval midpoints."""
    s = buffer.samples
    t = buffer.times()
    up = np.nonzero((s[:-1] < 0.0) & (s[1:] >= 0.0))[0]
    frac = s[up] / (s[up] - s[up + 1])
    crossings = t[up] + frac / buffer.sample_rate
    spacing = np.diff(crossings)
    return crossings[:-1] + spacing / 2.0, 1.0 / spacing


class TestWaveformSpec(unittest.TestCase):
    """Construction rules for waveform descriptions."""

    def test_tone_constructor(self):
        spec = WaveformSpec.tone(200.0, 150.0)
        self.assertEqual(spec.kind, WaveformKind.TONE)
        self.assertEqual(spec.total_duration, 25.0)
        self.assertEqual(spec.label(), "200Hz@150%")

    def test_kind_from_string(self):
        spec = WaveformSpec("Sweep", 100.0, 800.0, 150.0, 150.0, 25.0)
        self.assertIs(spec.kind, WaveformKind.SWEEP)

    def test_rejects_non_positive_frequency(self):
        with self.assertRaises(DomainError):
            WaveformSpec.sweep(0.0, 800.0)

    def test_rejects_volume_out_of_range(self):
        with self.assertRaises(DomainError):
            WaveformSpec.tone(200.0, 201.0)
        with self.assertRaises(DomainError):
            WaveformSpec.volume_sweep(-1.0, 150.0)

    def test_pulse_train_needs_whole_segments(self):
        with self.assertRaises(DomainError):
            WaveformSpec(
                WaveformKind.PULSE_TRAIN, 100.0, 800.0, 150.0, 150.0, 25.0, 0.7
            )
        with self.assertRaises(DomainError):
            WaveformSpec(
                WaveformKind.PULSE_TRAIN, 100.0, 800.0, 150.0, 150.0, 25.0
            )
        spec = WaveformSpec.pulse_train(100.0, 800.0, segments=25)
        self.assertEqual(spec.segment_count, 25)

    def test_tone_rejects_changing_frequency(self):
        with self.assertRaises(DomainError):
            WaveformSpec(WaveformKind.TONE, 100.0, 200.0, 100.0, 100.0, 1.0)

    def test_json_round_trip(self):
        spec = WaveformSpec.volume_pulse_train(0.0, 150.0)
        again = WaveformSpec.from_json(spec.to_json())
        self.assertEqual(spec, again)
        self.assertEqual(json.loads(spec.to_json())["kind"], "VolumePulseTrain")

    def test_labels(self):
        self.assertEqual(WaveformSpec.sweep(100, 800).label(), "100-800Hz")
        self.assertEqual(WaveformSpec.volume_sweep(0, 150).label(), "0-150%")


class TestSampling(unittest.TestCase):
    """Analytic behaviour of sampled waveforms."""

    def test_volume_mapping_is_linear(self):
        self.assertAlmostEqual(volume_to_amplitude(100.0, 0.5), 0.5)
        self.assertAlmostEqual(volume_to_amplitude(150.0, 0.5), 0.75)
        self.assertEqual(volume_to_amplitude(0.0, 0.5), 0.0)

    def test_zero_volume_is_silent(self):
        spec = WaveformSpec.tone(200.0, 0.0, duration=1.0)
        buffer = synthesize(spec, 8000.0)
        self.assertEqual(float(np.abs(buffer.samples).max()), 0.0)

    def test_tone_frequency_constant(self):
        spec = WaveformSpec.tone(25.0, 100.0)
        for t in (0.0, 3.3, 25.0):
            self.assertEqual(instantaneous_frequency(spec, t), 25.0)

    def test_sweep_frequency_linear(self):
        spec = WaveformSpec.sweep(100.0, 800.0)
        self.assertAlmostEqual(instantaneous_frequency(spec, 0.0), 100.0)
        self.assertAlmostEqual(instantaneous_frequency(spec, 12.5), 450.0)
        self.assertAlmostEqual(instantaneous_frequency(spec, 25.0), 800.0)

    def test_pulse_train_resets_each_segment(self):
        spec = WaveformSpec.pulse_train(100.0, 800.0)
        self.assertAlmostEqual(instantaneous_frequency(spec, 0.5), 450.0)
        self.assertAlmostEqual(instantaneous_frequency(spec, 3.5), 450.0)
        self.assertAlmostEqual(instantaneous_frequency(spec, 3.0), 100.0)

    def test_sample_matches_sample_many(self):
        spec = WaveformSpec.pulse_train(100.0, 800.0, segments=5)
        t = np.linspace(0.0, spec.total_duration, 101)
        many = sample_many(spec, t)
        single = np.array([sample(spec, float(x)) for x in t])
        np.testing.assert_allclose(many, single, atol=1e-12)

    def test_sample_outside_duration(self):
        spec = WaveformSpec.tone(200.0, 100.0, duration=1.0)
        with self.assertRaises(DomainError):
            sample(spec, 1.5)
        with self.assertRaises(DomainError):
            sample(spec, -0.1)

    def test_tone_rms(self):
        spec = WaveformSpec.tone(200.0, 100.0, duration=1.0)
        buffer = synthesize(spec, 8000.0, reference_displacement=0.5)
        self.assertAlmostEqual(rms(buffer), 0.5 / math.sqrt(2), places=6)
        self.assertEqual(len(buffer), 8000)

    def test_tone_rms_flat_across_frequency(self):
        values = [
            rms(synthesize(WaveformSpec.tone(f, 150.0, duration=1.0), 8000.0))
            for f in (50.0, 200.0, 800.0)
        ]
        for value in values[1:]:
            self.assertAlmostEqual(value / values[0], 1.0, delta=0.005)

    def test_sweep_crossings_track_frequency(self):
        spec = WaveformSpec.sweep(100.0, 800.0)
        mid, measured = _crossing_frequencies(synthesize(spec, 16000.0))
        expected = 100.0 + 700.0 * mid / 25.0
        np.testing.assert_allclose(measured, expected, rtol=0.01)

    def test_downward_sweep_slows(self):
        spec = WaveformSpec.sweep(100.0, 1.0)
        mid, measured = _crossing_frequencies(synthesize(spec, 8000.0))
        self.assertTrue(np.all(np.diff(1.0 / measured) > 0))
        expected = 100.0 - 99.0 * mid / 25.0
        np.testing.assert_allclose(measured, expected, rtol=0.01)

    def test_volume_sweep_envelope_grows(self):
        spec = WaveformSpec.volume_sweep(0.0, 150.0, duration=2.0)
        buffer = synthesize(spec, 8000.0)
        half = len(buffer) // 2
        self.assertLess(rms(buffer.samples[:half]), rms(buffer.samples[half:]))

    def test_sample_rate_floor(self):
        spec = WaveformSpec.sweep(100.0, 800.0, duration=1.0)
        with self.assertRaises(ConfigurationError):
            synthesize(spec, 3000.0)

    def test_rms_empty(self):
        with self.assertRaises(DomainError):
            rms([])

    def test_buffer_to_csv(self):
        spec = WaveformSpec.tone(200.0, 100.0, duration=0.01)
        buffer = synthesize(spec, 8000.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = buffer.to_csv(Path(tmp) / "out" / "w.csv")
            lines = path.read_text().splitlines()
        self.assertEqual(lines[0], "t_seconds,amplitude")
        self.assertEqual(len(lines), len(buffer) + 1)


if __name__ == "__main__":
    unittest.main()
