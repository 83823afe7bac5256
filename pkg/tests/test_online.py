#!/usr/bin/env python3
"""
Online Tests - Tests that require live MCP servers

These tests need the waveform, rig and analysis servers running (see
start_all_servers.py). Servers that cannot be reached are skipped.
"""

import os
import sys
import unittest

import requests

# Add the parent directory to the path so we can import from tests
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from client.rig_client import RigClient, RigClientError, base_url  # noqa: E402
from config_loader import get_config_loader, get_testing_config  # noqa: E402
from jamgrip.waveform import WaveformSpec  # noqa: E402


def server_reachable(server_key: str) -> bool:
    """True when the server's Gradio page answers."""
    url = base_url(get_config_loader().get_server_url(server_key))
    timeout = get_testing_config().get("timeout", 30)
    try:
        return requests.get(url, timeout=timeout).status_code == 200
    except requests.RequestException:
        return False


class TestServerHealthOnline(unittest.TestCase):
    """Check that each configured server responds."""

    def test_servers_respond(self):
        for server_key in get_config_loader().get_servers():
            with self.subTest(server=server_key):
                if not server_reachable(server_key):
                    self.skipTest(f"{server_key} server not running")
                self.assertTrue(server_reachable(server_key))

    def test_client_status(self):
        if not all(map(server_reachable, get_config_loader().get_servers())):
            self.skipTest("not every server is running")
        status = RigClient().get_server_status()
        self.assertEqual(set(status), {"waveform", "rig", "analysis"})
        for server_key, info in status.items():
            self.assertIn(info["status"], ("connected", "error"))


class TestWaveformOnline(unittest.TestCase):
    """Waveform tools over the Gradio API."""

    @classmethod
    def setUpClass(cls):
        if not server_reachable("waveform"):
            raise unittest.SkipTest("Waveform server not running")
        cls.client = RigClient()

    def test_sample_tone(self):
        spec = WaveformSpec.tone(200.0, 100.0, duration=1.0).to_json()
        result = self.client.sample_waveform(spec, 0.25)
        self.assertAlmostEqual(result["frequency_hz"], 200.0)

    def test_synthesize(self):
        spec = WaveformSpec.sweep(100.0, 800.0, duration=1.0).to_json()
        result = self.client.synthesize_waveform(spec, 8000.0, 5)
        self.assertEqual(result["sample_count"], 8000)
        self.assertEqual(len(result["samples"]), 5)

    def test_error_raises(self):
        with self.assertRaises(RigClientError):
            self.client.sample_waveform("{broken", 0.0)


class TestAnalysisOnline(unittest.TestCase):
    """Analysis tools over the Gradio API."""

    @classmethod
    def setUpClass(cls):
        if not server_reachable("analysis"):
            raise unittest.SkipTest("Analysis server not running")
        cls.client = RigClient()

    def test_compare_conditions(self):
        result = self.client.compare_conditions(
            {"low": [1, 2, 3], "high": [4, 5, 6]}
        )
        self.assertEqual(result["pairs"][0]["u"], 0.0)

    def test_analyze_trace(self):
        rows = ["t_seconds,force_newtons"]
        for i in range(3001):
            t = i * 0.001
            f = 20.0 * min(t, 1.0) - 30.0 * max(0.0, t - 1.0)
            if t > 2.0:
                f = -10.0 + 10.0 * (t - 2.0) / 1.0
            rows.append(f"{t:.3f},{f:.6f}")
        result = self.client.analyze_force_trace("\n".join(rows))
        self.assertAlmostEqual(result["push_force"], 20.0, delta=0.5)


class TestRigOnline(unittest.TestCase):
    """A small simulated grip test over the Gradio API."""

    @classmethod
    def setUpClass(cls):
        if not server_reachable("rig"):
            raise unittest.SkipTest("Rig server not running")
        cls.client = RigClient()

    def test_grip_test_on_small_pack(self):
        result = self.client.run_grip_test("", 0, 60, 0.0, 100)
        self.assertIn("push_force", result)
        self.assertGreaterEqual(result["holding_force"], 0.0)
        self.assertEqual(len(result["trace"]["t"]), len(result["trace"]["f"]))


if __name__ == "__main__":
    unittest.main()
