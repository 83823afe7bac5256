#!/usr/bin/env python3
"""
Rig Client

Connects to the three rig servers and exposes their tools as plain methods:
- Waveform Server: waveform synthesis and sampling
- Rig Server: simulated grip tests, relaxation, contact area, stiffness
- Analysis Server: force metric extraction and condition comparison

Every tool returns a JSON string; the client parses it and raises
RigClientError when the server answers with {"error": ...}.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

# Add the project root to the path so we can import the shared config_loader
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from gradio_client import Client  # noqa: E402

from config_loader import get_config_loader  # noqa: E402

logger = logging.getLogger(__name__)

MCP_SUFFIX = "/gradio_api/mcp/sse"


class RigClientError(RuntimeError):
    """A server tool reported an error or could not be reached."""


def base_url(url: str) -> str:
    """Strip the MCP SSE suffix from a configured server URL."""
    if url.endswith(MCP_SUFFIX):
        url = url[: -len(MCP_SUFFIX)]
    return url.rstrip("/") + "/"


class RigClient:
    """Client for the waveform, rig and analysis servers."""

    def __init__(self, servers: Optional[Dict[str, Any]] = None):
        self.servers = servers or get_config_loader().get_servers()
        self._clients: Dict[str, Client] = {}

    def _client(self, server_key: str) -> Client:
        if server_key not in self._clients:
            if server_key not in self.servers:
                raise RigClientError(f"Unknown server: {server_key}")
            url = base_url(self.servers[server_key]["url"])
            try:
                self._clients[server_key] = Client(url, verbose=False)
            except (ConnectionError, OSError, ValueError) as e:
                raise RigClientError(
                    f"Cannot connect to {self.servers[server_key]['name']}: {e}"
                ) from e
            logger.info("Connected to %s at %s", server_key, url)
        return self._clients[server_key]

    def call(self, server_key: str, tool: str, *args: Any) -> Dict[str, Any]:
        """Invoke a tool by name and return its parsed JSON result."""
        raw = self._client(server_key).predict(*args, api_name=f"/{tool}")
        result = json.loads(raw) if isinstance(raw, str) else raw
        if isinstance(result, dict) and "error" in result:
            logger.error("%s.%s failed: %s", server_key, tool, result["error"])
            raise RigClientError(result["error"])
        return result

    # Waveform server

    def synthesize_waveform(
        self, spec_json: str, sample_rate: float = 8000.0, max_samples: int = 2000
    ) -> Dict[str, Any]:
        return self.call(
            "waveform", "synthesize_waveform", spec_json, sample_rate, max_samples
        )

    def sample_waveform(self, spec_json: str, t: float) -> Dict[str, Any]:
        return self.call("waveform", "sample_waveform", spec_json, t)

    # Rig server

    def run_grip_test(
        self,
        waveform_json: str = "",
        seed: int = 0,
        grain_count: int = 0,
        push_height: float = 0.0,
        trace_points: int = 500,
    ) -> Dict[str, Any]:
        return self.call(
            "rig",
            "run_grip_test",
            waveform_json,
            seed,
            grain_count,
            push_height,
            trace_points,
        )

    def run_relaxation_test(
        self,
        push_height: float = 40.0,
        vibrate: bool = True,
        seed: int = 0,
        grain_count: int = 0,
    ) -> Dict[str, Any]:
        return self.call(
            "rig", "run_relaxation_test", push_height, vibrate, seed, grain_count
        )

    def measure_contact_area(
        self, volume: float = 150.0, seed: int = 0, grain_count: int = 0
    ) -> Dict[str, Any]:
        return self.call(
            "rig", "measure_contact_area", volume, seed, grain_count
        )

    def measure_stiffness(
        self, seed: int = 0, grain_count: int = 0
    ) -> Dict[str, Any]:
        return self.call("rig", "measure_stiffness", seed, grain_count)

    # Analysis server

    def analyze_force_trace(
        self,
        csv_text: str,
        phases_json: str = "",
        smoothing_window: float = 0.02,
        gradient_threshold: float = 1.0,
        min_prominence: float = 0.05,
    ) -> Dict[str, Any]:
        return self.call(
            "analysis",
            "analyze_force_trace",
            csv_text,
            phases_json,
            smoothing_window,
            gradient_threshold,
            min_prominence,
        )

    def compare_conditions(
        self,
        groups: Dict[str, Any],
        alpha: float = 0.05,
        correction: str = "none",
    ) -> Dict[str, Any]:
        return self.call(
            "analysis",
            "compare_conditions",
            json.dumps(groups),
            alpha,
            correction,
        )

    def get_server_status(self) -> Dict[str, Dict[str, Any]]:
        """Connection status for every configured server."""
        status: Dict[str, Dict[str, Any]] = {}
        for server_key, server_config in self.servers.items():
            try:
                self._client(server_key)
                status[server_key] = {
                    "status": "connected",
                    "name": server_config["name"],
                }
            except RigClientError as e:
                status[server_key] = {
                    "status": "error",
                    "error": str(e),
                    "name": server_config["name"],
                }
        return status
