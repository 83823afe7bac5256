#!/usr/bin/env python3
"""
Unified Configuration Loader for the jamming gripper rig

This module provides a centralized way to load and access configuration
for all components (simulator, harness, tool servers, client, tests).
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

REQUIRED_SECTIONS = [
    "servers",
    "simulation",
    "contact",
    "membrane",
    "geometry",
    "vacuum",
    "waveform",
    "grip_cycle",
    "relaxation",
    "metrics",
    "stats",
    "harness",
    "testing",
    "logging",
]

OUTPUT_DIR_ENV = "JAMGRIP_OUTPUT_DIR"
WORKERS_ENV = "JAMGRIP_WORKERS"
CONFIG_PATH_ENV = "JAMGRIP_CONFIG"


class ConfigLoader:
    """Centralized configuration loader for the rig project."""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize the configuration loader.

        Args:
            config_path: Path to the configuration file. If None, uses
                $JAMGRIP_CONFIG or the config.json next to this module.
        """
        if config_path is None:
            config_path = os.getenv(CONFIG_PATH_ENV)
        if config_path is None:
            script_dir = Path(__file__).parent
            config_path = str(script_dir / "config.json")

        self.config_path = Path(config_path)
        self._config: Optional[Dict[str, Any]] = None
        self._load_config()

    def _load_config(self):
        """Load the configuration from the JSON file."""
        if not self.config_path.exists():
            raise FileNotFoundError(
                f"Configuration file not found: {self.config_path}"
            )

        with open(self.config_path, "r") as f:
            self._config = json.load(f)

    def get_config(self) -> Dict[str, Any]:
        """Get the entire configuration."""
        if self._config is None:
            raise RuntimeError("Configuration not loaded")
        return self._config

    def _section(self, name: str) -> Dict[str, Any]:
        return dict(self.get_config().get(name, {}))

    def get_servers(self) -> Dict[str, Any]:
        """Get tool server configurations."""
        return self._section("servers")

    def get_server_config(self, server_key: str) -> Dict[str, Any]:
        """Get configuration for a specific server."""
        servers = self.get_servers()
        if server_key not in servers:
            raise KeyError(f"Server '{server_key}' not found in configuration")
        return servers[server_key]

    def get_server_port(self, server_key: str) -> int:
        """Get the port number for a specific server."""
        port = self.get_server_config(server_key).get("port")
        if port is None:
            raise KeyError(f"Port not found for server '{server_key}'")
        return port

    def get_server_url(self, server_key: str) -> str:
        """Get the MCP URL for a specific server."""
        url = self.get_server_config(server_key).get("url")
        if url is None:
            raise KeyError(f"URL not found for server '{server_key}'")
        return url

    def get_server_path(self, server_key: str) -> str:
        """Get the file path for a specific server."""
        path = self.get_server_config(server_key).get("path")
        if path is None:
            raise KeyError(f"Path not found for server '{server_key}'")
        return path

    def get_simulation_config(self) -> Dict[str, Any]:
        return self._section("simulation")

    def get_contact_config(self) -> Dict[str, Any]:
        return self._section("contact")

    def get_membrane_config(self) -> Dict[str, Any]:
        return self._section("membrane")

    def get_geometry_config(self) -> Dict[str, Any]:
        return self._section("geometry")

    def get_vacuum_config(self) -> Dict[str, Any]:
        return self._section("vacuum")

    def get_waveform_config(self) -> Dict[str, Any]:
        return self._section("waveform")

    def get_grip_cycle_config(self) -> Dict[str, Any]:
        return self._section("grip_cycle")

    def get_relaxation_config(self) -> Dict[str, Any]:
        return self._section("relaxation")

    def get_metrics_config(self) -> Dict[str, Any]:
        return self._section("metrics")

    def get_stats_config(self) -> Dict[str, Any]:
        return self._section("stats")

    def get_harness_config(self) -> Dict[str, Any]:
        """Get harness configuration with environment overrides applied."""
        harness = self._section("harness")
        output_dir = os.getenv(OUTPUT_DIR_ENV)
        if output_dir:
            harness["output_dir"] = output_dir
        workers = os.getenv(WORKERS_ENV)
        if workers:
            try:
                harness["workers"] = max(1, int(workers))
            except ValueError:
                raise ValueError(
                    f"{WORKERS_ENV} must be an integer, got '{workers}'"
                )
        return harness

    def get_testing_config(self) -> Dict[str, Any]:
        return self._section("testing")

    def get_logging_config(self) -> Dict[str, Any]:
        return self._section("logging")

    def get_all_server_ports(self) -> Dict[str, int]:
        """Get all server ports as a dictionary."""
        servers = self.get_servers()
        return {key: server.get("port") for key, server in servers.items()}

    def get_all_server_urls(self) -> Dict[str, str]:
        """Get all server URLs as a dictionary."""
        servers = self.get_servers()
        return {key: server.get("url") for key, server in servers.items()}

    def validate_config(self) -> bool:
        """Validate that the configuration is complete and correct."""
        try:
            if self._config is None:
                raise RuntimeError("Configuration not loaded")

            for section in REQUIRED_SECTIONS:
                if section not in self._config:
                    raise ValueError(f"Missing required section: {section}")

            servers = self.get_servers()
            if not servers:
                raise ValueError("No servers defined in configuration")

            for server_key, server_config in servers.items():
                for field in ["name", "port", "url", "description", "path"]:
                    if field not in server_config:
                        raise ValueError(
                            f"Server '{server_key}' missing required field: {field}"
                        )
                if not isinstance(server_config["port"], int):
                    raise ValueError(
                        f"Server '{server_key}' port must be an integer"
                    )
                url = server_config["url"]
                if (
                    not url.startswith("http://")
                    or "gradio_api/mcp/sse" not in url
                ):
                    raise ValueError(
                        f"Server '{server_key}' URL format is invalid"
                    )

            sim = self.get_simulation_config()
            if float(sim["dt"]) <= 0:
                raise ValueError("simulation.dt must be positive")
            if int(sim["grain_count"]) < 1:
                raise ValueError("simulation.grain_count must be >= 1")

            contact = self.get_contact_config()
            if not 0.0 <= float(contact["damping_ratio"]) <= 1.0:
                raise ValueError("contact.damping_ratio must be in [0, 1]")
            if float(contact["k_n"]) <= 0 or float(contact["k_t"]) <= 0:
                raise ValueError("contact stiffnesses must be positive")
            if float(contact["mu"]) < 0:
                raise ValueError("contact.mu must be non-negative")

            cycle = self.get_grip_cycle_config()
            if not (
                cycle["push_height"]
                < cycle["lift_height"]
                < cycle["start_height"]
            ):
                raise ValueError(
                    "grip_cycle heights must satisfy push < lift < start"
                )

            return True

        except (ValueError, KeyError, TypeError, RuntimeError) as e:
            logging.getLogger(__name__).error(
                "Configuration validation failed: %s", e
            )
            return False


# Global configuration loader instance
_config_loader: Optional[ConfigLoader] = None


def get_config_loader() -> ConfigLoader:
    """Get the global configuration loader instance."""
    global _config_loader
    if _config_loader is None:
        _config_loader = ConfigLoader()
    return _config_loader


def reset_config_loader() -> None:
    """Drop the cached loader so the next call re-reads the file."""
    global _config_loader
    _config_loader = None


def get_server_port(server_key: str) -> int:
    return get_config_loader().get_server_port(server_key)


def get_server_url(server_key: str) -> str:
    return get_config_loader().get_server_url(server_key)


def get_harness_config() -> Dict[str, Any]:
    return get_config_loader().get_harness_config()


def get_testing_config() -> Dict[str, Any]:
    return get_config_loader().get_testing_config()


def get_logging_config() -> Dict[str, Any]:
    return get_config_loader().get_logging_config()


def setup_logging(console_level: int = logging.ERROR) -> logging.Logger:
    """
    Configure root logging from the `logging` config section.

    Everything at the configured level goes to the log file; only
    `console_level` and above reaches the console. MCP chatter is capped at
    `mcp_logging_level`.
    """
    logging_config = get_logging_config()
    log_file = logging_config.get("file", "jamgrip.log")
    log_level = getattr(logging, logging_config.get("level", "INFO"))
    log_format = logging_config.get(
        "format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    mcp_level = getattr(
        logging, logging_config.get("mcp_logging_level", "ERROR")
    )
    for name in ("mcp", "mcp.server", "mcp.server.lowlevel.server", "httpx"):
        logging.getLogger(name).setLevel(mcp_level)

    file_handler = logging.FileHandler(log_file)
    console_handler = logging.StreamHandler()
    console_handler.setLevel(console_level)

    logging.basicConfig(
        level=log_level,
        format=log_format,
        handlers=[file_handler, console_handler],
    )
    return logging.getLogger("jamgrip")


if __name__ == "__main__":
    try:
        config_loader = ConfigLoader()
        if config_loader.validate_config():
            print("✅ Configuration is valid")
            print(
                f"Available servers: {list(config_loader.get_servers().keys())}"
            )
            sim = config_loader.get_simulation_config()
            print(f"Grains: {sim['grain_count']}  dt: {sim['dt']} s")
        else:
            print("❌ Configuration validation failed")
            exit(1)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"❌ Error loading configuration: {e}")
        exit(1)
