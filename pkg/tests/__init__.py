"""
Test suite for the jamming gripper rig

Offline unit tests for the simulator, analysis and servers, online tests
against running servers, and a gated acceptance suite.
"""

__version__ = "1.0.0"
__author__ = "Jamming Gripper Rig Team"

# Test modules
__all__ = [
    "test_waveform",
    "test_dem_core",
    "test_membrane",
    "test_rig",
    "test_metrics",
    "test_stats",
    "test_harness",
    "test_plots",
    "test_cli",
    "test_server_functionality",
    "test_offline",
    "test_online",
    "test_acceptance",
]
