"""
Rig Client Package

A client for the waveform, rig and analysis servers of the jamming
gripper rig.
"""

from .client import RigClient, RigClientError, base_url

__version__ = "1.0.0"
__author__ = "Jamming Gripper Rig Team"

__all__ = [
    "RigClient",
    "RigClientError",
    "base_url",
]
