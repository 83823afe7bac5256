#!/usr/bin/env python3
"""
Entry point for the jamming gripper simulator CLI.

Usage:
    python run_rig.py validate
    python run_rig.py run-plan VolTone --levels 0,75,150 --workers 4
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from jamgrip.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
