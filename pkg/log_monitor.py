#!/usr/bin/env python3
"""
Log monitor that follows the rig log and shows trial and plan progress
"""

import os
import sys
import time
from typing import Iterable, Optional

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config_loader import get_logging_config  # noqa: E402


def keep_line(
    line: str, include: Iterable[str], exclude: Iterable[str]
) -> bool:
    """Whether a log line passes the configured filters."""
    if any(pattern in line for pattern in exclude):
        return False
    if "ERROR" in line or "WARNING" in line:
        return True
    return any(pattern in line for pattern in include)


def format_line(line: str) -> str:
    line = line.strip()
    if "ERROR" in line or "WARNING" in line:
        return f"⚠️  {line}"
    if "Trial" in line or "trial" in line:
        return f"🔧 {line}"
    return f"ℹ️  {line}"


def monitor_logs(log_file: Optional[str] = None):
    """Follow the log file, printing lines that pass the filters."""
    logging_config = get_logging_config()
    log_file = log_file or logging_config.get("file", "jamgrip.log")
    filters = logging_config.get("filters", {})
    include = filters.get("include", [])
    exclude = filters.get("exclude", [])

    if not os.path.exists(log_file):
        print(
            f"Log file {log_file} not found. Waiting for it to be created..."
        )
        while not os.path.exists(log_file):
            time.sleep(1)

    print(f"🔍 Monitoring {log_file} for trial progress...")
    print(f"📝 Filtering out {', '.join(exclude) or 'nothing'}")
    print("=" * 60)

    last_position = 0

    try:
        while True:
            with open(log_file, "r") as f:
                f.seek(last_position)
                new_lines = f.readlines()
                last_position = f.tell()

            for line in new_lines:
                if keep_line(line, include, exclude):
                    print(format_line(line))

            time.sleep(0.5)

    except KeyboardInterrupt:
        print("\n👋 Log monitoring stopped")


if __name__ == "__main__":
    monitor_logs(sys.argv[1] if len(sys.argv) > 1 else None)
