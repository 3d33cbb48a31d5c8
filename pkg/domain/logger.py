"""
domain.logger
--------------
Lightweight run log for the experiment runner.
Creates <log_dir>/run_log.csv and appends one row per CLI command.
"""

import os
import sys
import csv
from datetime import datetime, timezone
from typing import Dict, Any

LOG_NAME = "run_log.csv"

# Define header for CSV
FIELDNAMES = [
    "timestamp",
    "run_id",
    "command",
    "seed",
    "status",
    "exit_code",
    "verdict",
    "elapsed_ms",
    "out_dir",
]


def log_event(event: Dict[str, Any], log_dir: str) -> None:
    """Append a single event row to the CSV log."""
    try:
        os.makedirs(log_dir, exist_ok=True)
        log_file = os.path.join(log_dir, LOG_NAME)
        # ensure file exists with headers
        file_exists = os.path.isfile(log_file)
        with open(log_file, mode="a", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=FIELDNAMES, lineterminator="\n")
            if not file_exists:
                writer.writeheader()

            writer.writerow({
                "timestamp": datetime.now(timezone.utc).replace(tzinfo=None).isoformat(timespec="seconds") + "Z",
                "run_id": event.get("run_id"),
                "command": event.get("command"),
                "seed": event.get("seed"),
                "status": event.get("status", "ok"),
                "exit_code": event.get("exit_code", 0),
                "verdict": event.get("verdict", ""),
                "elapsed_ms": event.get("elapsed_ms"),
                "out_dir": event.get("out_dir", ""),
            })

    except Exception as e:
        print(f"[LOGGER] Failed to write event: {e}", file=sys.stderr)
