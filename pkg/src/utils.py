"""
Utility functions for run logging, hashing, statistics and CSV emission.
"""
import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import linregress

from src.config import LOG_DIR, RunConfig, config_items, is_table_key, serialize_config

CSV_FLOAT_FORMAT = "%.9e"


def ensure_dir(path: str) -> Path:
    """Ensure directory exists and return Path object."""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def get_timestamp() -> str:
    """Get current timestamp in ISO format."""
    return datetime.now().strftime("%Y%m%d_%H%M%S")


def config_hash(config: RunConfig, table_only: bool = False) -> str:
    """
    SHA-256 of the canonical config text, as lowercase hex of the digest
    bytes in big-endian (network) order.

    With table_only=True only the keys that shape a lookup table are hashed.
    """
    text = serialize_config(config, is_table_key if table_only else None)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def short_hash(digest: str) -> str:
    return digest[:16]


class ExperimentLogger:
    """
    JSONL logger for simulator runs.
    Each line is a JSON object representing one event.
    """

    def __init__(self, run_id: str, log_dir: str = LOG_DIR):
        self.run_id = run_id
        self.log_dir = ensure_dir(log_dir)
        self.log_file = self.log_dir / f"{run_id}.jsonl"
        self.summary_file = self.log_dir / f"{run_id}_summary.json"

        # Same run id means same config + seed: overwrite
        with open(self.log_file, 'w', encoding='utf-8') as f:
            event = {
                "type": "run_start",
                "run_id": run_id,
                "timestamp": get_timestamp()
            }
            f.write(json.dumps(event, ensure_ascii=False) + '\n')

    def _write_event(self, event: Dict[str, Any]):
        """Write a single event to the log file."""
        with open(self.log_file, 'a', encoding='utf-8') as f:
            f.write(json.dumps(event, ensure_ascii=False) + '\n')

    def log_config(self, config: RunConfig, digest: str):
        """Log every key of the run configuration with its hash and seed."""
        self._write_event({
            "type": "config",
            "timestamp": get_timestamp(),
            "config_hash": digest,
            "seed": config.seed,
            "values": dict(config_items(config)),
        })
        for key_path in config.applied_defaults:
            self._write_event({
                "type": "default_applied",
                "key": key_path,
            })

    def log_row(self, kind: str, row: Dict[str, Any]):
        """Log one result row (sweep point, table row, clock point)."""
        self._write_event({
            "type": "row",
            "kind": kind,
            **row
        })

    def log_warning(self, message: str):
        self._write_event({
            "type": "warning",
            "timestamp": get_timestamp(),
            "message": message
        })

    def log_run_end(self, summary: Dict[str, Any]):
        """Log run completion with summary."""
        self._write_event({
            "type": "run_end",
            "timestamp": get_timestamp(),
            **summary
        })

        # Also write summary to separate JSON file
        with open(self.summary_file, 'w', encoding='utf-8') as f:
            json.dump(summary, f, ensure_ascii=False, indent=2)


def describe(values: Sequence[float]) -> Dict[str, float]:
    """
    mean / std (sample, ddof=1) / min / max of a sample.

    A constant sample reports std = 0 and mean = its value exactly.
    """
    arr = np.asarray(values, dtype=float).ravel()
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        return {"mean": lo, "std": 0.0, "min": lo, "max": hi}
    mean = min(max(float(arr.mean()), lo), hi)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": mean, "std": std, "min": lo, "max": hi}


def is_strictly_monotone(values: Sequence[float], increasing: bool = True) -> bool:
    arr = np.asarray(values, dtype=float)
    steps = np.diff(arr)
    return bool(np.all(steps > 0)) if increasing else bool(np.all(steps < 0))


def log_linear_r2(x: Sequence[float], y: Sequence[float]) -> float:
    """R^2 of a straight-line fit of log(y) against x."""
    fit = linregress(np.asarray(x, dtype=float), np.log(np.asarray(y, dtype=float)))
    return float(fit.rvalue ** 2)


def proportional_residual(x: Sequence[float], y: Sequence[float]) -> float:
    """Largest relative deviation of y from the least-squares line through the origin."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope = float(np.dot(x, y) / np.dot(x, x))
    return float(np.max(np.abs(y - slope * x) / np.abs(y)))


def write_csv(frame: pd.DataFrame, path: Path, float_format: Optional[str] = CSV_FLOAT_FORMAT) -> Path:
    """RFC-4180 style CSV: '.' decimals, LF line endings, scientific floats."""
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return Path(path)
