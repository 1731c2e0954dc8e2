#!/usr/bin/env python3
"""
Trend Analysis

Checks the emitted CSVs and lookup table against the expected physical trends:
- i_l linear in column depth, monotone in R01, temperature and vdd
- window ratio increasing in vdd, decreasing in temperature
- T_CK decreasing in vdd, log-linear below 0.5 V
- lookup table shape (c_l up with vdd until saturation, c_r non-increasing)

Usage:
    python analyze.py results/            # every artifact found in the folder
    python analyze.py results/ --out results/trend_report.txt
"""
import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.calibration import LookupTable
from src.experiment import CLOCK_FILE, SWEEP_FILE, TABLE_FILE
from src.utils import is_strictly_monotone, log_linear_r2, proportional_residual
from src.variation import SWEEP_AXES

LOG_LINEAR_VDD_LIMIT = 0.5


def _monotone_along(frame: pd.DataFrame, axis: str, column: str, increasing: bool) -> bool:
    """True if ``column`` is strictly monotone along ``axis`` with every other axis held fixed."""
    others = [a for a in SWEEP_AXES if a != axis]
    for _, group in frame.groupby(others):
        if len(group) < 2:
            continue
        values = group.sort_values(axis)[column].tolist()
        if not is_strictly_monotone(values, increasing):
            return False
    return True


def sweep_trends(frame: pd.DataFrame) -> Dict[str, Any]:
    """Trend checks over a sweep CSV (means per grid point)."""
    residuals = []
    for _, group in frame.groupby(["vdd", "temperature", "r01"]):
        if group["depth"].nunique() >= 2 and (group["i_l_mean"] > 0).all():
            residuals.append(proportional_residual(group["depth"], group["i_l_mean"]))
    windows = frame.drop_duplicates(["vdd", "temperature", "depth"])
    return {
        "i_l_depth_residual": max(residuals) if residuals else None,
        "i_l_increasing_in_r01": _monotone_along(frame, "r01", "i_l_mean", True),
        "i_l_increasing_in_temperature": _monotone_along(frame, "temperature", "i_l_mean", True),
        # all-'1' columns leak less as vdd rises (alpha falls faster than i_l0 grows)
        "i_l_increasing_in_vdd": _monotone_along(frame[frame["r01"] > 0], "vdd", "i_l_mean", True),
        "window_increasing_in_vdd": _monotone_along(windows, "vdd", "window_ratio_mean", True),
        "window_decreasing_in_temperature": _monotone_along(windows, "temperature", "window_ratio_mean", False),
    }


def clock_trends(frame: pd.DataFrame) -> Dict[str, Any]:
    """T_CK monotonicity and log-linear fit quality below LOG_LINEAR_VDD_LIMIT."""
    frame = frame.sort_values("vdd")
    low = frame[frame["vdd"] < LOG_LINEAR_VDD_LIMIT]
    return {
        "t_ck_decreasing_in_vdd": is_strictly_monotone(frame["t_ck_mean"].tolist(), increasing=False),
        "t_ck_log_linear_r2": log_linear_r2(low["vdd"], low["t_ck_mean"]) if len(low) >= 3 else None,
        "tracking_ratio_min": float(frame["tracking_ratio"].min()),
        "tracking_ratio_max": float(frame["tracking_ratio"].max()),
    }


def table_trends(table: LookupTable) -> Dict[str, Any]:
    """Lookup table shape: c_l rises with vdd until saturation, c_r never rises."""
    rows = sorted(table.rows, key=lambda r: r.vdd)
    unsaturated = [r.c_l for r in rows if not r.saturated]
    valid_cr = [r.c_r for r in rows if r.valid]
    return {
        "vdd_min": table.vdd_min,
        "c_l_increasing": is_strictly_monotone(unsaturated, True) if len(unsaturated) > 1 else True,
        "c_r_non_increasing": all(a >= b for a, b in zip(valid_cr, valid_cr[1:])),
        "invalid_rows_below_valid": _invalid_first(rows),
        "beta_inside_window": all(r.beta < 1 and (r.window is None or r.beta >= r.window.beta_lower)
                                  for r in rows if r.valid),
    }


def _invalid_first(rows) -> bool:
    seen_valid = False
    for row in rows:
        if row.valid:
            seen_valid = True
        elif seen_valid:
            return False
    return True


def _fmt(value: Any) -> str:
    if value is None:
        return "N/A"
    if isinstance(value, bool):
        return "PASS" if value else "FAIL"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def generate_text_report(sections: Dict[str, Dict[str, Any]], output_path: Optional[str] = None) -> str:
    """Generate a text-based trend report."""
    lines = []
    lines.append("=" * 70)
    lines.append("TREND REPORT")
    lines.append("=" * 70)
    lines.append("")
    for title, checks in sections.items():
        lines.append(f"## {title}")
        lines.append("-" * 70)
        for name, value in checks.items():
            lines.append(f"  {name:<40} {_fmt(value):>20}")
        lines.append("")
    lines.append("=" * 70)

    report = "\n".join(lines)
    if output_path:
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write(report + "\n")
        print(f"Report saved to: {output_path}")
    return report


def analyze_folder(folder: str, output_path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    path = Path(folder)
    sections: Dict[str, Dict[str, Any]] = {}
    found: List[str] = []
    if (path / SWEEP_FILE).exists():
        sections["Sweep"] = sweep_trends(pd.read_csv(path / SWEEP_FILE))
        found.append(SWEEP_FILE)
    if (path / CLOCK_FILE).exists():
        sections["Clock"] = clock_trends(pd.read_csv(path / CLOCK_FILE))
        found.append(CLOCK_FILE)
    if (path / TABLE_FILE).exists():
        sections["Lookup table"] = table_trends(LookupTable.read(path / TABLE_FILE))
        found.append(TABLE_FILE)

    print(f"\nFound {len(found)} artifacts in {path}: {', '.join(found) or 'none'}")
    if sections:
        print(generate_text_report(sections, output_path))
    return sections


def parse_args():
    parser = argparse.ArgumentParser(description="Trend report over simulator artifacts")
    parser.add_argument("folder", nargs="?", default="results", help="Folder holding sweep/clock/table files")
    parser.add_argument("--out", help="Write the report to this file")
    return parser.parse_args()


def main():
    args = parse_args()
    sections = analyze_folder(args.folder, args.out)
    return 0 if sections else 1


if __name__ == "__main__":
    sys.exit(main())
