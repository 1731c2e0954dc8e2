"""
Main Experiment module.
Orchestrates one simulator command (sweep, calibrate, simulate, clock) from a
validated RunConfig to its artifacts and run log.
"""
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from src.bank import BankState
from src.calibration import LookupRow, LookupTable, build_lookup
from src.column import ColumnConfig, DataPattern, t_read0
from src.config import Environment, RunConfig, config_items
from src.errors import CalibrationError
from src.peripherals import ClockTiming, clock_period_samples, clock_timing
from src.read_sim import (
    check_worst_case, default_trace, delay_decomposition, load_trace, prepare_bank, simulate_sequence,
    write_read_log, write_report,
)
from src.utils import ExperimentLogger, config_hash, describe, ensure_dir, short_hash, write_csv
from src.variation import sweep, sweep_frame

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2

SWEEP_FILE = "sweep.csv"
TABLE_FILE = "lookup_table.tsv"
CALIBRATION_SUMMARY_FILE = "calibration_summary.txt"
REPORT_FILE = "read_report.tsv"
READS_FILE = "reads.csv"
CLOCK_FILE = "clock.csv"


class Command(str, Enum):
    SWEEP = "sweep"
    CALIBRATE = "calibrate"
    SIMULATE = "simulate"
    CLOCK = "clock"


@dataclass
class ExperimentConfig:
    """Configuration for a single command run."""
    command: Command
    run_config: RunConfig
    workers: int = 1
    expect_clean: bool = False
    table: Optional[str] = None
    trace: Optional[str] = None
    worst_case: bool = False
    per_read: bool = False
    progress: bool = True


class Experiment:
    """
    Command orchestrator.

    The run id is built from the command, the short config hash and the
    seed, so a rerun with the same inputs overwrites its own log.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.run_config = config.run_config
        self.digest = config_hash(self.run_config)
        self.table_digest = config_hash(self.run_config, table_only=True)
        self.experiment_id = f"{config.command.value}_{short_hash(self.digest)}_S{self.run_config.seed}"
        self.out_dir = Path(self.run_config.output.dir)
        self.template = self.run_config.column_config()
        self.logger: Optional[ExperimentLogger] = None

    def setup(self) -> bool:
        """
        Prepare output folders, open the run log and echo the configuration.

        Returns:
            True if setup successful
        """
        rc = self.run_config
        print(f"\n{'=' * 60}")
        print(f"Run: {self.experiment_id}")
        print(f"{'=' * 60}")

        print("\n[1/3] Validating configuration...")
        print(f"  [OK] corner {rc.device.corner.value}, T = {rc.env.temperature:g} K, "
              f"seed {rc.seed}, trials {rc.variation.trials}")
        print(f"  Config hash: {self.digest}")
        defaults = set(rc.applied_defaults)
        if defaults:
            print(f"  {len(defaults)} keys at their defaults:")
            for key, value in config_items(rc, lambda k: k in defaults):
                print(f"    {key} = {value}")

        print("\n[2/3] Preparing output directories...")
        ensure_dir(str(self.out_dir))
        self.logger = ExperimentLogger(self.experiment_id, rc.output.log_dir)
        print(f"  [OK] artifacts -> {self.out_dir}, log -> {self.logger.log_file}")

        print("\n[3/3] Logging configuration...")
        self.logger.log_config(rc, self.digest)
        print("  [OK] Configuration logged")
        return True

    def run(self) -> Dict[str, Any]:
        """
        Execute the command.

        Returns:
            Summary dict; ``exit_code`` is 0, or 2 for an acceptance failure
        """
        print(f"\n{'=' * 60}")
        print(f"Running {self.config.command.value}...")
        print(f"{'=' * 60}\n")

        handlers = {
            Command.SWEEP: self._run_sweep,
            Command.CALIBRATE: self._run_calibrate,
            Command.SIMULATE: self._run_simulate,
            Command.CLOCK: self._run_clock,
        }
        summary = {
            "run_id": self.experiment_id,
            "command": self.config.command.value,
            "config_hash": self.digest,
            "seed": self.run_config.seed,
            "exit_code": EXIT_OK,
        }
        summary.update(handlers[self.config.command]())
        self.logger.log_run_end(summary)

        print(f"\n{'=' * 60}")
        print("Run Complete!" if summary["exit_code"] == EXIT_OK else "Run Failed!")
        print(f"{'=' * 60}")
        for path in summary.get("artifacts", []):
            print(f"  Wrote {path}")
        print(f"\nLog file: {self.logger.log_file}")
        return summary

    # === sweep ===

    def _run_sweep(self) -> Dict[str, Any]:
        rc = self.run_config
        print(f"Sweeping {rc.grid.size} grid points over {rc.variation.trials} trials...")
        # window ratio column is the variation-free T_leak/T_r0
        results = sweep(rc.grid, rc.variation, self.template, workers=self.config.workers,
                        progress=self.config.progress)
        frame = sweep_frame(results)
        for row in frame.to_dict(orient="records"):
            self.logger.log_row("sweep", row)
        path = write_csv(frame, self.out_dir / SWEEP_FILE)
        print(f"  [OK] {len(frame)} points")
        return {"points": len(frame), "artifacts": [str(path)]}

    # === clock ===

    def _run_clock(self) -> Dict[str, Any]:
        rc = self.run_config
        rows = []
        for vdd in rc.clock.vdd_grid:
            env = Environment(vdd=vdd, temperature=rc.env.temperature)
            samples = clock_period_samples(rc.replica, rc.device, env, rc.variation, rc.column.c_rbl,
                                           self.config.workers)
            stats = describe(samples)
            cfg = self.template.scaled_to(vdd)
            t_r0_nominal = t_read0(cfg, DataPattern.worst_read0(cfg.depth))
            row = {
                "vdd": vdd,
                "t_ck_mean": stats["mean"],
                "t_ck_std": stats["std"],
                "t_r0_nominal": t_r0_nominal,
                "tracking_ratio": stats["mean"] / t_r0_nominal,
                "trials": len(samples),
            }
            self.logger.log_row("clock", row)
            rows.append(row)
            print(f"  vdd = {vdd:.2f} V: T_CK = {stats['mean']:.3e} s (std {stats['std']:.2e})")
        frame = pd.DataFrame(rows, columns=["vdd", "t_ck_mean", "t_ck_std", "t_r0_nominal", "tracking_ratio",
                                            "trials"])
        path = write_csv(frame, self.out_dir / CLOCK_FILE)
        return {"points": len(frame), "artifacts": [str(path)]}

    # === calibrate ===

    def _timing(self, vdd: float) -> ClockTiming:
        rc = self.run_config
        return clock_timing(vdd, rc.replica, rc.sosa, rc.device, rc.env.temperature, rc.variation,
                            rc.column.c_rbl, rc.read.rwl_ratio, self.config.workers)

    def _log_table_row(self, row: LookupRow):
        self.logger.log_row("lookup", {
            "vdd": row.vdd, "c_l": row.c_l, "c_r": row.c_r, "beta": row.beta,
            "beta_counts": row.beta_counts, "saturated": row.saturated,
            "t_ck": row.t_ck, "t_sa": row.t_sa, "t_test": row.t_test,
        })
        state = f"c_r = {row.c_r}" if row.valid else "invalid"
        print(f"  vdd = {row.vdd:.2f} V: c_l = {row.c_l}{' (saturated)' if row.saturated else ''}, {state}")

    def _run_calibrate(self) -> Dict[str, Any]:
        rc = self.run_config
        print(f"Calibrating {len(rc.calibration.vdd_grid)} supplies over {rc.variation.trials} chips...")
        table = build_lookup(rc.calibration.vdd_grid, self.template, rc.variation, self._timing, rc.calibration,
                             workers=self.config.workers, progress=self.config.progress,
                             on_row=self._log_table_row)
        table.config_hash = self.table_digest
        table_path = table.write(self.out_dir / TABLE_FILE)
        summary_path = self._write_calibration_summary(table, self.out_dir / CALIBRATION_SUMMARY_FILE)
        if table.vdd_min is None:
            self.logger.log_warning("no supply in the grid has a valid sensing window")
            print("  [WARNING] no valid row: V_DDMIN not found in the grid")
        else:
            print(f"  [OK] V_DDMIN = {table.vdd_min:.2f} V")
        return {
            "vdd_min": table.vdd_min,
            "valid_rows": len(table.valid_rows()),
            "artifacts": [str(table_path), str(summary_path)],
        }

    def _write_calibration_summary(self, table: LookupTable, path: Path) -> Path:
        rc = self.run_config
        lines = [
            "Calibration summary",
            "=" * 70,
            f"config hash:  {table.config_hash}",
            f"seed:         {table.seed}",
            f"corner:       {rc.device.corner.value}",
            f"temperature:  {rc.env.temperature:g} K",
            f"chips:        {rc.variation.trials}",
            f"dvth:         {rc.dvth * 1e3:.1f} mV",
            f"V_DDMIN:      {'none in grid' if table.vdd_min is None else f'{table.vdd_min:.3f} V'}",
            "",
            f"{'vdd (V)':>8} {'c_l':>5} {'c_r':>5} {'beta':>10} {'c_r/c_l':>10} {'t_sa (s)':>12} {'t_test (s)':>12}",
            "-" * 70,
        ]
        for row in table.rows:
            c_l = f"{row.c_l}{'*' if row.saturated else ''}"
            c_r = "-" if row.c_r is None else str(row.c_r)
            counts = "-" if row.beta_counts is None else f"{row.beta_counts:.4f}"
            lines.append(f"{row.vdd:>8.3f} {c_l:>5} {c_r:>5} {row.beta:>10.4f} {counts:>10} "
                         f"{row.t_sa:>12.4e} {row.t_test:>12.4e}")
        lines.append("")
        lines.append("* counter saturated")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    # === simulate ===

    def _load_table(self) -> LookupTable:
        path = Path(self.config.table) if self.config.table else self.out_dir / TABLE_FILE
        if not path.exists():
            raise CalibrationError(f"lookup table {path} not found (run calibrate first)")
        table = LookupTable.read(path)
        if table.config_hash != self.table_digest:
            raise CalibrationError(f"lookup table {path} was calibrated for another configuration "
                                   f"({short_hash(table.config_hash)} != {short_hash(self.table_digest)})")
        return table

    def _run_simulate(self) -> Dict[str, Any]:
        rc = self.run_config
        row = self._load_table().row_for(rc.env.vdd)
        cfg: ColumnConfig = self.template.scaled_to(row.vdd)

        bank = BankState.filled(rc.read.fill, cfg.depth, rc.read.fill_r01, rc.seed)
        if self.config.trace:
            trace = load_trace(self.config.trace)
            prepare_bank(bank, trace)
        else:
            trace = default_trace(bank)
        print(f"Replaying {len(trace)} reads on {rc.read.chips} chips at vdd = {row.vdd:.2f} V "
              f"(c_r = {row.c_r}, T_SA = {row.t_sa:.3e} s)...")
        report = simulate_sequence(bank, trace, row, cfg, rc.variation, rc.read.rwl_ratio, rc.read.chips,
                                   self.config.workers, self.config.progress)

        preamble = {
            "config_hash": self.table_digest,
            "seed": str(rc.seed),
            "corner": rc.device.corner.value,
            "vdd_mV": str(row.vdd_mv),
            "c_r": str(row.c_r),
            "chips": str(rc.read.chips),
        }
        bit_errors = report.bit_errors
        summary: Dict[str, Any] = {"reads": report.reads, "bit_errors": report.bit_errors}
        if report.results:
            summary["delay_shares"] = delay_decomposition(report.results)
            summary["max_delay"] = report.max_delay
        if self.config.worst_case:
            worst = check_worst_case(cfg, row, rc.variation, workers=self.config.workers)
            preamble.update({
                "worst_case_reads": str(worst.reads),
                "worst_case_read1_errors": str(worst.read1_errors),
                "worst_case_read0_errors": str(worst.read0_errors),
            })
            summary["worst_case"] = {"reads": worst.reads, "read1_errors": worst.read1_errors,
                                     "read0_errors": worst.read0_errors}
            bit_errors += worst.bit_errors
            print(f"  Worst-case patterns: {worst.read1_errors} '1' errors, {worst.read0_errors} '0' errors "
                  f"over {worst.reads} reads each")

        artifacts: List[str] = [str(write_report(report, self.out_dir / REPORT_FILE, preamble))]
        if self.config.per_read:
            artifacts.append(str(write_read_log(report, self.out_dir / READS_FILE)))
        summary["artifacts"] = artifacts

        print(f"  Reads: {report.reads}, bit errors: {report.bit_errors}")
        if report.results:
            print(f"  Read delay: {report.max_delay:.3e} s")
        if bit_errors and self.config.expect_clean:
            self.logger.log_warning(f"{bit_errors} bit errors with --expect-clean")
            print(f"  [ERROR] {bit_errors} bit errors, expected none")
            summary["exit_code"] = EXIT_FAILED
        return summary
