"""
Monte Carlo process variation.

Every random draw comes from a counter-based Philox stream keyed by
(seed, trial, stream). A trial is one chip realization; within a stream the
draws are indexed by a fixed cell order, so results never depend on the
order (or the thread) in which trials are evaluated.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.column import (
    INFINITE_TIME, ColumnConfig, DataPattern, column_leakage, t_read0, window_ratio,
)
from src.config import (
    ARRAY_COLUMNS, BANK_ARRAYS, DEFAULT_VTH0, Environment, GridSpec, VariationModel,
)
from src.device import alpha_ratio, leak_zero_cell, read_current
from src.errors import UsageError
from src.utils import describe

T = TypeVar("T")

# Stream ids
CELL_STREAM = 0       # bank cells, index (array*rows + row)*columns + column
OFFSET_STREAM = 1     # SOSA offsets, index array*columns + column
REPLICA_STREAM = 2    # replica columns, index column*depth + row
COLUMN_STREAM = 3     # stand-alone column for current statistics and sweeps

CELL_BLOCK = 4096     # cell-stream draws per keyed block

MIN_STAT_TRIALS = 100


def trial_generator(seed: int, trial: int, stream: int, *block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, stream, *block])))


def standard_normals(seed: int, trial: int, stream: int, count: int) -> np.ndarray:
    """First ``count`` N(0, 1) draws of a keyed stream (prefix-consistent in count)."""
    return trial_generator(seed, trial, stream).standard_normal(count)


def cell_normals(seed: int, trial: int, start: int, count: int) -> np.ndarray:
    """
    N(0, 1) draws of the cell stream for flat cell indices start..start+count-1.

    The stream is cut into CELL_BLOCK-sized blocks, each keyed by its block
    number, so one cell costs one block regardless of its index.
    """
    if start < 0 or count < 0:
        raise UsageError(f"cell range must be non-negative, got start={start}, count={count}")
    if count == 0:
        return np.empty(0)
    first = start // CELL_BLOCK
    last = (start + count - 1) // CELL_BLOCK
    draws = np.concatenate([
        trial_generator(seed, trial, CELL_STREAM, block).standard_normal(CELL_BLOCK)
        for block in range(first, last + 1)
    ])
    offset = start - first * CELL_BLOCK
    return draws[offset:offset + count]


def sample_vth(model: VariationModel, cell_index: int, trial_index: int, vth0: float = DEFAULT_VTH0) -> float:
    """vth0 + N(0, sigma_vth) for one bank cell; same inputs give the same value."""
    if model.sigma_vth == 0:
        return vth0
    return vth0 + model.sigma_vth * float(cell_normals(model.seed, trial_index, cell_index, 1)[0])


def chip_vth(model: VariationModel, trial: int, vth0: float, rows: int,
             arrays: int = BANK_ARRAYS, columns: int = ARRAY_COLUMNS) -> np.ndarray:
    """Thresholds of every bank cell of one chip, shaped (arrays, rows, columns)."""
    shape = (arrays, rows, columns)
    if model.sigma_vth == 0:
        return np.full(shape, vth0)
    draws = cell_normals(model.seed, trial, 0, arrays * rows * columns)
    return vth0 + model.sigma_vth * draws.reshape(shape)


def sa_offsets(model: VariationModel, trial: int, arrays: int = BANK_ARRAYS,
               columns: int = ARRAY_COLUMNS) -> np.ndarray:
    """One offset per SOSA instance, shaped (arrays, columns)."""
    if model.sigma_os == 0:
        return np.zeros((arrays, columns))
    draws = standard_normals(model.seed, trial, OFFSET_STREAM, arrays * columns)
    return model.sigma_os * draws.reshape(arrays, columns)


def replica_vth(model: VariationModel, trial: int, vth0: float, depth: int, columns: int = 2) -> np.ndarray:
    if model.sigma_vth == 0:
        return np.full((columns, depth), vth0)
    draws = standard_normals(model.seed, trial, REPLICA_STREAM, columns * depth)
    return vth0 + model.sigma_vth * draws.reshape(columns, depth)


def column_vth(model: VariationModel, trial: int, vth0: float, depth: int) -> np.ndarray:
    if model.sigma_vth == 0:
        return np.full(depth, vth0)
    return vth0 + model.sigma_vth * standard_normals(model.seed, trial, COLUMN_STREAM, depth)


def map_trials(func: Callable[[int], T], trials: Sequence[int], workers: int = 1,
               desc: Optional[str] = None) -> List[T]:
    """Evaluate ``func`` per trial, results in trial order whatever the worker count."""
    trials = list(trials)
    progress = tqdm(total=len(trials), desc=desc, leave=False, disable=desc is None)
    try:
        if workers <= 1:
            results = []
            for trial in trials:
                results.append(func(trial))
                progress.update(1)
            return results
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = []
            for result in pool.map(func, trials):
                results.append(result)
                progress.update(1)
            return results
    finally:
        progress.close()


@dataclass
class SweepResult:
    """Per-point mean/std/min/max of one metric over MC trials."""
    metric: str
    axes: Tuple[str, ...]
    trials: int
    points: List[Tuple[float, ...]] = field(default_factory=list)
    mean: List[float] = field(default_factory=list)
    std: List[float] = field(default_factory=list)
    minimum: List[float] = field(default_factory=list)
    maximum: List[float] = field(default_factory=list)

    def add(self, point: Tuple[float, ...], values: np.ndarray):
        stats = describe(values)
        self.points.append(tuple(point))
        self.mean.append(stats["mean"])
        self.std.append(stats["std"])
        self.minimum.append(stats["min"])
        self.maximum.append(stats["max"])

    def cv(self) -> np.ndarray:
        """Coefficient of variation per point."""
        return np.asarray(self.std) / np.asarray(self.mean)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.points, columns=list(self.axes))
        frame[f"{self.metric}_mean"] = self.mean
        frame[f"{self.metric}_std"] = self.std
        frame[f"{self.metric}_min"] = self.minimum
        frame[f"{self.metric}_max"] = self.maximum
        return frame


def mc_current_stats(cfg: ColumnConfig, pattern: DataPattern, model: VariationModel,
                     workers: int = 1) -> Dict[str, SweepResult]:
    """
    Monte Carlo statistics of i_r0 and i_l at cfg's operating point.

    Each trial draws a fresh column: i_r0 uses the accessed cell's sample,
    i_l sums the idle cells with their own samples.
    """
    if model.trials < MIN_STAT_TRIALS:
        raise UsageError(f"mc_current_stats needs >= {MIN_STAT_TRIALS} trials, got {model.trials}")
    if pattern.accessed_row is None:
        raise UsageError("mc_current_stats needs a pattern with an accessed cell")

    def one_trial(trial: int) -> Tuple[float, float]:
        vth = column_vth(model, trial, cfg.params.vth_nominal, cfg.depth)
        i_r0 = float(read_current(cfg.params, cfg.env, cfg.v_eval, vth[pattern.accessed_row]))
        return i_r0, column_leakage(cfg, pattern, vth_map=vth)

    samples = np.array(map_trials(one_trial, range(model.trials), workers))
    axes = ("vdd", "temperature", "depth")
    point = (cfg.vdd, cfg.temperature, cfg.depth)
    results = {}
    for index, metric in enumerate(("i_r0", "i_l")):
        result = SweepResult(metric, axes, model.trials)
        result.add(point, samples[:, index])
        results[metric] = result
    return results


SWEEP_AXES = ("vdd", "temperature", "depth", "r01")
SWEEP_METRICS = ("i_l", "i_r0", "t_leak", "t_read0", "window_ratio")


def _column_at(template: ColumnConfig, vdd: float, temperature: float, depth: int) -> ColumnConfig:
    ratio = template.v_ref / template.vdd
    return ColumnConfig(depth=depth, c_rbl=template.c_rbl, v_ref=ratio * vdd,
                        env=Environment(vdd=vdd, temperature=temperature), params=template.params)


def sweep(grid: GridSpec, model: VariationModel, template: ColumnConfig, dvth: float = 0.0,
          workers: int = 1, progress: bool = False) -> Dict[str, SweepResult]:
    """
    Evaluate leakage, delays and window ratio over the cartesian grid.

    Leakage and t_leak use the test-mode column with round(r01*N) idle '0'
    cells; i_r0 and t_read0 use an accessed '0' at row 0 with
    round(r01*(N-1)) idle '0' cells. With sigma_vth > 0 every point is
    evaluated over the same ``model.trials`` sampled columns per depth.

    Returns:
        {metric: SweepResult} over axes (vdd, temperature, depth, r01)
    """
    if grid.size == 0:
        raise UsageError("sweep grid is empty")
    varied = model.sigma_vth > 0
    trials = model.trials if varied else 1
    vth0 = template.params.vth_nominal

    samples: Dict[int, np.ndarray] = {}
    for depth in sorted(set(grid.depth)):
        rows = map_trials(lambda trial: column_vth(model, trial, vth0, depth), range(trials), workers)
        samples[depth] = np.vstack(rows)

    results = {metric: SweepResult(metric, SWEEP_AXES, trials) for metric in SWEEP_METRICS}
    points = list(itertools.product(grid.vdd, grid.temperature, grid.depth, grid.r01))
    for vdd, temperature, depth, r01 in tqdm(points, desc="Sweep", leave=False, disable=not progress):
        cfg = _column_at(template, vdd, temperature, depth)
        vth = samples[depth]
        v = cfg.v_eval
        leak_pattern = DataPattern.test_mode(depth, r01)
        read_pattern = DataPattern.from_ratio(depth, r01, accessed_row=0, accessed_value=False)

        alpha = alpha_ratio(cfg.params, cfg.env, v)
        leak_ones = np.asarray(leak_pattern.bits)
        cell_leak = leak_zero_cell(cfg.params, cfg.env, v, vth)
        cell_leak = np.where(leak_ones[None, :], alpha * cell_leak, cell_leak)
        i_l = cell_leak.sum(axis=1)

        read_bits = np.asarray(read_pattern.bits)
        idle = read_pattern.idle_mask()
        read_leak = leak_zero_cell(cfg.params, cfg.env, v, vth)
        read_leak = np.where(read_bits[None, :], alpha * read_leak, read_leak)
        i_idle = np.where(idle[None, :], read_leak, 0.0).sum(axis=1)
        i_r0 = read_current(cfg.params, cfg.env, v, vth[:, 0])

        with np.errstate(divide="ignore"):
            t_leak_values = np.where(i_l > 0, cfg.c_rbl * cfg.swing / i_l, INFINITE_TIME)
        t_read0_values = cfg.c_rbl * cfg.swing / (i_idle + i_r0)
        if not varied:
            # closed forms keep the analytic path exact (K + alpha*M)*i_l0
            i_l = np.array([column_leakage(cfg, leak_pattern)])
            t_read0_values = np.array([t_read0(cfg, read_pattern)])
            with np.errstate(divide="ignore"):
                t_leak_values = np.where(i_l > 0, cfg.c_rbl * cfg.swing / i_l, INFINITE_TIME)

        point = (vdd, temperature, depth, r01)
        results["i_l"].add(point, i_l)
        results["i_r0"].add(point, np.atleast_1d(i_r0))
        results["t_leak"].add(point, t_leak_values)
        results["t_read0"].add(point, t_read0_values)
        results["window_ratio"].add(point, np.array([window_ratio(cfg, dvth)]))
    return results


def sweep_frame(results: Dict[str, SweepResult]) -> pd.DataFrame:
    """Join per-metric results into one table: axes, then mean/std/min/max per metric."""
    frames = [result.to_frame() for result in results.values()]
    axes = list(frames[0].columns[:len(next(iter(results.values())).axes)])
    table = frames[0]
    for frame in frames[1:]:
        table = pd.concat([table, frame.drop(columns=axes)], axis=1)
    table["trials"] = next(iter(results.values())).trials
    return table
