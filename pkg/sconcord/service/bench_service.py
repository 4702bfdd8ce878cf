from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm.asyncio import tqdm as tqdm_asyncio

from sconcord.config import settings
from sconcord.errors import SconcordError
from sconcord.model.schemas import BenchGrid, BenchResult, RunSpec
from sconcord.problems.registry import check_compatible
from sconcord.service.run_service import RunOutcome, RunService

logger = logging.getLogger(__name__)

BASELINE_COLUMNS = ("iter", "f", "wall_nanos")
AGGREGATE_COLUMNS = ["source", "method", "size", "iter", "median_f", "median_gap", "runs"]


@dataclass(frozen=True)
class BenchJob:
    size: int
    spec: RunSpec


@dataclass
class BenchTables:
    runs: pd.DataFrame
    aggregate: pd.DataFrame
    runs_path: Optional[Path] = None
    aggregate_path: Optional[Path] = None


def read_baseline(path: Path) -> Optional[pd.DataFrame]:
    """
    Loads one externally produced baseline trace (columns iter, f, wall_nanos,
    optionally seed). Returns None, with a warning, when the file is malformed.
    """
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        logger.warning("Skipping baseline %s: unreadable CSV (%s)", path, e)
        return None
    missing = [c for c in BASELINE_COLUMNS if c not in df.columns]
    if missing:
        logger.warning("Skipping baseline %s: missing columns %s", path, missing)
        return None
    try:
        df["iter"] = df["iter"].astype(int)
        df["f"] = df["f"].astype(float)
    except (TypeError, ValueError) as e:
        logger.warning("Skipping baseline %s: non-numeric iter/f (%s)", path, e)
        return None
    if df.empty:
        logger.warning("Skipping baseline %s: no rows", path)
        return None
    return df


def _padded_medians(trajectories: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    # runs that stopped early hold their last value
    length = max(len(t) for t in trajectories)
    padded = np.full((len(trajectories), length), np.nan)
    active = np.zeros(length, dtype=int)
    for row, t in enumerate(trajectories):
        padded[row, : len(t)] = t
        padded[row, len(t) :] = t[-1]
        active[: len(t)] += 1
    return np.median(padded, axis=0), active


class BenchService:
    """Runs a BenchGrid concurrently and writes the per-run and aggregate tables."""

    def __init__(
        self, runs: Optional[RunService] = None, max_concurrency: Optional[int] = None
    ) -> None:
        self.runs = runs or RunService()
        self.max_concurrency = max_concurrency or settings.SCONCORD_THREADS

    @staticmethod
    def jobs(grid: BenchGrid, out_dir: Path) -> List[BenchJob]:
        for method in grid.methods:
            check_compatible(grid.problem, method)
        jobs = []
        for size, generator in enumerate(grid.sizes):
            for method in grid.methods:
                for seed in grid.seeds:
                    run_dir = (
                        out_dir / "runs" / f"size{size}" / f"{grid.problem.value}-"
                        f"{method.value}-seed{seed}"
                    )
                    spec = RunSpec(
                        problem=grid.problem,
                        method=method,
                        seed=seed,
                        solver=dict(grid.solver.get(method.value, {})),
                        generator=dict(generator),
                        output_dir=str(run_dir),
                    )
                    jobs.append(BenchJob(size=size, spec=spec))
        return jobs

    async def _run_single(
        self, job: BenchJob, semaphore: asyncio.Semaphore
    ) -> Optional[Tuple[BenchJob, RunOutcome]]:
        async with semaphore:
            try:
                outcome = await asyncio.to_thread(self.runs.run, job.spec)
                return job, outcome
            except SconcordError as e:
                logger.error(
                    "Bench run %s/%s seed %d failed: %s",
                    job.spec.problem.value,
                    job.spec.method.value,
                    job.spec.seed,
                    e,
                )
                return None
            except Exception as e:
                logger.error(
                    "Unhandled error in bench run %s seed %d: %s",
                    job.spec.method.value,
                    job.spec.seed,
                    e,
                    exc_info=True,
                )
                return None

    async def run_grid(
        self, grid: BenchGrid, out_dir: Path, baselines_dir: Optional[Path] = None
    ) -> BenchTables:
        jobs = self.jobs(grid, out_dir)
        logger.info("Bench %s: %d runs", grid.problem.value, len(jobs))
        semaphore = asyncio.Semaphore(self.max_concurrency)
        tasks = [self._run_single(job, semaphore) for job in jobs]
        results = await tqdm_asyncio.gather(*tasks, desc="bench", total=len(tasks))
        done = [r for r in results if r is not None]
        if len(done) < len(jobs):
            logger.warning("Bench finished %d/%d runs", len(done), len(jobs))

        runs = self.runs_table(done)
        aggregate = self.aggregate(done)
        if baselines_dir is not None:
            aggregate = pd.concat(
                [aggregate, self.external_rows(baselines_dir, done)], ignore_index=True
            )
        return self.write(BenchTables(runs=runs, aggregate=aggregate), out_dir)

    def run(
        self, grid: BenchGrid, out_dir: Path, baselines_dir: Optional[Path] = None
    ) -> BenchTables:
        return asyncio.run(self.run_grid(grid, out_dir, baselines_dir))

    @staticmethod
    def runs_table(done: List[Tuple[BenchJob, RunOutcome]]) -> pd.DataFrame:
        records = []
        for job, outcome in done:
            row = BenchResult(**outcome.report.model_dump(include=set(BenchResult.model_fields)))
            records.append({"size": job.size, **row.model_dump(mode="json")})
        if not records:
            return pd.DataFrame(columns=["size", *BenchResult.model_fields])
        return pd.json_normalize(records, sep="_")

    @staticmethod
    def aggregate(done: List[Tuple[BenchJob, RunOutcome]]) -> pd.DataFrame:
        """Per (method, size): median f and median gap at every iteration."""
        groups: Dict[Tuple[str, int], List[RunOutcome]] = {}
        for job, outcome in done:
            groups.setdefault((job.spec.method.value, job.size), []).append(outcome)
        frames = []
        for (method, size), outcomes in groups.items():
            traces = [o.trace["f"].to_numpy(dtype=float) for o in outcomes if len(o.trace)]
            if not traces:
                continue
            median_f, active = _padded_medians(traces)
            gaps = [
                o.trace["f"].to_numpy(dtype=float) - (o.report.final_f - o.report.optimality_gap)
                for o in outcomes
                if len(o.trace) and o.report.optimality_gap is not None
            ]
            median_gap = _padded_medians(gaps)[0] if len(gaps) == len(traces) else None
            frames.append(
                pd.DataFrame(
                    {
                        "source": "internal",
                        "method": method,
                        "size": size,
                        "iter": np.arange(len(median_f)),
                        "median_f": median_f,
                        "median_gap": median_gap if median_gap is not None else np.nan,
                        "runs": active,
                    }
                )
            )
        if not frames:
            return pd.DataFrame(columns=AGGREGATE_COLUMNS)
        return pd.concat(frames, ignore_index=True)[AGGREGATE_COLUMNS]

    @staticmethod
    def external_rows(
        baselines_dir: Path, done: List[Tuple[BenchJob, RunOutcome]]
    ) -> pd.DataFrame:
        """
        Baseline CSVs are named after the method that produced them. A `seed`
        column lets their gaps use the optimal values of the matching runs.
        """
        f_star: Dict[int, float] = {}
        for job, outcome in done:
            if job.size == 0 and outcome.report.optimality_gap is not None:
                f_star[job.spec.seed] = outcome.report.final_f - outcome.report.optimality_gap

        frames = []
        for path in sorted(Path(baselines_dir).glob("*.csv")):
            df = read_baseline(path)
            if df is None:
                continue
            if "seed" in df.columns and df["seed"].isin(list(f_star)).all():
                df = df.assign(gap=df["f"] - df["seed"].map(f_star))
            else:
                df = df.assign(gap=np.nan)
            grouped = df.groupby("iter").agg(
                median_f=("f", "median"), median_gap=("gap", "median"), runs=("f", "size")
            )
            frames.append(
                grouped.reset_index().assign(source="external", method=path.stem, size=0)
            )
            logger.info("Joined external baseline %s (%d rows)", path.name, len(df))
        if not frames:
            logger.info("No external baselines in %s", baselines_dir)
            return pd.DataFrame(columns=AGGREGATE_COLUMNS)
        return pd.concat(frames, ignore_index=True)[AGGREGATE_COLUMNS]

    @staticmethod
    def write(tables: BenchTables, out_dir: Path) -> BenchTables:
        out_dir.mkdir(parents=True, exist_ok=True)
        tables.runs_path = out_dir / "bench_runs.csv"
        tables.aggregate_path = out_dir / "bench_aggregate.csv"
        tables.runs.to_csv(tables.runs_path, index=False, na_rep="")
        tables.aggregate.to_csv(tables.aggregate_path, index=False, na_rep="")
        logger.info("Wrote %s and %s", tables.runs_path, tables.aggregate_path)
        return tables
