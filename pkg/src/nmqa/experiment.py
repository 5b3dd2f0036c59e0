"""Batched trials with deterministic per-run seeding.

Run ``i`` of any batch uses ``np.random.default_rng(master_seed + i)``, so the
same trial index sees the same stream across strategies, budgets and
(lambda1, lambda2) candidates.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .control import RunRecord, run_naive, run_nmqa
from .filtering import FilterConfig
from .lattice import QubitArray, TrueField
from .metrics import ScoreEntry, ssim


def run_seed(master_seed: int, index: int) -> int:
    return int(master_seed) + int(index)


@dataclass(frozen=True)
class Job:
    strategy: str
    T: int
    seed: int
    config: FilterConfig
    array: QubitArray
    source: object
    scheduler: str = "adaptive"
    fill: float = np.pi / 2
    keep_maps: bool = False


def execute(job: Job) -> RunRecord:
    rng = np.random.default_rng(job.seed)
    if job.strategy == "nmqa":
        return run_nmqa(
            job.config, job.array, job.source, job.T, rng,
            scheduler=job.scheduler, seed=job.seed, keep_maps=job.keep_maps,
        )
    if job.strategy == "naive":
        return run_naive(
            job.array, job.source, job.T, rng, fill=job.fill, seed=job.seed, keep_maps=job.keep_maps
        )
    raise ValueError(f"unknown strategy {job.strategy!r}")


def execute_all(jobs: Sequence[Job], threads: int = 1) -> list[RunRecord]:
    """Run jobs, in parallel worker processes when ``threads > 1``; order is preserved."""
    if threads <= 1 or len(jobs) < 2:
        return [execute(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(execute, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def trial_jobs(
    strategy: str,
    T: int,
    trials: int,
    master_seed: int,
    config: FilterConfig,
    array: QubitArray,
    source,
    **kwargs,
) -> list[Job]:
    return [
        Job(strategy, T, run_seed(master_seed, i), config, array, source, **kwargs)
        for i in range(trials)
    ]


def score_runs(strategy: str, T: int, runs: Sequence[RunRecord], truth: TrueField) -> ScoreEntry:
    """Single-run scores; aborted runs score 1 and are counted as invalid."""
    entry = ScoreEntry(strategy=strategy, T=T)
    for run in runs:
        if run.valid:
            entry.scores.append(ssim(run.final_map, truth.values))
        else:
            entry.scores.append(1.0)
            entry.invalid += 1
    return entry


def evaluate(
    strategy: str,
    T: int,
    trials: int,
    master_seed: int,
    config: FilterConfig,
    array: QubitArray,
    source,
    truth: TrueField,
    threads: int = 1,
    **kwargs,
) -> tuple[ScoreEntry, list[RunRecord]]:
    runs = execute_all(
        trial_jobs(strategy, T, trials, master_seed, config, array, source, **kwargs), threads
    )
    return score_runs(strategy, T, runs, truth), runs


def with_lambdas(config: FilterConfig, lambda1: float, lambda2: float) -> FilterConfig:
    return replace(config, lambda1=float(lambda1), lambda2=float(lambda2))
