"""Random search over (lambda1, lambda2) scored by trial-averaged SSIM."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .experiment import execute_all, score_runs, trial_jobs, with_lambdas
from .filtering import FilterConfig
from .lattice import QubitArray, TrueField

IMPROVEMENT_MARGIN = 0.025


@dataclass(frozen=True)
class Candidate:
    lambda1: float
    lambda2: float
    avg_ssim: float
    invalid: int = 0


@dataclass
class TuningResult:
    candidates: list[Candidate]
    baseline: Candidate
    T: int
    trials: int
    margin: float = IMPROVEMENT_MARGIN
    best: Candidate = field(init=False)

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("no candidates evaluated")
        self.best = min(self.candidates, key=lambda c: c.avg_ssim)

    @property
    def improved(self) -> list[Candidate]:
        return [c for c in self.candidates if self.baseline.avg_ssim - c.avg_ssim >= self.margin]

    def is_improved(self, c: Candidate) -> bool:
        return self.baseline.avg_ssim - c.avg_ssim >= self.margin

    def candidates_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write("lambda1,lambda2,avg_ssim,improved_flag\n")
        for c in self.candidates:
            buf.write(f"{c.lambda1:.6f},{c.lambda2:.6f},{c.avg_ssim:.10g},{int(self.is_improved(c))}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "T": self.T,
            "trials": self.trials,
            "margin": self.margin,
            "n_candidates": len(self.candidates),
            "best": vars(self.best),
            "baseline": vars(self.baseline),
            "n_improved": len(self.improved),
        }

    def summary_json(self, extra: dict | None = None) -> str:
        return json.dumps({**self.summary(), **(extra or {})}, indent=2)


def sample_pairs(n: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    """``n`` i.i.d. points uniform on the unit square."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [(float(a), float(b)) for a, b in rng.uniform(0.0, 1.0, size=(n, 2))]


def evaluate_pair(
    config: FilterConfig,
    lambda1: float,
    lambda2: float,
    array: QubitArray,
    source,
    truth: TrueField,
    T: int,
    trials: int,
    master_seed: int,
    threads: int = 1,
) -> Candidate:
    cfg = with_lambdas(config, lambda1, lambda2)
    runs = execute_all(trial_jobs("nmqa", T, trials, master_seed, cfg, array, source), threads)
    entry = score_runs("nmqa", T, runs, truth)
    return Candidate(float(lambda1), float(lambda2), entry.avg_ssim, entry.invalid)


def tune(
    config: FilterConfig,
    array: QubitArray,
    source,
    truth: TrueField,
    T: int,
    trials: int,
    pairs,
    master_seed: int = 0,
    threads: int = 1,
) -> TuningResult:
    """Score every candidate pair and the (0, 0) baseline on common trial seeds."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kw = dict(array=array, source=source, truth=truth, T=T, trials=trials,
              master_seed=master_seed, threads=threads)
    baseline = evaluate_pair(config, 0.0, 0.0, **kw)
    candidates = [evaluate_pair(config, l1, l2, **kw) for l1, l2 in pairs]
    return TuningResult(candidates=candidates, baseline=baseline, T=T, trials=trials)


def fixed_choice_transfer(
    config: FilterConfig,
    pair: tuple[float, float],
    array: QubitArray,
    source,
    truth: TrueField,
    T_values,
    trials: int,
    master_seed: int = 0,
    threads: int = 1,
) -> list[tuple[int, float]]:
    """Avg SSIM of one tuned pair applied unchanged at every budget in ``T_values``."""
    out = []
    for T in T_values:
        c = evaluate_pair(config, pair[0], pair[1], array, source, truth, T, trials,
                          master_seed, threads)
        out.append((int(T), c.avg_ssim))
    return out
