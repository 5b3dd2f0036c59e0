"""Structural-similarity scoring, trial averages and measurement-ratio curves."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

C1 = 0.01
C2 = 0.01


class OutOfRangeError(ValueError):
    """Target score is not attained on a curve's monotone segment."""


def similarity(x, y) -> float:
    """Global structural similarity index of two vectorised maps (1 is identical).

    Moments use the biased 1/n normalisation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"maps must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("maps need at least two sites")
    mx, my = x.mean(), y.mean()
    vx = np.mean((x - mx) ** 2)
    vy = np.mean((y - my) ** 2)
    cxy = np.mean((x - mx) * (y - my))
    return float(
        (2 * mx * my + C1) * (2 * cxy + C2) / ((mx**2 + my**2 + C1) * (vx + vy + C2))
    )


def ssim(x, y) -> float:
    """Deviation ``|1 - s(x, y)|`` of the similarity index from its ideal value; 0 is perfect."""
    s = similarity(x, y)
    if s < 0:
        warnings.warn(f"negative similarity index {s:.4f}; score exceeds 1", RuntimeWarning)
    return abs(1.0 - s)


@dataclass
class ScoreEntry:
    strategy: str
    T: int
    scores: list[float] = field(default_factory=list)
    invalid: int = 0

    @property
    def trials(self) -> int:
        return len(self.scores)

    @property
    def avg_ssim(self) -> float:
        return float(np.mean(self.scores))

    @property
    def std(self) -> float:
        if len(self.scores) < 2:
            return 0.0
        return float(np.std(self.scores, ddof=1))

    @property
    def sem(self) -> float:
        return self.std / math.sqrt(self.trials) if self.trials else float("nan")


def avg_ssim(runs, truth, strategy: str | None = None) -> ScoreEntry:
    """Trial average of single-run scores; ``runs`` are RunRecords against one truth map."""
    runs = list(runs)
    if not runs:
        raise ValueError("need at least one run")
    truth = np.asarray(getattr(truth, "values", truth), dtype=float)
    entry = ScoreEntry(strategy=strategy or runs[0].strategy, T=runs[0].T)
    for run in runs:
        entry.scores.append(ssim(run.final_map, truth))
        entry.invalid += int(not run.valid)
    return entry


def pooled_se(a: ScoreEntry, b: ScoreEntry) -> float:
    """Standard error of the difference of two trial means."""
    return math.sqrt(a.sem**2 + b.sem**2)


class Scoreboard:
    """Score entries keyed by (strategy, T)."""

    COLUMNS = ("strategy", "T", "avg_ssim", "std", "trials")

    def __init__(self, entries: Iterable[ScoreEntry] = ()) -> None:
        self._entries: dict[tuple[str, int], ScoreEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: ScoreEntry) -> None:
        self._entries[(entry.strategy, entry.T)] = entry

    def __getitem__(self, key: tuple[str, int]) -> ScoreEntry:
        return self._entries[key]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(sorted(self._entries.values(), key=lambda e: (e.strategy, e.T)))

    def strategies(self) -> list[str]:
        return sorted({s for s, _ in self._entries})

    def curve(self, strategy: str) -> list[tuple[int, float]]:
        return sorted((T, e.avg_ssim) for (s, T), e in self._entries.items() if s == strategy)

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for e in self:
            w.writerow([e.strategy, e.T, f"{e.avg_ssim:.10g}", f"{e.std:.10g}", e.trials])
        return buf.getvalue()


def monotone_segment(curve: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Longest tail of a (T, score) curve, walking down from the largest T, on which
    score is nonincreasing in T."""
    pts = sorted(curve)
    if len(pts) < 2:
        raise ValueError("curve needs at least two points")
    seg = [pts[-1]]
    for T, s in reversed(pts[:-1]):
        if s >= seg[-1][1]:
            seg.append((T, s))
        else:
            break
    return list(reversed(seg))


def invert_curve(curve: Sequence[tuple[float, float]], target: float) -> float:
    """Budget T at which a score curve reaches ``target``, by linear interpolation."""
    seg = monotone_segment(curve)
    lo = seg[-1][1]
    hi = seg[0][1]
    if not lo <= target <= hi:
        raise OutOfRangeError(f"target {target} outside attained range [{lo}, {hi}]")
    for (T0, s0), (T1, s1) in zip(seg, seg[1:]):
        if s0 >= target >= s1:
            if s0 == s1:
                return float(T0)
            return float(T0 + (s0 - target) * (T1 - T0) / (s0 - s1))
    return float(seg[-1][0])


def measurement_ratio(naive_curve, nmqa_curve, target: float) -> float:
    """Ratio of budgets the naive and NMQA strategies need to reach ``target``."""
    return invert_curve(naive_curve, target) / invert_curve(nmqa_curve, target)


def ratio_curve(naive_curve, nmqa_curve, targets) -> list[tuple[float, float]]:
    """(target, ratio) pairs; targets outside either curve's range are skipped."""
    out = []
    for target in targets:
        try:
            out.append((float(target), measurement_ratio(naive_curve, nmqa_curve, target)))
        except OutOfRangeError:
            continue
    return out


def ratio_targets(naive_curve, nmqa_curve, n: int = 41) -> np.ndarray:
    """Evenly spaced targets over the overlap of both curves' monotone ranges."""
    a = [s for _, s in monotone_segment(naive_curve)]
    b = [s for _, s in monotone_segment(nmqa_curve)]
    lo, hi = max(min(a), min(b)), min(max(a), max(b))
    if lo > hi:
        return np.array([])
    return np.linspace(lo, hi, n)


def ratio_csv(pairs, header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write("target_avg_ssim,ratio\n")
    for target, ratio in pairs:
        buf.write(f"{target:.10g},{ratio:.10g}\n")
    return buf.getvalue()
