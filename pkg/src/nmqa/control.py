"""Measurement scheduling and end-to-end mapping runs.

Two strategies share one record format:

* ``nmqa`` runs the two-layer filter and measures wherever the posterior map
  variance is largest, sharing information with neighbours via messages.
* ``naive`` sweeps the array (or samples sites uniformly when the budget is
  not a multiple of the array size) and estimates each site from its own bits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Protocol

import numpy as np

from .filtering import (
    DegenerateWeightsError,
    FilterConfig,
    SharedStateTally,
    init_ensemble,
    phase_from_probability,
    posterior_summary,
    step,
)
from .lattice import QubitArray
from .measurement import PHYSICAL, MeasurementOutcome
from .sharing import MessageBatch, generate_messages, generate_particle_messages

log = logging.getLogger(__name__)

SCHEDULERS = ("adaptive", "naive", "random")


class Source(Protocol):
    """Anything that hands out one physical bit per requested site."""

    d: int

    def measure(self, site: int, rng: np.random.Generator) -> int: ...


@dataclass
class RunRecord:
    strategy: str
    trajectory: list[int]
    outcomes: list[int]
    final_map: list[float]
    seed: int | None = None
    message_counts: list[float] = field(default_factory=list)
    per_iteration_maps: list[list[float]] | None = None
    final_lengthscales: list[float] | None = None
    valid: bool = True
    error: str | None = None
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.trajectory)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready dict; site labels are rendered 1-based."""
        out = asdict(self)
        out["trajectory"] = [s + 1 for s in self.trajectory]
        out["site_labels"] = "1-based"
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        data = dict(data)
        data.pop("site_labels", None)
        data["trajectory"] = [s - 1 for s in data["trajectory"]]
        return cls(**data)

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def trajectory_csv(self) -> str:
        lines = ["t,site,bit"]
        lines += [f"{t},{s + 1},{b}" for t, (s, b) in enumerate(zip(self.trajectory, self.outcomes), 1)]
        return "\n".join(lines) + "\n"


def choose_next_adaptive(variance, rng: np.random.Generator, rtol: float = 1e-9) -> int:
    """Site of largest posterior variance; near-ties broken uniformly at random."""
    variance = np.asarray(variance, dtype=float)
    top = variance.max()
    tied = np.flatnonzero(np.isclose(variance, top, rtol=rtol, atol=1e-15))
    if tied.size == 1:
        return int(tied[0])
    return int(tied[rng.integers(tied.size)])


def choose_next_naive(t: int, T: int, d: int, rng: np.random.Generator) -> int:
    """Round-robin sweep when ``T`` is a multiple of ``d``, else a uniform random site."""
    if not 1 <= t <= T:
        raise ValueError(f"iteration {t} outside [1, {T}]")
    if T % d == 0:
        return (t - 1) % d
    return int(rng.integers(d))


def run_nmqa(
    config: FilterConfig,
    array: QubitArray,
    source: Source,
    T: int,
    rng: np.random.Generator,
    *,
    scheduler: str = "adaptive",
    seed: int | None = None,
    keep_maps: bool = False,
) -> RunRecord:
    """One NMQA mapping run of ``T`` physical measurements.

    The controller only ever sees posterior summaries; ``source`` is the sole
    route to physical data.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if scheduler not in SCHEDULERS:
        raise ValueError(f"unknown scheduler {scheduler!r}")
    d = array.d
    ensemble = init_ensemble(config, array, rng)
    per_particle = config.message_scope == "particle"
    tally = SharedStateTally.zeros(d, config.n_alpha if per_particle else None)
    summary = posterior_summary(ensemble)
    pending: list[MeasurementOutcome] | MessageBatch = []
    record = RunRecord(strategy="nmqa", trajectory=[], outcomes=[], final_map=[], seed=seed)
    if keep_maps:
        record.per_iteration_maps = []

    for t in range(1, T + 1):
        if scheduler == "naive":
            site = choose_next_naive(t, T, d, rng)
        elif scheduler == "random" or t == 1:
            site = int(rng.integers(d))
        else:
            site = choose_next_adaptive(summary.f_var, rng)
        bit = source.measure(site, rng)
        record.trajectory.append(site)
        record.outcomes.append(bit)
        record.message_counts.append(
            pending.mean_count() if isinstance(pending, MessageBatch) else float(len(pending))
        )
        try:
            ensemble, tally = step(
                ensemble, tally, MeasurementOutcome(site, bit, PHYSICAL), pending, config, array, rng
            )
        except DegenerateWeightsError as exc:
            log.warning("nmqa run aborted at t=%d: %s", t, exc)
            record.valid = False
            record.error = f"t={t}: {exc}"
            break
        summary = posterior_summary(ensemble)
        if keep_maps:
            record.per_iteration_maps.append(summary.f_mean.tolist())
        if per_particle:
            pending = generate_particle_messages(
                ensemble.f, ensemble.r, site, array, tally.tau, config.lambda2, config.k0, rng
            )
        else:
            pending = generate_messages(
                summary.f_mean, summary.r_mean, site, array, tally, config.lambda2, config.k0, rng
            )

    record.final_map = np.clip(summary.f_mean, 0.0, np.pi).tolist()
    record.final_lengthscales = summary.r_mean.tolist()
    return record


def naive_estimate(tau, kappa, fill: float = np.pi / 2) -> np.ndarray:
    """Per-site phase from a site's own bits; unmeasured sites take ``fill``."""
    tau = np.asarray(tau)
    est = phase_from_probability(np.asarray(kappa, dtype=float))
    return np.where(tau > 0, est, fill)


def run_naive(
    array: QubitArray,
    source: Source,
    T: int,
    rng: np.random.Generator,
    *,
    fill: float = np.pi / 2,
    seed: int | None = None,
    keep_maps: bool = False,
) -> RunRecord:
    if T < 1:
        raise ValueError("T must be >= 1")
    d = array.d
    tau = np.zeros(d, dtype=np.int64)
    ones = np.zeros(d, dtype=np.int64)
    record = RunRecord(strategy="naive", trajectory=[], outcomes=[], final_map=[], seed=seed)
    if keep_maps:
        record.per_iteration_maps = []
    for t in range(1, T + 1):
        site = choose_next_naive(t, T, d, rng)
        bit = source.measure(site, rng)
        record.trajectory.append(site)
        record.outcomes.append(bit)
        tau[site] += 1
        ones[site] += bit
        if keep_maps:
            record.per_iteration_maps.append(_naive_map(tau, ones, fill).tolist())
    record.final_map = _naive_map(tau, ones, fill).tolist()
    return record


def _naive_map(tau, ones, fill):
    kappa = np.divide(ones, tau, out=np.zeros(len(tau)), where=tau > 0)
    return naive_estimate(tau, kappa, fill)
