"""Single-shot binary outcomes: simulated Ramsey shots and data-bank replay."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lattice import TrueField

TRUNCATION_B = 0.5

PHYSICAL = "physical"
MESSAGE = "message"


class DataBankFormatError(ValueError):
    """Raised when a data-bank file is empty, ragged or holds non-binary entries."""


@dataclass(frozen=True)
class MeasurementOutcome:
    site: int
    bit: int
    origin: str = PHYSICAL

    def __post_init__(self) -> None:
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")
        if self.origin not in (PHYSICAL, MESSAGE):
            raise ValueError(f"unknown outcome origin {self.origin!r}")


@dataclass(frozen=True)
class NoiseParams:
    """Measurement-noise variance and map-approximation error moments."""

    sigma_v: float = 1e-4
    mu_f: float = 0.0
    sigma_f: float = 1e-6
    b: float = TRUNCATION_B

    def __post_init__(self) -> None:
        if not 0 < self.sigma_v < 1:
            raise ValueError(f"sigma_v must lie in (0, 1), got {self.sigma_v}")
        if not self.sigma_f > 0:
            raise ValueError(f"sigma_f must be > 0, got {self.sigma_f}")
        if self.b != TRUNCATION_B:
            raise ValueError("truncation half-width b is fixed at 1/2")


def sample_truncated_noise(sigma_v: float, rng: np.random.Generator, size=None):
    """Zero-mean Gaussian with variance ``sigma_v`` truncated to [-1/2, 1/2].

    Rejection sampling from the untruncated density.
    """
    if not sigma_v > 0:
        raise ValueError(f"sigma_v must be > 0, got {sigma_v}")
    std = np.sqrt(sigma_v)
    n = 1 if size is None else int(np.prod(size))
    out = rng.normal(0.0, std, n)
    bad = np.abs(out) > TRUNCATION_B
    while bad.any():
        out[bad] = rng.normal(0.0, std, int(bad.sum()))
        bad = np.abs(out) > TRUNCATION_B
    if size is None:
        return float(out[0])
    return out.reshape(size)


def born_probability(f, v=0.0):
    """Clamped Bernoulli parameter 1/2 cos(f) + v + 1/2."""
    return np.clip(0.5 * np.cos(f) + v + 0.5, 0.0, 1.0)


def simulate_measurement(f: float, sigma_v: float, rng: np.random.Generator) -> int:
    if not 0.0 <= f <= np.pi:
        raise ValueError(f"phase {f} outside [0, pi]")
    v = sample_truncated_noise(sigma_v, rng)
    return int(rng.random() < born_probability(f, v))


def simulate_shots(f: float, sigma_v: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent shots at phase ``f``, fresh noise per shot."""
    if not 0.0 <= f <= np.pi:
        raise ValueError(f"phase {f} outside [0, pi]")
    v = sample_truncated_noise(sigma_v, rng, size=n)
    return (rng.random(n) < born_probability(f, v)).astype(np.int8)


@dataclass(frozen=True)
class DataBank:
    shots: np.ndarray

    def __post_init__(self) -> None:
        shots = np.asarray(self.shots)
        if shots.ndim != 2 or shots.size == 0:
            raise DataBankFormatError("data bank must be a non-empty d x N matrix")
        if not np.isin(shots, (0, 1)).all():
            raise DataBankFormatError("data bank entries must be 0 or 1")
        shots = shots.astype(np.int8)
        shots.setflags(write=False)
        object.__setattr__(self, "shots", shots)

    @property
    def d(self) -> int:
        return self.shots.shape[0]

    @property
    def n(self) -> int:
        return self.shots.shape[1]


def ingest_databank(path: str | Path) -> DataBank:
    """Parse a headerless CSV with one row of comma-separated 0/1 tokens per site."""
    path = Path(path)
    rows = []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = [tok.strip() for tok in line.split(",")]
            row = np.zeros(len(tokens), dtype=np.int8)
            for col, tok in enumerate(tokens, start=1):
                if tok not in ("0", "1"):
                    raise DataBankFormatError(
                        f"{path}: row {lineno}, column {col}: expected 0 or 1, got {tok!r}"
                    )
                row[col - 1] = tok == "1"
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataBankFormatError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {width}"
                )
            rows.append(row)
    if not rows:
        raise DataBankFormatError(f"{path}: empty data bank")
    return DataBank(np.vstack(rows))


def write_databank(bank: DataBank, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for row in bank.shots:
            fh.write(",".join("1" if b else "0" for b in row))
            fh.write("\n")


def synthesize_databank(
    field: TrueField, n: int, sigma_v: float, rng: np.random.Generator
) -> DataBank:
    """Bank of ``n`` simulated shots per site drawn from the measurement model."""
    return DataBank(np.vstack([simulate_shots(f, sigma_v, n, rng) for f in field.values]))


def replay_measurement(bank: DataBank, site: int, rng: np.random.Generator) -> int:
    if not 0 <= site < bank.d:
        raise ValueError(f"site {site} out of range for bank with d={bank.d}")
    return int(bank.shots[site, rng.integers(bank.n)])


def empirical_truth(bank: DataBank) -> TrueField:
    mean = np.clip(bank.shots.mean(axis=1), 0.0, 1.0)
    return TrueField(np.arccos(np.clip(2.0 * mean - 1.0, -1.0, 1.0)), kind="external")


class SimulatedSource:
    """Physical shots drawn from the measurement model at a hidden true field."""

    def __init__(self, field: TrueField, sigma_v: float) -> None:
        self._values = field.values
        self._sigma_v = sigma_v

    @property
    def d(self) -> int:
        return len(self._values)

    def measure(self, site: int, rng: np.random.Generator) -> int:
        return simulate_measurement(self._values[site], self._sigma_v, rng)


class ReplaySource:
    """Physical shots drawn with replacement from a data bank row."""

    def __init__(self, bank: DataBank) -> None:
        self._bank = bank

    @property
    def d(self) -> int:
        return self._bank.d

    def measure(self, site: int, rng: np.random.Generator) -> int:
        return replay_measurement(self._bank, site, rng)
