"""Fast invariant checks behind ``nmqa validate``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np
from scipy import stats

from . import filtering
from .control import run_nmqa
from .lattice import build_grid, make_field
from .measurement import SimulatedSource
from .metrics import ssim
from .sharing import neighborhood


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def rho0_reference(sigma_v: float, b: float = 0.5, dps: int = 50) -> float:
    """High-precision evaluation of the measurement-likelihood normaliser."""
    with mpmath.workdps(dps):
        s = mpmath.sqrt(2 * mpmath.mpf(sigma_v))
        a = 2 * mpmath.mpf(b) / s
        val = (
            mpmath.erf(a)
            + (s / (2 * b)) * mpmath.exp(-(a**2)) / mpmath.sqrt(mpmath.pi)
            - (s / (2 * b)) / mpmath.sqrt(mpmath.pi)
        )
        return float(val)


def ssim_reference(x, y) -> float:
    """Direct-formula similarity score with plain-Python sums."""
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    vx = math.fsum((a - mx) ** 2 for a in x) / n
    vy = math.fsum((b - my) ** 2 for b in y) / n
    cxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    s = ((2 * mx * my + 0.01) * (2 * cxy + 0.01)) / ((mx * mx + my * my + 0.01) * (vx + vy + 0.01))
    return abs(1 - s)


def check_g1_normalization(rng, rho_fn: Callable = filtering.rho0, n: int = 100_000) -> Check:
    worst = 0.0
    for sigma_v in (1e-4, 1e-6):
        rho = rho_fn(sigma_v)
        f = rng.uniform(0, np.pi, n)
        total = filtering.g1_weight(f, 0, rho=rho) + filtering.g1_weight(f, 1, rho=rho)
        worst = max(worst, float(np.max(np.abs(total - rho0_reference(sigma_v)))))
    return Check("g1 normalization", worst <= 1e-12, f"max |g1(f,0)+g1(f,1)-rho0| = {worst:.2e}")


def check_rho0(rho_fn: Callable = filtering.rho0) -> Check:
    err = abs(rho_fn(1e-4) - rho0_reference(1e-4))
    return Check("rho0 value", err <= 1e-10, f"rho0(1e-4) = {rho_fn(1e-4):.10f}, error {err:.1e}")


def check_h1_inversion() -> Check:
    f = np.linspace(0, np.pi, 2001)
    err = float(np.max(np.abs(filtering.phase_from_probability(0.5 * np.cos(f) + 0.5) - f)))
    return Check("h1 inversion", err <= 1e-12, f"max phase error {err:.1e} on a 2001-point grid")


def check_resampling(rng, n: int = 100, draws: int = 10_000) -> Check:
    _, idx = filtering.resample_multinomial(np.arange(n), np.ones(n), draws, rng)
    counts = np.bincount(idx, minlength=n)
    p = float(stats.chisquare(counts).pvalue)
    return Check("resampling chi-square", p > 1e-3, f"p = {p:.4f} over {draws} draws")


def check_neighborhood_monotone(rng, trials: int = 50) -> Check:
    for _ in range(trials):
        array = build_grid(int(rng.integers(1, 7)), int(rng.integers(1, 7)), float(rng.uniform(0.5, 2)))
        j = int(rng.integers(array.d))
        r1, r2 = sorted(rng.uniform(0.1, 10, 2))
        k0 = float(rng.uniform(1, 3))
        a = set(neighborhood(array, j, r1, k0).members)
        b = set(neighborhood(array, j, r2, k0).members)
        if not a <= b:
            return Check("neighborhood monotonicity", False, f"violated at site {j}, r={r1:.3f}<{r2:.3f}")
    return Check("neighborhood monotonicity", True, f"{trials} random grids")


def check_ssim_oracle(rng, pairs: int = 1000) -> Check:
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(pairs):
            n = int(rng.integers(2, 40))
            x = rng.uniform(0, np.pi, n)
            y = rng.uniform(0, np.pi, n)
            worst = max(worst, abs(ssim(x, y) - ssim_reference(list(x), list(y))))
    return Check("ssim oracle agreement", worst <= 1e-12, f"max deviation {worst:.1e} over {pairs} pairs")


def check_determinism(seed: int = 7) -> Check:
    array = build_grid(3, 3)
    field = make_field(array, "square2d", params={"row_range": [0, 1], "col_range": [0, 1]})
    cfg = filtering.FilterConfig(n_alpha=20, n_beta=5, lambda1=0.9, lambda2=0.9, r_max=array.diameter)
    src = SimulatedSource(field, 1e-4)
    a = run_nmqa(cfg, array, src, 15, np.random.default_rng(seed))
    b = run_nmqa(cfg, array, src, 15, np.random.default_rng(seed))
    same = a.trajectory == b.trajectory and a.outcomes == b.outcomes and a.final_map == b.final_map
    return Check("seeded determinism", same, "identical trajectory and map" if same else "runs differ")


def run_checks(seed: int = 0, rho_fn: Callable = filtering.rho0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return [
        check_g1_normalization(rng, rho_fn),
        check_rho0(rho_fn),
        check_h1_inversion(),
        check_resampling(rng),
        check_neighborhood_monotone(rng),
        check_ssim_oracle(rng),
        check_determinism(),
    ]
