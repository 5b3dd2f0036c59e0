"""Two-layer particle filter over per-site phases and length-scales.

Alpha particles carry a full hypothesis ``(f, r)`` over every site. At each
physical measurement every alpha spawns a beta layer of candidate
length-scales for the measured site; beta weights score how well the
smeared phase of the measured site explains its neighbours. The joint
alpha/beta set is resampled back down to ``n_alpha`` particles and each
survivor's length-scale at the measured site becomes the mean of its
surviving betas.

Phase updates come from per-site running tallies of physical bits and
message bits, shared by all particles of a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import QubitArray
from .measurement import MESSAGE, PHYSICAL, MeasurementOutcome, NoiseParams
from .sharing import MessageBatch, extrapolated_phase, neighborhood_mask


MESSAGE_SCOPES = ("particle", "global")


class DegenerateWeightsError(RuntimeError):
    """All particle weights vanished; the run cannot continue."""


class NoDataError(ValueError):
    """A site has neither physical measurements nor messages."""


def rho0(sigma_v: float, b: float = 0.5) -> float:
    """Normalisation of the quantised-noise measurement likelihood."""
    if not sigma_v > 0:
        raise ValueError(f"sigma_v must be > 0, got {sigma_v}")
    if sigma_v >= 1:
        raise ValueError(f"sigma_v={sigma_v} is outside the small-noise regime (< 1)")
    s = math.sqrt(2.0 * sigma_v)
    a = 2.0 * b / s
    return math.erf(a) + (s / (2.0 * b)) * math.exp(-(a**2)) / math.sqrt(math.pi) - (
        s / (2.0 * b)
    ) / math.sqrt(math.pi)


def k1(mu_f: float, sigma_f: float) -> float:
    """Truncation constant of the map-error density on [-pi, pi]."""
    s = math.sqrt(2.0 * sigma_f)
    return 0.5 * (math.erf((math.pi + mu_f) / s) + math.erf((math.pi - mu_f) / s))


@dataclass(frozen=True)
class FilterConfig:
    n_alpha: int = 100
    n_beta: int = 25
    lambda1: float = 0.0
    lambda2: float = 0.0
    noise: NoiseParams = field(default_factory=NoiseParams)
    r_min: float = 1.0
    r_max: float = 4.0 * math.sqrt(2.0)
    k0: float = 1.0
    message_scope: str = "particle"

    def __post_init__(self) -> None:
        if self.message_scope not in MESSAGE_SCOPES:
            raise ValueError(f"message_scope must be one of {MESSAGE_SCOPES}")
        if self.n_alpha < 1 or self.n_beta < 1:
            raise ValueError("n_alpha and n_beta must be positive")
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if not 0 < self.r_min <= self.r_max:
            raise ValueError(f"need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")
        if self.k0 < 1:
            raise ValueError(f"k0 must be >= 1, got {self.k0}")
        object.__setattr__(self, "rho0", rho0(self.noise.sigma_v, self.noise.b))
        k = k1(self.noise.mu_f, self.noise.sigma_f)
        object.__setattr__(self, "k1", k)
        object.__setattr__(
            self, "log_g2_norm", math.log(k * math.sqrt(2.0 * math.pi * self.noise.sigma_f))
        )


@dataclass
class SharedStateTally:
    """Per-site counts and running means of physical bits and message bits.

    Physical tallies ``tau``/``kappa`` are shape (d,). Message tallies
    ``phi``/``gamma`` are (d,) when messages are shared by the whole ensemble,
    or (n_alpha, d) when each particle receives its own messages.
    """

    tau: np.ndarray
    phi: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray

    @classmethod
    def zeros(cls, d: int, n_particles: int | None = None) -> "SharedStateTally":
        shape = (d,) if n_particles is None else (n_particles, d)
        return cls(
            tau=np.zeros(d, dtype=np.int64),
            phi=np.zeros(shape, dtype=np.int64),
            kappa=np.zeros(d),
            gamma=np.zeros(shape),
        )

    @property
    def per_particle(self) -> bool:
        return self.phi.ndim == 2

    def copy(self) -> "SharedStateTally":
        return SharedStateTally(
            self.tau.copy(), self.phi.copy(), self.kappa.copy(), self.gamma.copy()
        )

    def update(self, outcome: MeasurementOutcome) -> "SharedStateTally":
        q = outcome.site
        if outcome.origin == PHYSICAL:
            self.tau[q] += 1
            self.kappa[q] += (outcome.bit - self.kappa[q]) / self.tau[q]
        elif outcome.origin == MESSAGE:
            self.phi[..., q] += 1
            self.gamma[..., q] += (outcome.bit - self.gamma[..., q]) / self.phi[..., q]
        else:
            raise ValueError(f"unknown outcome origin {outcome.origin!r}")
        return self

    def add_messages(self, batch: MessageBatch) -> "SharedStateTally":
        """Fold a batch of message bits into the message running means."""
        received = batch.mask
        ones = batch.mask & batch.bits
        if received.shape[0] == 1 and not self.per_particle:
            received, ones = received[0], ones[0]
        phi = self.phi + received
        total = self.gamma * self.phi + ones
        self.gamma = np.divide(total, phi, out=np.zeros(phi.shape), where=phi > 0)
        self.phi = phi
        return self

    def reindex(self, parents: np.ndarray) -> "SharedStateTally":
        if self.per_particle:
            self.phi = self.phi[parents]
            self.gamma = self.gamma[parents]
        return self


def update_tallies(tally: SharedStateTally, outcome: MeasurementOutcome) -> SharedStateTally:
    return tally.update(outcome)


def born_estimate(tau, phi, kappa, gamma, lambda1: float):
    """Blended empirical Born probability; NaN where a site has no data."""
    tau = np.asarray(tau, dtype=float)
    phi = np.asarray(phi, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    share = 0.5 * np.power(float(lambda1), tau)
    p = np.where(
        (tau > 0) & (phi > 0),
        (1.0 - share) * kappa + share * gamma,
        np.where(tau > 0, kappa, np.where(phi > 0, gamma, np.nan)),
    )
    return p


def phase_from_probability(p):
    return np.arccos(np.clip(2.0 * np.asarray(p) - 1.0, -1.0, 1.0))


def update_map_h1(tau: int, phi: int, kappa: float, gamma: float, lambda1: float) -> float:
    """Phase estimate at one site from its tallies."""
    if tau == 0 and phi == 0:
        raise NoDataError("site has no physical measurements and no messages")
    return float(phase_from_probability(born_estimate(tau, phi, kappa, gamma, lambda1)))


def tally_map(tally: SharedStateTally, lambda1: float) -> np.ndarray:
    """h1 phase per site (per particle for per-particle tallies), NaN without data."""
    p = born_estimate(tally.tau, tally.phi, tally.kappa, tally.gamma, lambda1)
    has = ~np.isnan(p)
    return np.where(has, phase_from_probability(np.where(has, p, 0.5)), np.nan)


def g1_weight(f_j, y: int, sigma_v: float = 1e-4, rho: float | None = None):
    """Likelihood of physical bit ``y`` given phase ``f_j``."""
    if rho is None:
        rho = rho0(sigma_v)
    sign = 1.0 if y == 1 else -1.0
    return 0.5 * rho + 0.5 * rho * np.cos(f_j) * sign


@dataclass(frozen=True)
class BetaParticle:
    parent: int
    r_j: float
    weight: float = 1.0


@dataclass
class Ensemble:
    """Alpha particles as arrays: ``f`` and ``r`` are (n_alpha, d)."""

    f: np.ndarray
    r: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def copy(self) -> "Ensemble":
        return Ensemble(self.f.copy(), self.r.copy(), self.weights.copy())


def init_ensemble(config: FilterConfig, array: QubitArray, rng: np.random.Generator) -> Ensemble:
    n, d = config.n_alpha, array.d
    f = rng.uniform(0.0, np.pi, size=(n, d))
    r = rng.uniform(config.r_min, config.r_max, size=(n, d))
    return Ensemble(f=f, r=r, weights=np.full(n, 1.0 / n))


def spawn_beta_layer(n_beta: int, config: FilterConfig, rng: np.random.Generator, size=()):
    """Candidate length-scales at the measured site, shape ``size + (n_beta,)``."""
    if n_beta < 1:
        raise ValueError("n_beta must be >= 1")
    shape = tuple(np.atleast_1d(size).astype(int)) if size != () else ()
    return rng.uniform(config.r_min, config.r_max, size=shape + (n_beta,))


def beta_particles(parent: int, r_values, weights=None) -> list[BetaParticle]:
    if weights is None:
        weights = np.full(len(r_values), 1.0 / len(r_values))
    return [BetaParticle(parent, float(r), float(w)) for r, w in zip(r_values, weights)]


def g2_log_weights(
    f: np.ndarray,
    r_beta: np.ndarray,
    j: int,
    array: QubitArray,
    tau: np.ndarray,
    config: FilterConfig,
) -> np.ndarray:
    """Log length-scale likelihood for every (alpha, beta) pair.

    ``f`` is (n_alpha, d), ``r_beta`` is (n_alpha, n_beta); returns (n_alpha, n_beta).
    """
    nu = array.distances[j]
    mask = neighborhood_mask(array, j, r_beta, config.k0)
    f_bar = f[:, j, None, None] * np.exp(-np.square(nu) / np.square(r_beta)[..., None])
    f_q = f[:, None, :]
    x_q = extrapolated_phase(f_q, f_bar, tau, config.lambda2)
    resid = f_q - x_q - config.noise.mu_f
    terms = -0.5 * np.square(resid) / config.noise.sigma_f - config.log_g2_norm
    return np.where(mask, terms, 0.0).sum(axis=-1)


def g2_weight(
    beta: BetaParticle,
    f: np.ndarray,
    j: int,
    array: QubitArray,
    tally: SharedStateTally,
    config: FilterConfig,
) -> float:
    """Unnormalised length-scale likelihood of one beta particle over parent map ``f``."""
    if not config.r_min <= beta.r_j <= config.r_max:
        raise ValueError(f"beta length-scale {beta.r_j} outside [r_min, r_max]")
    logw = g2_log_weights(
        np.asarray(f, dtype=float)[None, :], np.array([[beta.r_j]]), j, array, tally.tau, config
    )
    return float(np.exp(logw[0, 0]))


def resample_multinomial(items, weights, count: int, rng: np.random.Generator):
    """Draw ``count`` items with replacement, probability proportional to weight.

    Returns ``(offspring, indices)``; offspring weights are implicitly uniform.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or np.any(~np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if not total > 0:
        raise DegenerateWeightsError("all particle weights are zero")
    idx = rng.choice(len(w), size=count, replace=True, p=w / total)
    if isinstance(items, np.ndarray):
        return items[idx], idx
    return [items[i] for i in idx], idx


def update_lengthscale_h2(r_values) -> float:
    r_values = np.asarray(r_values, dtype=float)
    if r_values.size == 0:
        raise RuntimeError("empty beta layer after resampling")
    return float(r_values.mean())


def _softmax_rows(logw: np.ndarray) -> np.ndarray:
    top = logw.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise DegenerateWeightsError("beta layer has no finite log-weight")
    w = np.exp(logw - top)
    return w / w.sum(axis=-1, keepdims=True)


def step(
    ensemble: Ensemble,
    tally: SharedStateTally,
    outcome: MeasurementOutcome,
    messages: list[MeasurementOutcome] | MessageBatch,
    config: FilterConfig,
    array: QubitArray,
    rng: np.random.Generator,
) -> tuple[Ensemble, SharedStateTally]:
    """Advance the filter by one physical measurement plus its queued messages.

    ``tally`` is updated in place and returned re-indexed to the survivors.
    """
    n_alpha = len(ensemble)
    if n_alpha != config.n_alpha:
        raise ValueError(f"ensemble has {n_alpha} particles, config expects {config.n_alpha}")
    if outcome.origin != PHYSICAL:
        raise ValueError("step requires a physical outcome")
    j = outcome.site

    tally.update(outcome)
    if isinstance(messages, MessageBatch):
        tally.add_messages(messages)
    else:
        for msg in messages:
            tally.update(msg)

    # identity dynamics; h1 overwrites every site that has data
    phases = np.broadcast_to(tally_map(tally, config.lambda1), ensemble.f.shape)
    f = np.where(np.isnan(phases), ensemble.f, phases)
    r = ensemble.r

    w_alpha = ensemble.weights * g1_weight(f[:, j], outcome.bit, rho=config.rho0)
    total = w_alpha.sum()
    if not total > 0:
        raise DegenerateWeightsError(f"all alpha weights vanished at site {j}")
    w_alpha = w_alpha / total

    r_beta = spawn_beta_layer(config.n_beta, config, rng, size=n_alpha)
    w_beta = _softmax_rows(g2_log_weights(f, r_beta, j, array, tally.tau, config))
    joint = (w_alpha[:, None] * w_beta).ravel()

    picks, _ = resample_multinomial(np.arange(joint.size), joint, n_alpha, rng)
    parents, betas = np.divmod(picks, config.n_beta)

    # h2: each surviving parent takes the mean of its surviving betas
    sums = np.bincount(parents, weights=r_beta[parents, betas], minlength=n_alpha)
    counts = np.bincount(parents, minlength=n_alpha)
    r_new = np.divide(sums, counts, out=np.zeros(n_alpha), where=counts > 0)

    f_out = f[parents]
    r_out = r[parents]
    r_out[:, j] = r_new[parents]
    out = Ensemble(f=f_out, r=r_out, weights=np.full(n_alpha, 1.0 / n_alpha))
    return out, tally.reindex(parents)


@dataclass(frozen=True)
class PosteriorSummary:
    f_mean: np.ndarray
    f_var: np.ndarray
    r_mean: np.ndarray


def posterior_summary(ensemble: Ensemble) -> PosteriorSummary:
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    w = ensemble.weights / ensemble.weights.sum()
    f_mean = w @ ensemble.f
    f_var = w @ np.square(ensemble.f - f_mean)
    r_mean = w @ ensemble.r
    return PosteriorSummary(f_mean=f_mean, f_var=f_var, r_mean=r_mean)
