"""Neighbourhoods, Gaussian phase smearing and data-message generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import QubitArray
from .measurement import MESSAGE, MeasurementOutcome


@dataclass(frozen=True)
class Neighborhood:
    center: int
    members: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class MessageBatch:
    """Message bits as boolean (k, d) arrays; ``k`` is 1 (shared) or n_alpha."""

    mask: np.ndarray
    bits: np.ndarray

    @classmethod
    def empty(cls, d: int, k: int = 1) -> "MessageBatch":
        return cls(np.zeros((k, d), dtype=bool), np.zeros((k, d), dtype=bool))

    @classmethod
    def from_outcomes(cls, outcomes, d: int) -> "MessageBatch":
        batch = cls.empty(d)
        for m in outcomes:
            if batch.mask[0, m.site]:
                raise ValueError(f"duplicate message for site {m.site}")
            batch.mask[0, m.site] = True
            batch.bits[0, m.site] = bool(m.bit)
        return batch

    def mean_count(self) -> float:
        return float(self.mask.sum(axis=1).mean())


def smeared_phase(f_j, r_j, nu):
    """Phase at ``f_j`` spread by a Gaussian kernel of length-scale ``r_j`` to distance ``nu``."""
    r_j = np.asarray(r_j, dtype=float)
    if np.any(r_j <= 0):
        raise ValueError("length-scale must be > 0")
    out = f_j * np.exp(-np.square(nu) / np.square(r_j))
    return float(out) if np.ndim(out) == 0 else out


def neighborhood_mask(array: QubitArray, j: int, r_j, k0: float = 1.0) -> np.ndarray:
    """Boolean membership over sites; broadcasts over a stack of length-scales.

    For ``r_j`` of shape S the result has shape S + (d,).
    """
    nu = array.distances[j]
    r_j = np.asarray(r_j, dtype=float)
    mask = nu <= k0 * r_j[..., None]
    mask[..., j] = False
    return mask


def neighborhood(array: QubitArray, j: int, r_j: float, k0: float = 1.0) -> Neighborhood:
    j = array.check_site(j)
    if not r_j > 0:
        raise ValueError(f"length-scale must be > 0, got {r_j}")
    if k0 < 1:
        raise ValueError(f"k0 must be >= 1, got {k0}")
    members = np.flatnonzero(neighborhood_mask(array, j, r_j, k0))
    return Neighborhood(center=j, members=tuple(int(q) for q in members))


def extrapolated_phase(f_q, f_bar, tau_q, lambda2: float):
    """Blend of a neighbour's own phase and the smeared phase from the measured site.

    The smeared share is ``lambda2 ** tau_q`` with ``0 ** 0 == 1``.
    """
    share = np.power(float(lambda2), np.asarray(tau_q, dtype=float))
    return (1.0 - share) * f_q + share * f_bar


def generate_messages(
    f: np.ndarray,
    r: np.ndarray,
    j: int,
    array: QubitArray,
    tally,
    lambda2: float,
    k0: float,
    rng: np.random.Generator,
) -> list[MeasurementOutcome]:
    """One Bernoulli message bit per member of the posterior neighbourhood at ``j``.

    ``f`` and ``r`` are the posterior mean map and length-scales.
    """
    members = np.flatnonzero(neighborhood_mask(array, j, r[j], k0))
    if members.size == 0:
        return []
    f_bar = smeared_phase(f[j], r[j], array.distances[j, members])
    x_q = extrapolated_phase(f[members], f_bar, tally.tau[members], lambda2)
    p = np.clip(0.5 * np.cos(x_q) + 0.5, 0.0, 1.0)
    bits = rng.random(members.size) < p
    return [
        MeasurementOutcome(site=int(q), bit=int(b), origin=MESSAGE)
        for q, b in zip(members, bits)
    ]


def generate_particle_messages(
    f: np.ndarray,
    r: np.ndarray,
    j: int,
    array: QubitArray,
    tau: np.ndarray,
    lambda2: float,
    k0: float,
    rng: np.random.Generator,
) -> MessageBatch:
    """Messages drawn separately for each particle from its own map and length-scale.

    ``f`` and ``r`` are (n_alpha, d); row i of the batch is what particle i receives.
    """
    mask = neighborhood_mask(array, j, r[:, j], k0)
    f_bar = f[:, j, None] * np.exp(-np.square(array.distances[j]) / np.square(r[:, j, None]))
    x_q = extrapolated_phase(f, f_bar, tau, lambda2)
    bits = rng.random(f.shape) < np.clip(0.5 * np.cos(x_q) + 0.5, 0.0, 1.0)
    return MessageBatch(mask=mask, bits=bits & mask)
