"""Label-private estimation via the Gaussian mechanism on success rates.

One preference label touches exactly one empirical success rate, by
``1 / (n * N)``, so adding zero-mean Gaussian noise with standard deviation
``sqrt(2 * ln(1.25 / delta)) / (epsilon * n * N)`` to each observed rate
yields (epsilon, delta) label differential privacy.  The rest of the
pipeline is unchanged: the weights depend only on features and comparison
proportions, which are public attributes.

Noise is drawn once per unordered observed pair; the reverse orientation is
derived as the complement.  Drawing independently for both orientations
would break the complement identity and double the privacy cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InconsistencyError, ValidationError
from .estimator import (
    EstimateReport,
    SuccessRates,
    _clip_array,
    build_weight_table,
    estimate_relative_rewards,
    select_best_actions,
    success_rates,
)
from .instances import PreferenceDataset, consistency_witness, empirical_proportions
from .rng import substream


@dataclass(frozen=True)
class PrivacyParams:
    """(epsilon, delta) privacy budget; both strictly inside (0, 1)."""

    epsilon: float
    delta: float

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValidationError(f"{name} must lie strictly in (0, 1), got {value}")


@dataclass(frozen=True)
class PerturbedRates:
    """Noisy success rates plus the noise scale used per observed pair."""

    tilde_raw: np.ndarray  # (S, A, A)
    tilde_clipped: np.ndarray  # (S, A, A)
    noise_std: dict[tuple[int, int, int], float]
    observed: np.ndarray  # (S, A, A) bool, symmetric
    clip_bound: float


def noise_scale(n: int, mass: float, privacy: PrivacyParams) -> float:
    """Gaussian std calibrated to a single label flip in an (n * N)-count cell."""
    return math.sqrt(2 * math.log(1.25 / privacy.delta)) / (privacy.epsilon * n * mass)


def _draw_noise(seed: int, pairs: np.ndarray, stds: np.ndarray) -> np.ndarray:
    """One Gaussian draw per observed pair from a (seed, k, i, j) substream.

    Module-level so tests can stub it out (e.g. with zeros); the public
    pipeline never substitutes it.
    """
    out = np.empty(len(stds))
    for idx, ((k, i, j), std) in enumerate(zip(pairs, stds)):
        out[idx] = substream(seed, "noise", int(k), int(i), int(j)).normal(0.0, std)
    return out


def gaussian_mechanism(
    rates: SuccessRates,
    schedule: np.ndarray,
    n: int,
    privacy: PrivacyParams,
    seed: int,
) -> PerturbedRates:
    """Perturb each observed success rate with calibrated Gaussian noise."""
    pairs = np.argwhere(schedule > 0)
    masses = schedule[pairs[:, 0], pairs[:, 1], pairs[:, 2]]
    stds = np.sqrt(2 * math.log(1.25 / privacy.delta)) / (privacy.epsilon * n * masses)
    noise = _draw_noise(seed, pairs, stds)

    S, A = schedule.shape[0], schedule.shape[1]
    tilde_raw = np.zeros((S, A, A))
    tilde_clipped = np.zeros((S, A, A))
    ks, is_, js = pairs[:, 0], pairs[:, 1], pairs[:, 2]
    noisy = rates.raw[ks, is_, js] + noise
    tilde_raw[ks, is_, js] = noisy
    tilde_raw[ks, js, is_] = 1.0 - noisy
    clipped = _clip_array(noisy, rates.clip_bound)
    tilde_clipped[ks, is_, js] = clipped
    tilde_clipped[ks, js, is_] = 1.0 - clipped

    observed = np.zeros((S, A, A), dtype=bool)
    observed[ks, is_, js] = True
    observed |= observed.transpose(0, 2, 1).copy()
    return PerturbedRates(
        tilde_raw=tilde_raw,
        tilde_clipped=tilde_clipped,
        noise_std={
            (int(k), int(i), int(j)): float(s) for (k, i, j), s in zip(pairs, stds)
        },
        observed=observed,
        clip_bound=rates.clip_bound,
    )


def sensitivity_audit(schedule: np.ndarray, n: int) -> dict[tuple[int, int, int], float]:
    """Exact per-pair change in the success rate from flipping one label."""
    pairs = np.argwhere(schedule > 0)
    return {
        (int(k), int(i), int(j)): float(1.0 / (n * schedule[k, i, j]))
        for k, i, j in pairs
    }


def dp_rl_low(
    data: PreferenceDataset,
    features: np.ndarray,
    L: float,
    privacy: PrivacyParams,
    seed: int,
    tie_seed: int = 0,
) -> EstimateReport:
    """Private variant of the estimation pipeline.

    Identical to the non-private run except that clipped rates are replaced
    by their perturbed counterparts; the weights are untouched because they
    never read the labels.
    """
    S, A, _ = features.shape
    schedule = empirical_proportions(data, (S, A))
    witness = consistency_witness(features, schedule)
    if witness is not None:
        raise InconsistencyError(
            f"dataset schedule is inconsistent; witness pair {witness}",
            witness=witness,
        )
    rates = success_rates(data, schedule, L)
    perturbed = gaussian_mechanism(rates, schedule, data.n, privacy, seed)
    table = build_weight_table(schedule, features)
    rhat = estimate_relative_rewards(perturbed, table, features)
    selections, tie_sets = select_best_actions(rhat, tie_seed)
    return EstimateReport(rhat=rhat, selections=selections, tie_sets=tie_sets, reference=0)
