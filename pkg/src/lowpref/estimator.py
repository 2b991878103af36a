"""Core estimation pipeline: pooled pairwise log-odds with locally optimal weights.

Given a dataset of pairwise comparisons, the pipeline is

  1. empirical success rates per observed pair, clipped to the interval the
     bounded-reward model allows;
  2. an orthonormal basis of the span of observed feature differences and
     the mass-weighted Gram matrix ``V`` of those differences;
  3. per-target weights that express a target feature difference as a
     combination of observed differences with minimal variance proxy
     ``sum(w^2 / N)``, in closed form ``w = N * diff' V^{-1} diff``;
  4. relative-reward estimates ``rhat = sum(w * log-odds(clipped rate))``
     against a fixed reference action, and per-state argmax selection with
     uniform tie resolution.

Estimates targeted at different pairs are additive (``rhat[i,j] + rhat[j,l]
= rhat[i,l]``), so ranking against a single reference action recovers the
full order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InconsistencyError, NumericalError, ValidationError
from .instances import (
    PreferenceDataset,
    RANK_RTOL,
    SPAN_RTOL,
    consistency_witness,
    empirical_proportions,
    observed_differences,
    pair_counts_and_wins,
)
from .rng import substream

# Smallest admissible eigenvalue of V relative to its trace.  V is positive
# definite on the observed span by construction; anything smaller signals a
# rank bug rather than an edge case worth papering over.
V_DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class SuccessRates:
    """Empirical win rates per ordered pair, raw and clipped.

    ``raw[k, i, j]`` is the fraction of (i, j) comparisons in state ``k``
    won by the lower-indexed action; the reverse orientation stores the
    complement and unobserved pairs are zero.
    """

    raw: np.ndarray  # (S, A, A)
    clipped: np.ndarray  # (S, A, A)
    observed: np.ndarray  # (S, A, A) bool, symmetric
    clip_bound: float


@dataclass(frozen=True)
class SpanBasis:
    """Orthonormal basis (rows) of the span of observed feature differences."""

    vectors: np.ndarray  # (r, d)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def coords(self, w: np.ndarray) -> np.ndarray:
        """Coordinates of ``w`` (last axis = feature dim) in the basis."""
        return np.asarray(w) @ self.vectors.T

    def lift(self, c: np.ndarray) -> np.ndarray:
        """Map coordinates back to the ambient feature space."""
        return np.asarray(c) @ self.vectors


@dataclass(frozen=True)
class WeightEntry:
    """Locally optimal weights for one target (k, i, j)."""

    target: tuple[int, int, int]
    weights: np.ndarray  # aligned with WeightTable.pairs
    gamma: float  # sum(w^2 / N) = |coords|^2 in the V^{-1} norm


@dataclass(frozen=True)
class WeightTable:
    """Shared geometry for weight computations over one observed schedule."""

    pairs: np.ndarray  # (m, 3) observed (k, i < j)
    masses: np.ndarray  # (m,) schedule values
    diff_coords: np.ndarray  # (m, r) observed differences in basis coords
    basis: SpanBasis
    V: np.ndarray  # (r, r)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.V, rhs)

    def entry(self, target: tuple[int, int, int], features: np.ndarray) -> WeightEntry:
        k, i, j = target
        if i == j:
            raise ValidationError("weight target requires two distinct actions")
        tdiff = features[k, i] - features[k, j]
        coords = self.basis.coords(tdiff)
        residual = tdiff - self.basis.lift(coords)
        if np.linalg.norm(residual) > SPAN_RTOL * (1 + np.linalg.norm(tdiff)):
            raise InconsistencyError(
                f"target difference {target} lies outside the observed span",
                witness=(int(k), int(i), int(j)),
            )
        solved = self.solve(coords)
        weights = self.masses * (self.diff_coords @ solved)
        return WeightEntry(target=(int(k), int(i), int(j)), weights=weights,
                           gamma=float(coords @ solved))

    def entry_dict(self, entry: WeightEntry) -> dict[tuple[int, int, int], float]:
        return {
            (int(k), int(i), int(j)): float(w)
            for (k, i, j), w in zip(self.pairs, entry.weights)
        }


@dataclass(frozen=True)
class EstimateReport:
    """Relative-reward estimates against the reference action plus selections."""

    rhat: np.ndarray  # (S, A)
    selections: np.ndarray  # (S,)
    tie_sets: list[list[int]]
    reference: int

    def to_json_dict(self) -> dict:
        return {
            "rhat": self.rhat.tolist(),
            "selections": [int(a) for a in self.selections],
            "tie_sets": [[int(a) for a in ties] for ties in self.tie_sets],
        }


def clip_rate(b: float, L: float) -> float:
    """Clamp a success rate into the band a reward bound of L permits."""
    if not 0 <= b <= 1:
        raise ValidationError(f"success rate {b} outside [0, 1]")
    if L < 0:
        raise ValidationError("clip bound L must be nonnegative")
    return float(_clip_array(np.float64(b), L))


def _clip_array(values: np.ndarray, L: float) -> np.ndarray:
    lo = 1.0 / (1.0 + math.exp(2 * L))
    hi = 1.0 / (1.0 + math.exp(-2 * L))
    return np.minimum(np.maximum(values, lo), hi)


def success_rates(data: PreferenceDataset, schedule: np.ndarray, L: float) -> SuccessRates:
    """Per-pair win rates for the lower-indexed action, with clipping.

    ``schedule`` must be the empirical proportions of ``data``; passing the
    design schedule of an instance is an error because the rates divide by
    realised counts.
    """
    S, A = schedule.shape[0], schedule.shape[1]
    counts, wins = pair_counts_and_wins(data, (S, A))
    if not np.array_equal(schedule, counts / data.n):
        raise ValidationError("schedule does not match the dataset's proportions")

    raw = np.zeros((S, A, A))
    clipped = np.zeros((S, A, A))
    observed = counts > 0
    rate = np.divide(wins, counts, out=np.zeros_like(raw), where=observed)
    raw[observed] = rate[observed]
    clipped[observed] = _clip_array(rate[observed], L)
    # Reverse orientation holds the exact complement on observed pairs.
    rev = observed.transpose(0, 2, 1)
    raw_t = raw.transpose(0, 2, 1)
    clip_t = clipped.transpose(0, 2, 1)
    raw = np.where(rev, 1.0 - raw_t, raw)
    clipped = np.where(rev, 1.0 - clip_t, clipped)
    return SuccessRates(raw=raw, clipped=clipped, observed=observed | rev, clip_bound=L)


def span_basis(features: np.ndarray, schedule: np.ndarray) -> SpanBasis:
    """Orthonormal basis of the span of observed feature differences."""
    _, diffs, _ = observed_differences(features, schedule)
    if diffs.shape[0] == 0:
        raise ValidationError("schedule observes no pairs; span is empty")
    _, sing, vh = np.linalg.svd(diffs, full_matrices=False)
    if sing[0] == 0:
        raise ValidationError("observed differences are all zero")
    rank = int(np.sum(sing > RANK_RTOL * sing[0]))
    vectors = vh[:rank].copy()
    vectors.flags.writeable = False
    return SpanBasis(vectors=vectors)


def build_design_matrix(
    schedule: np.ndarray, features: np.ndarray, basis: SpanBasis
) -> np.ndarray:
    """Mass-weighted Gram matrix of observed differences in basis coordinates."""
    _, diffs, masses = observed_differences(features, schedule)
    coords = basis.coords(diffs)
    V = (coords * masses[:, None]).T @ coords
    V = (V + V.T) / 2
    smallest = float(np.linalg.eigvalsh(V)[0]) if V.size else 0.0
    if smallest <= V_DEGENERACY_RTOL * max(np.trace(V), 1e-300):
        raise NumericalError(
            f"design matrix is numerically singular (lambda_min={smallest})"
        )
    return V


def build_weight_table(schedule: np.ndarray, features: np.ndarray) -> WeightTable:
    basis = span_basis(features, schedule)
    pairs, diffs, masses = observed_differences(features, schedule)
    V = build_design_matrix(schedule, features, basis)
    return WeightTable(
        pairs=pairs, masses=masses, diff_coords=basis.coords(diffs), basis=basis, V=V
    )


def local_weights(
    target: tuple[int, int, int],
    schedule: np.ndarray,
    features: np.ndarray,
    basis: SpanBasis,
    V: np.ndarray,
) -> WeightEntry:
    """Closed-form locally optimal weights for one target pair."""
    pairs, diffs, masses = observed_differences(features, schedule)
    table = WeightTable(
        pairs=pairs, masses=masses, diff_coords=basis.coords(diffs), basis=basis, V=V
    )
    return table.entry(target, features)


def local_weights_qp_oracle(
    target: tuple[int, int, int], schedule: np.ndarray, features: np.ndarray
) -> dict[tuple[int, int, int], float]:
    """Reference solver for the weight optimisation, via a direct KKT system.

    Solves min sum(u^2 / N) subject to the reconstruction constraint with a
    single least-squares solve of the stationarity/feasibility block system.
    Independent of the basis/Gram-matrix code path; intended for tests.
    """
    k, i, j = target
    pairs, diffs, masses = observed_differences(features, schedule)
    m = pairs.shape[0]
    d = features.shape[2]
    tdiff = features[k, i] - features[k, j]
    # Feasibility check: the constraint D u = tdiff must be solvable.
    solution, *_ = np.linalg.lstsq(diffs.T, tdiff, rcond=None)
    if np.linalg.norm(diffs.T @ solution - tdiff) > SPAN_RTOL * (
        1 + np.linalg.norm(tdiff)
    ):
        raise InconsistencyError(
            f"target difference {target} is infeasible for the observed pairs",
            witness=(int(k), int(i), int(j)),
        )
    kkt = np.zeros((m + d, m + d))
    kkt[:m, :m] = np.diag(2.0 / masses)
    kkt[:m, m:] = diffs
    kkt[m:, :m] = diffs.T
    rhs = np.concatenate([np.zeros(m), tdiff])
    solved, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    u = solved[:m]
    return {
        (int(pk), int(pi), int(pj)): float(w) for (pk, pi, pj), w in zip(pairs, u)
    }


def _clipped_tensor(rates) -> np.ndarray:
    if hasattr(rates, "clipped"):
        return rates.clipped
    return rates.tilde_clipped


def _pair_log_odds(rates, table: WeightTable) -> np.ndarray:
    clipped = _clipped_tensor(rates)
    values = clipped[table.pairs[:, 0], table.pairs[:, 1], table.pairs[:, 2]]
    if np.any(values <= 0) or np.any(values >= 1):
        raise NumericalError("clipped rate of 0 or 1 reached the log-odds")
    # log(b) - log(1-b) rather than log(b/(1-b)): no cancellation near the
    # clip bounds.
    return np.log(values) - np.log1p(-values)


def estimate_relative_rewards(
    rates,
    table: WeightTable,
    features: np.ndarray,
    reference: int = 0,
    fast_path: bool = True,
) -> np.ndarray:
    """Relative-reward estimates of every action against the reference action.

    The fast path folds the weight computation into one global vector
    ``g = V^{-1} sum(N * coords * log-odds)`` and evaluates each target as a
    dot product; the slow path materialises per-target weights.  Both agree
    to float precision.
    """
    log_odds = _pair_log_odds(rates, table)
    S, A, _ = features.shape
    if fast_path:
        g = table.solve(table.diff_coords.T @ (table.masses * log_odds))
        target_coords = table.basis.coords(features - features[:, reference : reference + 1])
        return target_coords @ g
    rhat = np.zeros((S, A))
    for k in range(S):
        for i in range(A):
            if i == reference:
                continue
            entry = table.entry((k, i, reference), features)
            rhat[k, i] = float(entry.weights @ log_odds)
    return rhat


def select_best_actions(
    rhat: np.ndarray, tie_seed: int = 0
) -> tuple[np.ndarray, list[list[int]]]:
    """Per-state argmax of the estimates, ties resolved uniformly by seed."""
    S, _ = rhat.shape
    selections = np.empty(S, dtype=np.int64)
    tie_sets: list[list[int]] = []
    for k in range(S):
        row = rhat[k]
        ties = np.flatnonzero(row == row.max())
        tie_sets.append([int(a) for a in ties])
        if ties.size == 1:
            selections[k] = ties[0]
        else:
            selections[k] = ties[substream(tie_seed, "tie", k).integers(ties.size)]
    return selections, tie_sets


def rl_low(
    data: PreferenceDataset,
    features: np.ndarray,
    L: float,
    tie_seed: int = 0,
    fast_path: bool = True,
) -> EstimateReport:
    """End-to-end estimation: rates, weights, relative rewards, selection.

    Refuses datasets whose empirical schedule leaves some pairwise feature
    difference outside the observed span, reporting the offending triple.
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
    table = build_weight_table(schedule, features)
    rhat = estimate_relative_rewards(rates, table, features, fast_path=fast_path)
    selections, tie_sets = select_best_actions(rhat, tie_seed)
    return EstimateReport(rhat=rhat, selections=selections, tie_sets=tie_sets, reference=0)
