"""Problem instances and preference datasets for linear pairwise-comparison models.

An instance bundles per-(state, action) feature vectors, a latent parameter
vector, a state distribution, and a comparison schedule.  The reward of
action ``i`` in state ``k`` is the inner product of its feature vector with
the parameter vector.  Preference labels follow the Bradley-Terry-Luce
model: when actions ``i < j`` are compared, the lower-indexed action wins
with probability ``sigmoid(r_i - r_j)``.

Comparisons are canonicalised so that every record stores the ordered pair
``(first, second)`` with ``first < second`` plus a ``winner_is_first`` bit.
The schedule tensor is nonzero only on ordered pairs ``i < j``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .rng import substream

# Singular values below RANK_RTOL * sigma_max are treated as zero when
# computing the rank of the observed-difference matrix.
RANK_RTOL = 1e-9

# Residual threshold for "difference lies in the observed span" tests.
SPAN_RTOL = 1e-9

PROB_ATOL = 1e-12


@dataclass(frozen=True)
class Instance:
    """A pairwise-comparison problem: features, parameter, state law, schedule."""

    num_states: int
    num_actions: int
    dim: int
    features: np.ndarray  # (S, A, d)
    theta: np.ndarray  # (d,)
    rho: np.ndarray  # (S,)
    schedule: np.ndarray  # (S, A, A), nonzero only where i < j
    reward_bound: float

    def rewards(self) -> np.ndarray:
        """True rewards ``<features[k, i], theta>`` as an (S, A) matrix."""
        return self.features @ self.theta

    def best_actions(self) -> np.ndarray:
        return np.argmax(self.rewards(), axis=1)

    def observed_pairs(self) -> np.ndarray:
        """Ordered (k, i, j) triples with positive schedule mass, i < j."""
        return np.argwhere(self.schedule > 0)


@dataclass(frozen=True)
class PreferenceDataset:
    """Canonicalised comparison records plus the nominal sample size.

    ``records`` has one row per comparison: (state, first, second,
    winner_is_first) with first < second.  ``n`` is the nominal size the
    dataset was drawn for; the realised row count may exceed it because
    per-pair counts are rounded up.
    """

    records: np.ndarray  # (m, 4) int64
    n: int

    def __post_init__(self):
        rec = np.array(self.records, dtype=np.int64, copy=True).reshape(-1, 4)
        rec.flags.writeable = False
        object.__setattr__(self, "records", rec)
        if self.n < 1:
            raise ValidationError("dataset size n must be >= 1")
        if rec.shape[0] and not np.all(rec[:, 1] < rec[:, 2]):
            raise ValidationError("records must satisfy first < second")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic-instance generator."""

    num_states: int
    num_actions: int
    dim: int
    seed: int
    gap_step: float = 0.05
    epsilon: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 2 or self.dim < 1:
            raise ValidationError("generator requires S >= 1, A >= 2, d >= 1")
        if not self.gap_step > 0:
            raise ValidationError("gap_step must be positive")
        for name in ("epsilon", "delta"):
            value = getattr(self, name)
            if value is not None and not 0 < value < 1:
                raise ValidationError(f"{name} must lie strictly in (0, 1)")


def make_instance(features, theta, rho, schedule, reward_bound) -> Instance:
    """Assemble an Instance from array-likes without validating invariants."""
    features = np.array(features, dtype=np.float64, order="C", copy=True)
    if features.ndim != 3:
        raise ValidationError("features must have shape (S, A, d)")
    S, A, d = features.shape
    theta = np.array(theta, dtype=np.float64, copy=True)
    rho = np.array(rho, dtype=np.float64, copy=True)
    schedule = np.array(schedule, dtype=np.float64, order="C", copy=True)
    for arr in (features, theta, rho, schedule):
        arr.flags.writeable = False
    return Instance(S, A, d, features, theta, rho, schedule, float(reward_bound))


def validate_instance(candidate: Instance) -> Instance:
    """Check every structural invariant; return the instance unchanged if sound."""
    v = candidate
    S, A, d = v.num_states, v.num_actions, v.dim
    if v.features.shape != (S, A, d):
        raise ValidationError(f"features shape {v.features.shape} != {(S, A, d)}")
    if v.theta.shape != (d,):
        raise ValidationError(f"theta shape {v.theta.shape} != {(d,)}")
    if v.rho.shape != (S,):
        raise ValidationError(f"rho shape {v.rho.shape} != {(S,)}")
    if v.schedule.shape != (S, A, A):
        raise ValidationError(f"schedule shape {v.schedule.shape} != {(S, A, A)}")

    if np.any(v.rho <= 0):
        raise ValidationError("rho entries must be strictly positive")
    if abs(float(v.rho.sum()) - 1.0) > PROB_ATOL:
        raise ValidationError("rho must sum to 1")

    if np.any(v.schedule < 0) or np.any(v.schedule > 1):
        raise ValidationError("schedule entries must lie in [0, 1]")
    lower = ~np.triu(np.ones((A, A), dtype=bool), k=1)
    if np.any(v.schedule[:, lower] != 0):
        raise ValidationError("schedule must be zero on pairs with i >= j")
    if abs(float(v.schedule.sum()) - 1.0) > PROB_ATOL:
        raise ValidationError("schedule must sum to 1")

    for k in range(S):
        for i in range(A):
            for j in range(i + 1, A):
                if np.array_equal(v.features[k, i], v.features[k, j]):
                    raise ValidationError(
                        f"duplicate features for actions {i} and {j} in state {k}"
                    )

    rewards = v.rewards()
    if np.max(np.abs(rewards)) > v.reward_bound * (1 + 1e-12) + 1e-12:
        raise ValidationError(
            f"reward bound violated: max |reward| = {np.max(np.abs(rewards))} "
            f"> {v.reward_bound}"
        )

    for k in range(S):
        row = rewards[k]
        if int(np.sum(row == row.max())) != 1:
            raise ValidationError(f"best action in state {k} is not unique")
    return v


def true_reward(v: Instance, k: int, i: int) -> float:
    """Reward of action ``i`` in state ``k``: ``<features[k, i], theta>``."""
    if not (0 <= k < v.num_states and 0 <= i < v.num_actions):
        raise ValidationError(f"state/action index ({k}, {i}) out of range")
    return float(v.features[k, i] @ v.theta)


def suboptimality_gaps(v: Instance) -> np.ndarray:
    """Per-(state, action) reward deficit against the state's best action."""
    rewards = v.rewards()
    return rewards.max(axis=1, keepdims=True) - rewards


def all_pair_differences(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Every ordered difference features[k, i] - features[k, j] with i < j.

    Returns (triples, diffs) where triples is (m, 3) int and diffs is (m, d).
    """
    S, A, _ = features.shape
    iu, ju = np.triu_indices(A, k=1)
    triples = []
    diffs = []
    for k in range(S):
        diffs.append(features[k, iu] - features[k, ju])
        triples.append(np.column_stack([np.full(iu.shape, k), iu, ju]))
    return np.concatenate(triples), np.concatenate(diffs)


def observed_differences(
    features: np.ndarray, schedule: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Triples, feature differences and masses of the observed (N > 0) pairs."""
    pairs = np.argwhere(schedule > 0)
    if pairs.size:
        diffs = features[pairs[:, 0], pairs[:, 1]] - features[pairs[:, 0], pairs[:, 2]]
    else:
        diffs = np.zeros((0, features.shape[2]))
    masses = schedule[pairs[:, 0], pairs[:, 1], pairs[:, 2]] if pairs.size else np.zeros(0)
    return pairs, diffs, masses


def consistency_witness(
    features: np.ndarray, schedule: np.ndarray
) -> tuple[int, int, int] | None:
    """First (k, i, j) whose difference leaves the observed span, else None."""
    triples, targets = all_pair_differences(features)
    _, observed, _ = observed_differences(features, schedule)
    if observed.shape[0] == 0:
        return tuple(int(x) for x in triples[0]) if triples.size else None
    # Orthonormal rows spanning the observed differences, rank via relative
    # singular-value threshold.
    _, sing, vh = np.linalg.svd(observed, full_matrices=False)
    rank = int(np.sum(sing > RANK_RTOL * sing[0])) if sing.size else 0
    basis = vh[:rank]
    residual = targets - (targets @ basis.T) @ basis
    norms = np.linalg.norm(residual, axis=1)
    limit = SPAN_RTOL * (1 + np.linalg.norm(targets, axis=1))
    bad = np.flatnonzero(norms > limit)
    if bad.size == 0:
        return None
    return tuple(int(x) for x in triples[bad[0]])


def check_consistency(v: Instance) -> tuple[bool, tuple[int, int, int] | None]:
    """Whether every pairwise difference lies in the observed-difference span."""
    witness = consistency_witness(v.features, v.schedule)
    return witness is None, witness


def make_paper_instance(cfg: GeneratorConfig) -> Instance:
    """Synthetic benchmark instance: simplex features with a fixed reward ladder.

    Per (state, action) a base vector is drawn uniformly from the probability
    simplex, then shifted along the all-ones parameter so that action ``i``
    has reward exactly ``1 - gap_step * i`` (0-based).  The comparison
    schedule is uniform over all (state, i < j) cells.  With two states the
    state law is (0.4, 0.6), otherwise uniform.
    """
    S, A, d = cfg.num_states, cfg.num_actions, cfg.dim
    theta = np.ones(d)
    rho = np.array([0.4, 0.6]) if S == 2 else np.full(S, 1.0 / S)

    rng = substream(cfg.seed, "synthetic-instance")
    # Exponential draws normalised to unit 1-norm are exactly uniform on the
    # simplex.
    base = rng.exponential(1.0, size=(S, A, d))
    base /= base.sum(axis=2, keepdims=True)
    shift = (cfg.gap_step / d) * np.arange(A)[None, :, None] * theta
    features = base - shift

    schedule = np.zeros((S, A, A))
    iu, ju = np.triu_indices(A, k=1)
    schedule[:, iu, ju] = 2.0 / (S * A * (A - 1))

    rewards = features @ theta
    # Round the realised bound up to one decimal; the tiny slack keeps
    # float-noise at the boundary from inflating it a notch.
    bound = math.ceil(np.max(np.abs(rewards)) * 10 - 1e-9) / 10
    return validate_instance(make_instance(features, theta, rho, schedule, bound))


def sample_dataset(v: Instance, n: int, seed: int) -> PreferenceDataset:
    """Draw a dataset of nominal size ``n`` from the comparison model.

    Each observed pair (k, i < j) contributes ``ceil(N * n)`` records whose
    winners are independent Bernoulli draws with success probability
    ``sigmoid(r_i - r_j)``.  Streams are derived per (seed, k, i, j) so the
    draw is reproducible and order-independent.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    rewards = v.rewards()
    blocks = []
    for k, i, j in v.observed_pairs():
        mass = v.schedule[k, i, j]
        # Guard the ceiling against float overshoot in mass * n.
        count = math.ceil(mass * n - 1e-9)
        if count <= 0:
            continue
        p_first = 1.0 / (1.0 + math.exp(rewards[k, j] - rewards[k, i]))
        wins = substream(seed, "sample", k, i, j).random(count) < p_first
        block = np.empty((count, 4), dtype=np.int64)
        block[:, 0] = k
        block[:, 1] = i
        block[:, 2] = j
        block[:, 3] = wins
        blocks.append(block)
    records = np.concatenate(blocks) if blocks else np.zeros((0, 4), dtype=np.int64)
    return PreferenceDataset(records=records, n=n)


def empirical_proportions(data: PreferenceDataset, dims: tuple[int, int]) -> np.ndarray:
    """Per-(k, i < j) share of records, measured against the nominal size."""
    S, A = dims
    rec = data.records
    if rec.shape[0]:
        if rec[:, 0].min() < 0 or rec[:, 0].max() >= S:
            raise ValidationError("record state index out of range")
        if rec[:, 1].min() < 0 or rec[:, 2].max() >= A:
            raise ValidationError("record action index out of range")
    flat = (rec[:, 0] * A + rec[:, 1]) * A + rec[:, 2]
    counts = np.bincount(flat, minlength=S * A * A).reshape(S, A, A)
    return counts / data.n


def pair_counts_and_wins(
    data: PreferenceDataset, dims: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Record counts and first-action win counts as (S, A, A) tensors."""
    S, A = dims
    rec = data.records
    flat = (rec[:, 0] * A + rec[:, 1]) * A + rec[:, 2]
    counts = np.bincount(flat, minlength=S * A * A).reshape(S, A, A)
    wins = np.bincount(flat, weights=rec[:, 3], minlength=S * A * A).reshape(S, A, A)
    return counts, wins


# ---------------------------------------------------------------------------
# File formats.  Floats go through json/repr, which round-trips binary64.


def instance_to_dict(v: Instance) -> dict:
    entries = [
        [int(k), int(i), int(j), float(v.schedule[k, i, j])]
        for k, i, j in v.observed_pairs()
    ]
    return {
        "S": v.num_states,
        "A": v.num_actions,
        "d": v.dim,
        "features": v.features.tolist(),
        "theta": v.theta.tolist(),
        "rho": v.rho.tolist(),
        "schedule": entries,
        "L": v.reward_bound,
    }


def instance_from_dict(payload: dict) -> Instance:
    try:
        S, A, d = int(payload["S"]), int(payload["A"]), int(payload["d"])
        schedule = np.zeros((S, A, A))
        for k, i, j, mass in payload["schedule"]:
            schedule[int(k), int(i), int(j)] = mass
        v = make_instance(
            payload["features"], payload["theta"], payload["rho"], schedule, payload["L"]
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed instance payload: {exc}") from exc
    return validate_instance(v)


def save_instance(v: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(v)) + "\n")


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def save_dataset(data: PreferenceDataset, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["state", "first", "second", "winner_is_first"])
        writer.writerows(data.records.tolist())


def load_dataset(path: str | Path) -> PreferenceDataset:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["state", "first", "second", "winner_is_first"]:
            raise ValidationError(f"unexpected dataset header: {header}")
        rows = [[int(cell) for cell in row] for row in reader if row]
    records = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    return PreferenceDataset(records=records, n=max(len(rows), 1))
