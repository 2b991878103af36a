"""Known-transition MDP layer: occupancy measures, policy search, regret.

Policies are deterministic, encoded as a tuple of one action per state.
The long-run state distribution of a policy is its time-average (Cesaro)
occupancy from the initial distribution, which is well defined for
periodic and reducible chains alike.  It is computed by power iteration on
the half-lazy kernel (I + P)/2: lazification changes neither absorption
probabilities nor per-class stationary laws, so the plain limit of the
lazy chain equals the time-average of the original one, and it converges
geometrically where direct averaging needs O(1/tol) steps.

Policy search maximises the occupancy-weighted estimated reward, either by
exhaustive enumeration (the reference) or by gain/bias policy iteration
for the average-reward criterion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .estimator import build_weight_table, rl_low
from .instances import Instance, PreferenceDataset
from .rng import substream

POWER_ITERATION_CAP = 100_000
ENUMERATION_CAP = 1_000_000

Policy = tuple[int, ...]


@dataclass(frozen=True)
class TransitionKernel:
    """State transition probabilities P[k, i, k'] for each (state, action)."""

    P: np.ndarray  # (S, A, S)


def validate_kernel(P: np.ndarray, dims: tuple[int, int]) -> TransitionKernel:
    S, A = dims
    P = np.array(P, dtype=np.float64, copy=True)
    if P.shape != (S, A, S):
        raise ValidationError(f"kernel shape {P.shape} != {(S, A, S)}")
    if np.any(P < 0):
        raise ValidationError("kernel entries must be nonnegative")
    if np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
        raise ValidationError("each kernel row must sum to 1")
    P.flags.writeable = False
    return TransitionKernel(P=P)


def _policy_matrix(kernel: TransitionKernel, policy: Policy) -> np.ndarray:
    S = kernel.P.shape[0]
    return kernel.P[np.arange(S), np.asarray(policy, dtype=np.int64)]


def stationary_distribution(
    kernel: TransitionKernel, policy: Policy, rho: np.ndarray
) -> np.ndarray:
    """Time-average state occupancy of the policy chain started from rho."""
    P_pi = _policy_matrix(kernel, policy)
    lazy = 0.5 * (np.eye(P_pi.shape[0]) + P_pi)
    mu = np.asarray(rho, dtype=np.float64).copy()
    for _ in range(POWER_ITERATION_CAP):
        nxt = mu @ lazy
        if 0.5 * float(np.abs(nxt - mu).sum()) <= 1e-10:
            mu = nxt
            break
        mu = nxt
    else:
        raise NumericalError("occupancy power iteration did not converge")
    mu[(mu < 0) & (mu > -1e-12)] = 0.0
    if np.any(mu < 0):
        raise NumericalError("occupancy iteration produced a negative mass")
    return mu


def _cesaro_projector(P_pi: np.ndarray) -> np.ndarray:
    """Limit matrix of the chain's time averages, via lazy-kernel squaring."""
    M = 0.5 * (np.eye(P_pi.shape[0]) + P_pi)
    for _ in range(64):
        nxt = M @ M
        if float(np.max(np.abs(nxt - M))) <= 1e-13:
            return nxt
        M = nxt
    return M


def _evaluate_policy(
    kernel: TransitionKernel, rewards: np.ndarray, policy: Policy
) -> tuple[np.ndarray, np.ndarray]:
    """Gain and bias of a policy under the average-reward criterion."""
    P_pi = _policy_matrix(kernel, policy)
    r_pi = rewards[np.arange(len(policy)), np.asarray(policy, dtype=np.int64)]
    proj = _cesaro_projector(P_pi)
    gain = proj @ r_pi
    eye = np.eye(P_pi.shape[0])
    # Deviation operator: (I - P + proj)^{-1} (I - proj).
    bias = np.linalg.solve(eye - P_pi + proj, (eye - proj) @ r_pi)
    return gain, bias


def policy_objective(
    kernel: TransitionKernel, rewards: np.ndarray, policy: Policy, rho: np.ndarray
) -> float:
    """Occupancy-weighted reward of the policy from the initial distribution."""
    occupancy = stationary_distribution(kernel, policy, rho)
    r_pi = rewards[np.arange(len(policy)), np.asarray(policy, dtype=np.int64)]
    return float(occupancy @ r_pi)


def _enumerate_policies(S: int, A: int):
    if A**S > ENUMERATION_CAP:
        raise ValidationError(
            f"policy space A^S = {A}^{S} exceeds the enumeration cap"
        )
    return itertools.product(range(A), repeat=S)


def _search_enumerate(
    kernel: TransitionKernel, rewards: np.ndarray, rho: np.ndarray, tie_atol: float = 0.0
) -> tuple[Policy, float, list[Policy]]:
    """Best policy by exhaustion.

    Returns (argmax policy, value, policies within tie_atol of the value);
    the argmax is the lexicographically smallest among exact maxima.
    """
    S, A = rewards.shape
    policies = list(_enumerate_policies(S, A))
    values = [policy_objective(kernel, rewards, policy, rho) for policy in policies]
    best_value = max(values)
    best = policies[values.index(best_value)]
    tied = [p for p, val in zip(policies, values) if val >= best_value - tie_atol]
    return best, best_value, tied


def _search_iterate(
    kernel: TransitionKernel, rewards: np.ndarray
) -> Policy:
    """Gain/bias policy iteration for the average-reward criterion.

    Two-stage improvement: first on expected next-state gain, then, among
    gain-optimal actions, on immediate reward plus expected bias.  Keeping
    the incumbent action whenever it attains the stage maximum (within
    tolerance) prevents cycling between equal-value actions.
    """
    S, A = rewards.shape
    policy = np.zeros(S, dtype=np.int64)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(rewards))))
    for _ in range(1000):
        gain, bias = _evaluate_policy(kernel, rewards, tuple(policy))
        gain_values = kernel.P @ gain  # (S, A)
        bias_values = rewards + kernel.P @ bias  # (S, A)
        new_policy = policy.copy()
        for k in range(S):
            g_max = gain_values[k].max()
            if gain_values[k, policy[k]] < g_max - tol:
                new_policy[k] = int(np.argmax(gain_values[k]))
                continue
            candidates = np.flatnonzero(gain_values[k] >= g_max - tol)
            b_max = bias_values[k, candidates].max()
            if bias_values[k, policy[k]] < b_max - tol or policy[k] not in candidates:
                new_policy[k] = int(candidates[np.argmax(bias_values[k, candidates])])
        if np.array_equal(new_policy, policy):
            return tuple(int(a) for a in policy)
        policy = new_policy
    raise NumericalError("policy iteration did not converge")


def mdp_policy_search(
    rhat: np.ndarray,
    kernel: TransitionKernel,
    rho: np.ndarray,
    mode: str = "auto",
    tie_seed: int | None = None,
) -> Policy:
    """Policy maximising the occupancy-weighted estimated reward.

    ``enumerate`` is exhaustive and serves as the reference oracle;
    ``iterate`` runs average-reward policy iteration and must agree with it.
    Enumeration ties break lexicographically unless a tie_seed is given, in
    which case the winner is drawn uniformly among the tied policies.
    """
    S, A = rhat.shape
    if mode == "auto":
        mode = "enumerate" if A**S <= 10_000 else "iterate"
    if mode == "enumerate":
        first, _, tied = _search_enumerate(kernel, rhat, rho)
        if tie_seed is not None and len(tied) > 1:
            return tied[substream(tie_seed, "policy-tie").integers(len(tied))]
        return first
    if mode == "iterate":
        return _search_iterate(kernel, rhat)
    raise ValidationError(f"unknown policy search mode: {mode}")


def _optimal_policy(
    v: Instance, kernel: TransitionKernel
) -> tuple[Policy, float]:
    rewards = v.rewards()
    # Occupancies carry ~1e-10 iteration residue, so uniqueness is judged
    # at a matching tolerance rather than exact equality.
    atol = 1e-9 * max(1.0, float(np.max(np.abs(rewards))))
    best, value, tied = _search_enumerate(kernel, rewards, v.rho, tie_atol=atol)
    if len(tied) > 1:
        raise ValidationError(
            f"optimal policy is not unique: {len(tied)} policies attain {value}"
        )
    return best, value


def mdp_regret(v: Instance, kernel: TransitionKernel, policy: Policy) -> float:
    """Occupancy-weighted reward shortfall of a policy against the optimum."""
    _, best_value = _optimal_policy(v, kernel)
    value = policy_objective(kernel, v.rewards(), tuple(policy), v.rho)
    return max(best_value - value, 0.0)


def rl_low_mdp(
    data: PreferenceDataset,
    features: np.ndarray,
    L: float,
    kernel: TransitionKernel,
    rho: np.ndarray,
    tie_seed: int = 0,
    mode: str = "auto",
) -> Policy:
    """Estimate relative rewards from comparisons, then search for a policy."""
    report = rl_low(data, features, L, tie_seed=tie_seed)
    return mdp_policy_search(report.rhat, kernel, rho, mode=mode, tie_seed=tie_seed)


def mdp_hardness(
    v: Instance, kernel: TransitionKernel, rho: np.ndarray
) -> tuple[float, dict[Policy, float]]:
    """Hardness over alternative policies: worst disagreement-pair variance
    proxy divided by the squared objective gap."""
    table = build_weight_table(v.schedule, v.features)
    rewards = v.rewards()
    pi_star, best_value = _optimal_policy(v, kernel)
    S, A = rewards.shape

    gamma_mdp: dict[Policy, float] = {}
    H = 0.0
    for policy in _enumerate_policies(S, A):
        if policy == pi_star:
            continue
        gap = best_value - policy_objective(kernel, rewards, policy, rho)
        disagreements = [k for k in range(S) if policy[k] != pi_star[k]]
        gamma = max(
            table.entry((k, policy[k], pi_star[k]), v.features).gamma
            for k in disagreements
        )
        gamma_mdp[policy] = gamma
        H = max(H, gamma / gap**2)
    return H, gamma_mdp
