"""Instance-hardness quantities and the lower-bound adversary construction.

For each suboptimal (state, action) the weights targeting it against the
state's best action induce four coefficients:

  gamma        = sum(w^2 / N)        variance proxy of the estimate
  gamma_tilde  = sum(|w| / sqrt(N))  bias envelope coefficient
  gamma_dp     = sum((w / N)^2)      extra variance under label privacy
  gamma_tilde_dp = sum(|w| / N)      extra bias under label privacy

The hardness of an instance is the largest gamma / gap^2 ratio; the pair
attaining it seeds the adversary: among all alternative parameters shifted
by ``eta`` along a direction ``z`` (in the observed span), the closest one
in the mass-weighted squared relative-reward discrepancy has closed form
``theta' = theta + (eta / |z|^2_{V^-1}) * V^{-1} z`` and discrepancy
``eta^2 / |z|^2_{V^-1}``.  That discrepancy brackets the KL divergence
between the label laws of the two instances up to factors exponential in
the maximum absolute reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InconsistencyError, NumericalError, ValidationError
from .estimator import build_weight_table
from .instances import (
    Instance,
    check_consistency,
    make_instance,
    suboptimality_gaps,
)
from .privacy import PrivacyParams


@dataclass(frozen=True)
class HardnessReport:
    """Per-target coefficients and the aggregated hardness values."""

    gamma: dict[tuple[int, int], float]
    gamma_tilde: dict[tuple[int, int], float]
    gamma_dp: dict[tuple[int, int], float]
    gamma_tilde_dp: dict[tuple[int, int], float]
    H: float
    H_dp: float | None
    q_member: bool
    argmax: tuple[int, int]

    def to_json_dict(self) -> dict:
        def keyed(mapping):
            return {f"{k},{i}": value for (k, i), value in mapping.items()}

        return {
            "gamma": keyed(self.gamma),
            "gamma_tilde": keyed(self.gamma_tilde),
            "gamma_dp": keyed(self.gamma_dp),
            "gamma_tilde_dp": keyed(self.gamma_tilde_dp),
            "H": self.H,
            "H_dp": self.H_dp,
            "q_member": self.q_member,
            "argmax": list(self.argmax),
        }


@dataclass(frozen=True)
class AdversaryPair:
    """A base instance and its closest alternative under the shift constraint."""

    base: Instance
    alt: Instance
    dtilde_value: float
    eta: float
    z: np.ndarray


def _require_consistent(v: Instance) -> None:
    consistent, witness = check_consistency(v)
    if not consistent:
        raise InconsistencyError(
            f"instance is inconsistent; witness pair {witness}", witness=witness
        )


def hardness(v: Instance, privacy: PrivacyParams | None = None) -> HardnessReport:
    """Compute all per-target coefficients and the hardness maxima."""
    _require_consistent(v)
    table = build_weight_table(v.schedule, v.features)
    gaps = suboptimality_gaps(v)
    best = v.best_actions()

    gamma: dict[tuple[int, int], float] = {}
    gamma_tilde: dict[tuple[int, int], float] = {}
    gamma_dp: dict[tuple[int, int], float] = {}
    gamma_tilde_dp: dict[tuple[int, int], float] = {}
    ratios: dict[tuple[int, int], float] = {}
    for k in range(v.num_states):
        for i in range(v.num_actions):
            if i == best[k]:
                continue
            entry = table.entry((k, i, int(best[k])), v.features)
            w = entry.weights
            gamma[(k, i)] = entry.gamma
            gamma_tilde[(k, i)] = float(np.sum(np.abs(w) / np.sqrt(table.masses)))
            gamma_dp[(k, i)] = float(np.sum((w / table.masses) ** 2))
            gamma_tilde_dp[(k, i)] = float(np.sum(np.abs(w) / table.masses))
            ratios[(k, i)] = entry.gamma / gaps[k, i] ** 2

    if not ratios:
        raise ValidationError("instance has no suboptimal actions")
    argmax = max(ratios, key=ratios.get)
    H = ratios[argmax]
    competitors = [r for key, r in ratios.items() if key != argmax]
    q_member = all(H >= 4 * r for r in competitors)

    H_dp = None
    if privacy is not None:
        H_dp = max(
            math.sqrt(math.log(1.25 / privacy.delta) * gamma_dp[key])
            / (math.sqrt(privacy.epsilon) * gaps[key])
            for key in gamma_dp
        )
    return HardnessReport(
        gamma=gamma,
        gamma_tilde=gamma_tilde,
        gamma_dp=gamma_dp,
        gamma_tilde_dp=gamma_tilde_dp,
        H=float(H),
        H_dp=H_dp,
        q_member=q_member,
        argmax=argmax,
    )


def q_membership(v: Instance) -> bool:
    """Whether the hardest ratio dominates every competitor by a factor 4."""
    return hardness(v).q_member


def _same_structure(v: Instance, other: Instance) -> bool:
    return (
        v.num_states == other.num_states
        and v.num_actions == other.num_actions
        and v.dim == other.dim
        and np.array_equal(v.features, other.features)
        and np.array_equal(v.rho, other.rho)
        and np.array_equal(v.schedule, other.schedule)
    )


def d_tilde(v: Instance, v_alt: Instance) -> float:
    """Mass-weighted squared relative-reward discrepancy between instances."""
    if not _same_structure(v, v_alt):
        raise ValidationError("instances differ in more than the parameter vector")
    pairs = v.observed_pairs()
    diffs = v.features[pairs[:, 0], pairs[:, 1]] - v.features[pairs[:, 0], pairs[:, 2]]
    masses = v.schedule[pairs[:, 0], pairs[:, 1], pairs[:, 2]]
    gap = diffs @ (v.theta - v_alt.theta)
    return float(np.sum(masses * gap**2))


def _bernoulli_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return p * (np.log(p) - np.log(q)) + (1 - p) * (np.log1p(-p) - np.log1p(-q))


def kl_bracket(v: Instance, v_alt: Instance, n: int) -> tuple[float, float, float]:
    """Exact label-law KL divergence and its discrepancy-based bracket.

    Returns (exact, lower, upper) where exact expands the joint divergence
    into per-pair Bernoulli divergences and the bracket scales the
    discrepancy by ``2n exp(-4 R_max)`` and ``2n exp(2 R_max)``.
    """
    dt = d_tilde(v, v_alt)
    pairs = v.observed_pairs()
    diffs = v.features[pairs[:, 0], pairs[:, 1]] - v.features[pairs[:, 0], pairs[:, 2]]
    masses = v.schedule[pairs[:, 0], pairs[:, 1], pairs[:, 2]]
    p = 1.0 / (1.0 + np.exp(-(diffs @ v.theta)))
    q = 1.0 / (1.0 + np.exp(-(diffs @ v_alt.theta)))
    exact = float(n * np.sum(masses * _bernoulli_kl(p, q)))
    r_max = max(
        float(np.max(np.abs(v.rewards()))), float(np.max(np.abs(v_alt.rewards())))
    )
    lower = 2 * n * math.exp(-4 * r_max) * dt
    upper = 2 * n * math.exp(2 * r_max) * dt
    if not (lower * (1 - 1e-12) - 1e-15 <= exact <= upper * (1 + 1e-12) + 1e-15):
        raise NumericalError(
            f"KL bracket violated: {lower} <= {exact} <= {upper} fails"
        )
    return exact, lower, upper


def alt_minimizer(v: Instance, z: np.ndarray, eta: float) -> AdversaryPair:
    """Closest alternative parameter satisfying ``<z, theta' - theta> = eta``.

    The shift solves an equality-constrained quadratic: it moves along the
    lifted ``V^{-1}`` image of ``z`` just far enough to meet the constraint,
    which also minimises the discrepancy at value ``eta^2 / |z|^2_{V^-1}``.
    Components orthogonal to the observed span are free; this picks zero.
    """
    _require_consistent(v)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (v.dim,):
        raise ValidationError(f"z must be a length-{v.dim} vector")
    table = build_weight_table(v.schedule, v.features)
    coords = table.basis.coords(z)
    residual = z - table.basis.lift(coords)
    if np.linalg.norm(residual) > 1e-9 * (1 + np.linalg.norm(z)):
        raise ValidationError("z lies outside the span of observed differences")
    if np.linalg.norm(coords) == 0:
        if eta != 0:
            raise ValidationError("constraint is infeasible for z = 0")
        return AdversaryPair(base=v, alt=v, dtilde_value=0.0, eta=0.0, z=z)
    solved = table.solve(coords)
    denom = float(coords @ solved)
    theta_alt = v.theta + (eta / denom) * table.basis.lift(solved)
    alt_rewards = v.features @ theta_alt
    bound = max(v.reward_bound, float(np.max(np.abs(alt_rewards))))
    alt = make_instance(v.features, theta_alt, v.rho, v.schedule, bound)
    return AdversaryPair(
        base=v, alt=alt, dtilde_value=eta**2 / denom, eta=float(eta), z=z
    )


def lower_bound_adversary(v: Instance) -> AdversaryPair:
    """Adversary at the hardness argmax: shift by twice the gap along its pair.

    Checks the construction's promised geometry: best actions are untouched
    in every other state, the targeted suboptimal action becomes optimal in
    its state, and for instances whose top ratio 4-dominates the rest the
    alternative's hardness stays within [H, 8H].  Violations raise rather
    than pass silently.
    """
    report = hardness(v)
    k_bar, i_bar = report.argmax
    best = v.best_actions()
    gaps = suboptimality_gaps(v)
    z = v.features[k_bar, i_bar] - v.features[k_bar, int(best[k_bar])]
    pair = alt_minimizer(v, z, 2 * float(gaps[k_bar, i_bar]))

    alt_best = pair.alt.best_actions()
    problems = []
    for k in range(v.num_states):
        if k == k_bar:
            continue
        if alt_best[k] != best[k]:
            problems.append(f"best action changed in untouched state {k}")
    if alt_best[k_bar] != i_bar:
        problems.append(
            f"target action {i_bar} is not optimal in state {k_bar} "
            f"under the alternative"
        )
    if report.q_member and not problems:
        alt_report = hardness(pair.alt)
        H, H_alt = report.H, alt_report.H
        if not (H * (1 - 1e-9) <= H_alt <= 8 * H * (1 + 1e-9)):
            problems.append(f"hardness bracket violated: {H} <= {H_alt} <= {8 * H}")
    if problems:
        raise NumericalError("adversary construction failed: " + "; ".join(problems))
    return pair


def regret_envelopes(
    v: Instance, n_grid, privacy: PrivacyParams | None = None
) -> list[dict]:
    """Unit-constant worst-case envelope values over a sample-size grid.

    The static part is ``sum(rho * (sqrt(gamma) + gamma_tilde)) / sqrt(n)``;
    with privacy a ``sum(rho * (sqrt(gamma_dp) + gamma_tilde_dp)) *
    sqrt(ln(1.25/delta)) / (eps * n)`` term is added.  Only shapes are
    meaningful: the universal constants are unspecified, so consumers fit a
    single scalar per curve instead of reading absolute values.
    """
    report = hardness(v, privacy)
    static_sum = sum(
        float(v.rho[k]) * (math.sqrt(report.gamma[(k, i)]) + report.gamma_tilde[(k, i)])
        for (k, i) in report.gamma
    )
    dp_sum = None
    if privacy is not None:
        dp_sum = sum(
            float(v.rho[k])
            * (math.sqrt(report.gamma_dp[(k, i)]) + report.gamma_tilde_dp[(k, i)])
            for (k, i) in report.gamma_dp
        ) * math.sqrt(math.log(1.25 / privacy.delta))
    rows = []
    for n in n_grid:
        row = {"n": int(n), "static": static_sum / math.sqrt(n)}
        if dp_sum is not None:
            row["dp_term"] = dp_sum / (privacy.epsilon * n)
            row["total"] = row["static"] + row["dp_term"]
        rows.append(row)
    return rows
