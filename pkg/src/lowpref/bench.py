"""Monte Carlo benchmark harness: seeded experiment loops and artifact output.

A run sweeps (algorithm x sample size x repetition).  Every cell derives
its randomness from the master seed with splittable labels; the dataset
stream depends only on (n, repetition) so that different algorithms face
identical data and paired comparisons are meaningful, while tie-breaking
and noise streams are additionally keyed by the algorithm name.

Identical configurations reproduce identical tables, except for the
recorded wall-clock column, which is measurement, not output.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .baseline import mle_fit, mle_select
from .errors import InconsistencyError, ValidationError
from .estimator import (
    _clip_array,
    build_weight_table,
    select_best_actions,
)
from .instances import (
    GeneratorConfig,
    Instance,
    consistency_witness,
    load_instance,
    make_paper_instance,
    sample_dataset,
    suboptimality_gaps,
)
from .mdp import TransitionKernel, mdp_regret, rl_low_mdp, validate_kernel
from .privacy import PrivacyParams, _draw_noise
from .rng import derive_seed, substream

ALGORITHMS = ("rl_low", "dp_rl_low", "mle", "rl_low_mdp")


@dataclass(frozen=True)
class ExperimentConfig:
    instance_path: str | None = None
    generator: GeneratorConfig | None = None
    n_grid: tuple[int, ...] = (50, 100, 150, 200, 250, 300, 350, 400)
    repetitions: int = 200
    algorithms: tuple[str, ...] = ("rl_low",)
    privacy: PrivacyParams | None = None
    kernel_path: str | None = None
    master_seed: int = 0
    out_dir: str = "results"

    def __post_init__(self):
        if (self.instance_path is None) == (self.generator is None):
            raise ValidationError(
                "config needs exactly one instance source (path or generator)"
            )
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValidationError("n_grid must be strictly increasing positive ints")
        object.__setattr__(self, "n_grid", grid)
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        algos = tuple(self.algorithms)
        unknown = set(algos) - set(ALGORITHMS)
        if unknown or not algos:
            raise ValidationError(f"unknown algorithms: {sorted(unknown)}")
        object.__setattr__(self, "algorithms", algos)
        if "dp_rl_low" in algos and self.privacy is None:
            raise ValidationError("dp_rl_low requires privacy parameters")
        if "rl_low_mdp" in algos and self.kernel_path is None:
            raise ValidationError("rl_low_mdp requires a kernel path")


@dataclass(frozen=True)
class ResultRow:
    algo: str
    n: int
    rep: int
    seed: int
    regret: float
    wall_ms: float


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        lines = ["algo,n,rep,seed,regret,wall_ms"]
        for r in self.rows:
            lines.append(
                f"{r.algo},{r.n},{r.rep},{r.seed},{r.regret!r},{r.wall_ms!r}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ResultTable":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != "algo,n,rep,seed,regret,wall_ms":
            raise ValidationError(f"unexpected results header in {path}")
        rows = []
        for line in lines[1:]:
            algo, n, rep, seed, regret, wall = line.split(",")
            rows.append(
                ResultRow(algo, int(n), int(rep), int(seed), float(regret), float(wall))
            )
        return cls(rows=rows)


def simple_regret(v: Instance, selections) -> float:
    """State-law-weighted reward shortfall of the selected actions."""
    gaps = suboptimality_gaps(v)
    idx = np.asarray(selections, dtype=np.int64)
    return float(np.sum(v.rho * gaps[np.arange(v.num_states), idx]))


def config_from_dict(payload: dict) -> ExperimentConfig:
    source = payload.get("instance", {})
    generator = None
    if "generator" in source:
        g = source["generator"]
        generator = GeneratorConfig(
            num_states=int(g["S"]),
            num_actions=int(g["A"]),
            dim=int(g["d"]),
            seed=int(g["seed"]),
            gap_step=float(g.get("gap_step", 0.05)),
        )
    privacy = None
    if payload.get("privacy") is not None:
        privacy = PrivacyParams(
            epsilon=float(payload["privacy"]["epsilon"]),
            delta=float(payload["privacy"]["delta"]),
        )
    return ExperimentConfig(
        instance_path=source.get("path"),
        generator=generator,
        n_grid=tuple(payload.get("n_grid", (50, 100, 150, 200, 250, 300, 350, 400))),
        repetitions=int(payload.get("repetitions", 200)),
        algorithms=tuple(payload.get("algorithms", ("rl_low",))),
        privacy=privacy,
        kernel_path=payload.get("kernel"),
        master_seed=int(payload.get("master_seed", 0)),
        out_dir=payload.get("out_dir", "results"),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def _resolve_instance(cfg: ExperimentConfig) -> Instance:
    if cfg.instance_path is not None:
        return load_instance(cfg.instance_path)
    return make_paper_instance(cfg.generator)


def _load_kernel(cfg: ExperimentConfig, v: Instance) -> TransitionKernel | None:
    if cfg.kernel_path is None:
        return None
    payload = json.loads(Path(cfg.kernel_path).read_text())
    return validate_kernel(np.asarray(payload["P"]), (v.num_states, v.num_actions))


class _Prepared:
    """Per-(instance, n) precomputation for the Monte Carlo loop.

    The empirical schedule of a sampled dataset depends only on the
    instance and n, because per-pair record counts are deterministic
    ceilings; only the winners vary between repetitions.  Everything that
    reads the schedule alone (consistency witness, span basis, design
    matrix, target coordinates) is therefore hoisted out of the repetition
    loop.  The per-repetition arithmetic mirrors the public pipeline
    operation for operation, so cell results are bit-identical to calling
    it directly.
    """

    def __init__(self, v: Instance, n: int):
        self.v = v
        self.n = n
        triples = []
        counts = []
        probs = []
        rewards = v.rewards()
        for k, i, j in v.observed_pairs():
            count = math.ceil(v.schedule[k, i, j] * n - 1e-9)
            if count <= 0:
                continue
            triples.append((int(k), int(i), int(j)))
            counts.append(count)
            probs.append(1.0 / (1.0 + math.exp(rewards[k, j] - rewards[k, i])))
        self.triples = triples
        self.counts = np.asarray(counts, dtype=np.float64)
        self.probs = probs

        schedule = np.zeros_like(v.schedule)
        for (k, i, j), count in zip(triples, counts):
            schedule[k, i, j] = count / n
        witness = consistency_witness(v.features, schedule)
        if witness is not None:
            raise InconsistencyError(
                f"dataset schedule is inconsistent; witness pair {witness}",
                witness=witness,
            )
        self.table = build_weight_table(schedule, v.features)
        self.masses = self.table.masses
        self.target_coords = self.table.basis.coords(v.features - v.features[:, :1])
        self.gaps = suboptimality_gaps(v)

    def draw_wins(self, data_seed: int) -> np.ndarray:
        """First-action win counts per pair, matching sample_dataset's draws."""
        wins = np.empty(len(self.triples))
        for idx, ((k, i, j), p) in enumerate(zip(self.triples, self.probs)):
            draws = substream(data_seed, "sample", k, i, j).random(int(self.counts[idx]))
            wins[idx] = np.count_nonzero(draws < p)
        return wins

    def _finish(self, log_odds: np.ndarray, tie_seed: int) -> float:
        t = self.table.diff_coords.T @ (self.masses * log_odds)
        rhat = self.target_coords @ self.table.solve(t)
        selections, _ = select_best_actions(rhat, tie_seed)
        return float(
            np.sum(self.v.rho * self.gaps[np.arange(self.v.num_states), selections])
        )

    def run_plain(self, data_seed: int, tie_seed: int) -> float:
        rates = _clip_array(self.draw_wins(data_seed) / self.counts, self.v.reward_bound)
        return self._finish(np.log(rates) - np.log1p(-rates), tie_seed)

    def run_private(
        self, data_seed: int, noise_seed: int, tie_seed: int, privacy: PrivacyParams
    ) -> float:
        stds = np.sqrt(2 * math.log(1.25 / privacy.delta)) / (
            privacy.epsilon * self.n * self.masses
        )
        noisy = self.draw_wins(data_seed) / self.counts + _draw_noise(
            noise_seed, np.asarray(self.triples), stds
        )
        rates = _clip_array(noisy, self.v.reward_bound)
        return self._finish(np.log(rates) - np.log1p(-rates), tie_seed)


def _run_cell(v, kernel, cfg, prepared, algo, n, rep):
    data_seed = derive_seed(cfg.master_seed, "data", n, rep)
    tie_seed = derive_seed(cfg.master_seed, algo, n, rep, "tie")
    start = time.perf_counter()
    if algo == "rl_low":
        regret = prepared[n].run_plain(data_seed, tie_seed)
    elif algo == "dp_rl_low":
        noise_seed = derive_seed(cfg.master_seed, algo, n, rep, "noise")
        regret = prepared[n].run_private(data_seed, noise_seed, tie_seed, cfg.privacy)
    elif algo == "mle":
        data = sample_dataset(v, n, data_seed)
        fit = mle_fit(data, v.features, v.reward_bound)
        regret = simple_regret(v, mle_select(fit, v.features, tie_seed))
    else:  # rl_low_mdp
        data = sample_dataset(v, n, data_seed)
        policy = rl_low_mdp(
            data, v.features, v.reward_bound, kernel, v.rho, tie_seed
        )
        regret = mdp_regret(v, kernel, policy)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return ResultRow(algo=algo, n=n, rep=rep, seed=data_seed, regret=regret,
                     wall_ms=wall_ms)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Execute the full sweep; the row order is (algorithm, n, repetition)."""
    v = _resolve_instance(cfg)
    kernel = _load_kernel(cfg, v)
    if "rl_low_mdp" in cfg.algorithms and kernel is None:
        raise ValidationError("rl_low_mdp requires a kernel")
    prepared = {n: _Prepared(v, n) for n in cfg.n_grid}
    cells = [
        (algo, n, rep)
        for algo in cfg.algorithms
        for n in cfg.n_grid
        for rep in range(cfg.repetitions)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(lambda c: _run_cell(v, kernel, cfg, prepared, *c), cells)
            )
    else:
        rows = [_run_cell(v, kernel, cfg, prepared, *cell) for cell in cells]
    return ResultTable(rows=rows)


def summarize(table: ResultTable) -> list[dict]:
    """Sample mean / std (n-1 divisor) / standard error per (algo, n)."""
    if not table.rows:
        raise ValidationError("cannot summarize an empty table")
    groups: dict[tuple[str, int], list[float]] = {}
    order: list[tuple[str, int]] = []
    for row in table.rows:
        key = (row.algo, row.n)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row.regret)
    summary = []
    for algo, n in order:
        values = np.asarray(groups[(algo, n)])
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        summary.append(
            {
                "algo": algo,
                "n": n,
                "mean": float(values.mean()),
                "std": std,
                "stderr": std / math.sqrt(values.size),
                "reps": int(values.size),
            }
        )
    return summary


def _svg_plot(summary: list[dict]) -> str:
    """Static log-scale regret curves, one polyline per algorithm with a
    +-1 std band."""
    width, height = 640, 420
    left, right, top, bottom = 70, 20, 20, 50
    algos = []
    for entry in summary:
        if entry["algo"] not in algos:
            algos.append(entry["algo"])
    ns = sorted({entry["n"] for entry in summary})
    positive = [
        max(entry["mean"] - entry["std"], 0.0) for entry in summary
    ] + [entry["mean"] for entry in summary]
    positive = [p for p in positive if p > 0]
    floor = min(positive) / 10 if positive else 1e-12
    top_val = max(
        [entry["mean"] + entry["std"] for entry in summary] + [floor * 10]
    )
    lo_log, hi_log = math.floor(math.log10(floor)), math.ceil(math.log10(top_val))
    if hi_log == lo_log:
        hi_log += 1

    def sx(n):
        span = (ns[-1] - ns[0]) or 1
        return left + (n - ns[0]) / span * (width - left - right)

    def sy(value):
        logv = math.log10(max(value, floor))
        return top + (hi_log - logv) / (hi_log - lo_log) * (height - top - bottom)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for exp in range(lo_log, hi_log + 1):
        y = sy(10.0**exp)
        parts.append(
            f'<line x1="{left}" y1="{y:.2f}" x2="{width - right}" y2="{y:.2f}" '
            f'stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="11">1e{exp}</text>'
        )
    for n in ns:
        x = sx(n)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{height - bottom}" '
            f'stroke="#eeeeee"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{height - bottom + 16}" text-anchor="middle" '
            f'font-size="11">{n}</text>'
        )
    parts.append(
        f'<text x="{(left + width - right) / 2:.2f}" y="{height - 12}" '
        f'text-anchor="middle" font-size="12">sample size n</text>'
    )
    for idx, algo in enumerate(algos):
        color = palette[idx % len(palette)]
        entries = sorted(
            (e for e in summary if e["algo"] == algo), key=lambda e: e["n"]
        )
        upper = [(sx(e["n"]), sy(e["mean"] + e["std"])) for e in entries]
        lower = [(sx(e["n"]), sy(max(e["mean"] - e["std"], floor))) for e in entries]
        band = " ".join(f"{x:.2f},{y:.2f}" for x, y in upper + lower[::-1])
        parts.append(
            f'<polygon points="{band}" fill="{color}" fill-opacity="0.15" '
            f'stroke="none"/>'
        )
        line = " ".join(f'{sx(e["n"]):.2f},{sy(e["mean"]):.2f}' for e in entries)
        parts.append(
            f'<polyline points="{line}" fill="none" stroke="{color}" '
            f'stroke-width="1.8"/>'
        )
        parts.append(
            f'<text x="{width - right - 4}" y="{top + 16 + 14 * idx}" '
            f'text-anchor="end" font-size="12" fill="{color}">{algo}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_outputs(summary: list[dict], table: ResultTable, cfg: ExperimentConfig) -> dict:
    """Write results.csv, summary.json and regret.svg under the output dir."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "results.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "regret.svg").write_text(_svg_plot(summary))
    return {
        "results": str(out / "results.csv"),
        "summary": str(out / "summary.json"),
        "plot": str(out / "regret.svg"),
    }
