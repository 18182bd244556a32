"""Random game sampling and the Monte Carlo / trajectory / heterogeneity / dense studies.

Every sample draws from its own RNG stream derived from ``(master_seed, index)``,
so results do not depend on worker count or scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from lqgap.auxiliary import build_auxiliary, gain_gap
from lqgap.fbne import rollout_feedback, solve_fbne
from lqgap.game_model import AgentSpec, LQGame, assemble_stacked, is_psd
from lqgap.io import write_csv
from lqgap.linalg import SingularStageMatrix, norm2
from lqgap.olne import rollout_openloop, solve_olne

FIXED_A = ((0.0, 1.0), (-1.0, -1.0))
FIXED_B = ((0.0,), (1.0,))

MODES = ("fixed_dynamics", "random_dynamics", "dense")
HETEROGENEITY = ("none", "high_A", "low_A", "high_B", "low_B")

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int, stream: int = 0) -> int:
    base = splitmix64((master_seed & _MASK) ^ splitmix64(stream & _MASK))
    return splitmix64(base ^ (index & _MASK))


class ConfigError(ValueError):
    pass


class SamplingRejected(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class SamplerConfig:
    n_agents: int = 2
    state_dims: tuple[int, ...] = (2, 2)
    control_dims: tuple[int, ...] = (1, 1)
    horizon: int = 10
    sample_count: int = 10000
    master_seed: int = 0
    mode: str = "fixed_dynamics"
    base_game: LQGame | None = None
    radius: float = 0.0
    dynamics_heterogeneity: str = "none"
    # None disables tier rejection: the family is sampled unconstrained.
    het_threshold: float | None = None
    diag_range: tuple[float, float] = (1.0, 2.0)
    offdiag_range: tuple[float, float] = (0.0, 1.5)
    R_values: tuple[float, ...] = (3.0, 2.0)
    max_retries: int = 100
    het_max_retries: int = 1000
    stream: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ConfigError("sample_count must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.dynamics_heterogeneity not in HETEROGENEITY:
            raise ConfigError(f"unknown dynamics_heterogeneity {self.dynamics_heterogeneity!r}")
        if self.mode == "dense":
            if self.base_game is None:
                raise ConfigError("dense mode needs a base game")
            # radius 0 is accepted as the degenerate case (every sample is the base game)
            if self.radius < 0:
                raise ConfigError("radius must be nonnegative")
        else:
            if not (len(self.state_dims) == len(self.control_dims) == self.n_agents):
                raise ConfigError("state_dims/control_dims must have one entry per agent")
            if len(self.R_values) != self.n_agents:
                raise ConfigError("R_values must have one entry per agent")
        if self.mode == "fixed_dynamics" and (set(self.state_dims) != {2} or set(self.control_dims) != {1}):
            raise ConfigError("fixed_dynamics mode uses 2-state, 1-control agents")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")


@dataclass(frozen=True)
class MonteCarloRecord:
    sample_index: int
    derived_seed: int
    status: str  # "ok" | "rejected:<reason>" | "solver_failed:<stage>"
    delta_Q: float = math.nan
    delta_K: tuple[float, ...] = ()
    het_A: float = math.nan
    het_B: float = math.nan
    game: LQGame | None = field(default=None, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def csv_row(self, horizon: int) -> list:
        dK = list(self.delta_K) if self.delta_K else [math.nan] * horizon
        return [self.sample_index, self.derived_seed, self.status, self.delta_Q,
                self.het_A, self.het_B, *dK]


def record_header(horizon: int) -> list[str]:
    return ["sample_index", "seed", "status", "delta_Q", "het_A", "het_B",
            *[f"delta_K_t{t}" for t in range(1, horizon + 1)]]


def heterogeneity(mats: Sequence[np.ndarray]) -> float:
    """max_i ||M_i - avg(M)||_2; NaN when the agents' matrices differ in shape."""
    if len({m.shape for m in mats}) != 1:
        return math.nan
    avg = sum(mats) / len(mats)
    return max(norm2(m - avg) for m in mats)


def _sample_cost(rng: np.random.Generator, n: int, cfg: SamplerConfig) -> np.ndarray:
    for _ in range(cfg.max_retries):
        Q = np.triu(rng.uniform(*cfg.offdiag_range, size=(n, n)), 1)
        Q = Q + Q.T
        Q[np.diag_indices(n)] = rng.uniform(*cfg.diag_range, size=n)
        if is_psd(Q):
            return Q
    raise SamplingRejected("Q_not_psd")


def _sample_dense_cost(rng: np.random.Generator, base: np.ndarray, radius: float,
                       retries: int) -> np.ndarray:
    n = base.shape[0]
    for _ in range(retries):
        D = np.triu(rng.uniform(-radius, radius, size=(n, n)))
        Q = base + D + np.triu(D, 1).T
        if is_psd(Q):
            return Q
    raise SamplingRejected("Q_not_psd")


def _sample_dynamics(rng: np.random.Generator, cfg: SamplerConfig) -> tuple[AgentSpec, ...]:
    het = cfg.dynamics_heterogeneity
    if het == "none":
        return tuple(AgentSpec(rng.uniform(0, 1, (ni, ni)), rng.uniform(0, 1, (ni, mi)))
                     for ni, mi in zip(cfg.state_dims, cfg.control_dims))
    vary = het[-1]
    for _ in range(cfg.het_max_retries):
        agents = []
        for ni, mi in zip(cfg.state_dims, cfg.control_dims):
            if vary == "A":
                A = rng.uniform(0, 1, (ni, ni))
                B = np.array(FIXED_B) if (ni, mi) == (2, 1) else rng.uniform(0, 1, (ni, mi))
            else:
                A = np.array(FIXED_A) if ni == 2 else rng.uniform(0, 1, (ni, ni))
                B = rng.uniform(0, 1, (ni, mi))
            agents.append(AgentSpec(A, B))
        if cfg.het_threshold is None:
            return tuple(agents)
        metric = heterogeneity([a.A if vary == "A" else a.B for a in agents])
        if het.startswith("high") and metric > cfg.het_threshold:
            return tuple(agents)
        if het.startswith("low") and metric <= cfg.het_threshold:
            return tuple(agents)
    raise SamplingRejected(f"{het}_budget_exhausted")


def sample_game(config: SamplerConfig, index: int) -> tuple[LQGame, int]:
    """Deterministic game for ``(config.master_seed, index)``; returns (game, derived_seed).

    Raises SamplingRejected when a retry budget runs out.
    """
    seed = derive_seed(config.master_seed, index, config.stream)
    rng = np.random.default_rng(seed)
    if config.mode == "dense":
        base = config.base_game
        Q = tuple(_sample_dense_cost(rng, q, config.radius, config.max_retries) for q in base.Q)
        return base.with_costs(Q, label=None), seed
    if config.mode == "fixed_dynamics":
        agents = tuple(AgentSpec(FIXED_A, FIXED_B) for _ in range(config.n_agents))
    else:
        agents = _sample_dynamics(rng, config)
    n = sum(config.state_dims)
    Q = tuple(_sample_cost(rng, n, config) for _ in range(config.n_agents))
    R = tuple(v * np.eye(mi) for v, mi in zip(config.R_values, config.control_dims))
    return LQGame(agents=agents, horizon=config.horizon, Q=Q, R=R), seed


def evaluate_game(game: LQGame) -> tuple[float, np.ndarray]:
    """(epsilon, per-stage ||K~_t - K_t||_2) for one game."""
    sys = assemble_stacked(game)
    aux = build_auxiliary(game)
    eps = max(norm2(qa - q) for q, qa in zip(game.Q, aux.Q))
    dK = gain_gap(solve_fbne(aux, sys).K, solve_fbne(game, sys).K)
    return eps, dK


def _one_record(config: SamplerConfig, index: int, keep_game: bool = False) -> MonteCarloRecord:
    seed = derive_seed(config.master_seed, index, config.stream)
    try:
        game, seed = sample_game(config, index)
    except SamplingRejected as exc:
        return MonteCarloRecord(index, seed, f"rejected:{exc.reason}")
    het_A = heterogeneity([a.A for a in game.agents])
    het_B = heterogeneity([a.B for a in game.agents])
    kept = game if keep_game else None
    try:
        eps, dK = evaluate_game(game)
    except SingularStageMatrix as exc:
        return MonteCarloRecord(index, seed, f"solver_failed:{exc.stage}", het_A=het_A,
                                het_B=het_B, game=kept)
    return MonteCarloRecord(index, seed, "ok", float(eps), tuple(float(v) for v in dK),
                            het_A, het_B, game=kept)


def _chunk(config: SamplerConfig, indices: range) -> list[MonteCarloRecord]:
    return [_one_record(config, i) for i in indices]


def run_monte_carlo(config: SamplerConfig, threads: int = 1) -> list[MonteCarloRecord]:
    """One record per sample index, sorted by index; failures are kept, not dropped."""
    count = config.sample_count
    if threads <= 1 or count < 64:
        records = _chunk(config, range(count))
    else:
        n_chunks = min(count, threads * 8)
        bounds = np.linspace(0, count, n_chunks + 1).astype(int)
        ranges = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = [r for part in pool.map(_chunk, [config] * len(ranges), ranges) for r in part]
    records.sort(key=lambda r: r.sample_index)
    return records


def write_records(path, records: Sequence[MonteCarloRecord], horizon: int) -> None:
    write_csv(path, record_header(horizon), (r.csv_row(horizon) for r in records))


# --- trajectory comparison --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryComparison:
    x_fb: np.ndarray  # (T+1, n)
    x_ol: np.ndarray  # (T+1, n)
    pct: np.ndarray  # (T+1,)

    @property
    def max_pct(self) -> float:
        return float(self.pct.max())

    def rows(self):
        for k in range(self.pct.shape[0]):
            yield [k + 1, *self.x_fb[k], *self.x_ol[k], self.pct[k]]

    def header(self) -> list[str]:
        n = self.x_fb.shape[1]
        return (["t"] + [f"x_fb_{j}" for j in range(1, n + 1)]
                + [f"x_ol_{j}" for j in range(1, n + 1)] + ["pct_diff"])


def compare_trajectories(game: LQGame, x1=None) -> TrajectoryComparison:
    """FBNE vs OLNE state trajectories with 100 ||x_fb - x_ol||_2 / ||x_1||_2 per stage.

    x1 defaults to the all-ones vector.
    """
    sys = assemble_stacked(game)
    x1 = np.ones(sys.n) if x1 is None else np.asarray(x1, dtype=float).reshape(-1)
    scale = np.linalg.norm(x1)
    if scale == 0:
        raise ValueError("initial state is zero; percent difference is undefined")
    fb = rollout_feedback(solve_fbne(game, sys), sys, x1)
    ol = rollout_openloop(solve_olne(game, sys), sys, x1)
    pct = 100.0 * np.linalg.norm(fb.states - ol.states, axis=1) / scale
    return TrajectoryComparison(x_fb=fb.states, x_ol=ol.states, pct=pct)


# --- heterogeneity study ----------------------------------------------------------

@dataclass(frozen=True)
class HeterogeneityStudy:
    vary: str
    threshold: float
    high: list[MonteCarloRecord]
    low: list[MonteCarloRecord]

    def metric(self, rec: MonteCarloRecord) -> float:
        return rec.het_A if self.vary == "A" else rec.het_B

    def mean_median_delta_K(self, tier: str) -> float:
        recs = [r for r in (self.high if tier == "high" else self.low) if r.ok]
        if not recs:
            return math.nan
        dK = np.array([r.delta_K for r in recs])
        return float(np.median(dK, axis=0).mean())

    def csv_rows(self, horizon: int):
        for tier, recs in (("high", self.high), ("low", self.low)):
            for r in recs:
                yield [tier, *r.csv_row(horizon)]

    @staticmethod
    def header(horizon: int) -> list[str]:
        return ["tier", *record_header(horizon)]


def run_heterogeneity_study(config: SamplerConfig, per_tier: int = 1000, pilot: int = 1000,
                            threads: int = 1) -> HeterogeneityStudy:
    """Two cohorts split at the median heterogeneity of a pilot sample.

    ``config.dynamics_heterogeneity`` selects what varies (either *_A or *_B
    value works); the tiers themselves are set here.
    """
    het = config.dynamics_heterogeneity
    if config.mode != "random_dynamics" or het == "none":
        raise ConfigError("heterogeneity study needs random_dynamics mode and a varied matrix")
    vary = het[-1]
    pilot_cfg = replace(config, dynamics_heterogeneity=f"high_{vary}", het_threshold=None,
                        sample_count=pilot, stream=1)
    metrics = []
    for i in range(pilot):
        try:
            game, _ = sample_game(pilot_cfg, i)
        except SamplingRejected:
            continue
        metrics.append(heterogeneity([a.A if vary == "A" else a.B for a in game.agents]))
    if not metrics:
        raise ConfigError("pilot produced no games")
    threshold = float(np.median(metrics))
    high_cfg = replace(config, dynamics_heterogeneity=f"high_{vary}", het_threshold=threshold,
                       sample_count=per_tier, stream=2)
    low_cfg = replace(config, dynamics_heterogeneity=f"low_{vary}", het_threshold=threshold,
                      sample_count=per_tier, stream=3)
    high = run_monte_carlo(high_cfg, threads)
    low = run_monte_carlo(low_cfg, threads)
    for tier, recs in (("high", high), ("low", low)):
        if any(r.status.startswith("rejected:") and "budget" in r.status for r in recs):
            raise SamplingRejected(f"rejection budget exhausted for the {tier} tier")
    return HeterogeneityStudy(vary=vary, threshold=threshold, high=high, low=low)


# --- dense sampling ---------------------------------------------------------------

def run_dense_sampling(base_game: LQGame, radius: float, count: int, master_seed: int = 0,
                       threads: int = 1, max_retries: int = 100) -> list[MonteCarloRecord]:
    cfg = SamplerConfig(n_agents=base_game.n_agents, state_dims=tuple(base_game.state_dims),
                        control_dims=tuple(base_game.control_dims), horizon=base_game.horizon,
                        sample_count=count, master_seed=master_seed, mode="dense",
                        base_game=base_game, radius=radius, max_retries=max_retries)
    return run_monte_carlo(cfg, threads)
