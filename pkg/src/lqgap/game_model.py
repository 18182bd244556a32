"""Game data model, stacked dynamics, static validation and the JSON game format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SYM_TOL = 1e-10
PSD_TOL = 1e-10
PD_FLOOR = 1e-12

FILE_VERSION = 1

STANDARD = "standard"
AUXILIARY = "auxiliary"


class GameValidationError(ValueError):
    """Structural problem with a game (dimension mismatch and friends)."""

    def __init__(self, message: str, agent: int | None = None):
        super().__init__(message)
        self.agent = agent


class GameFileError(ValueError):
    """A game file could not be parsed."""

    def __init__(self, message: str, path=None, field: str | None = None, line: int | None = None):
        parts = [message]
        if field is not None:
            parts.append(f"field={field!r}")
        if line is not None:
            parts.append(f"line={line}")
        if path is not None:
            parts.append(f"path={str(path)!r}")
        super().__init__("; ".join(parts))
        self.path = path
        self.field = field
        self.line = line


def _frozen(a, ndim: int = 2) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim == 0 and ndim == 2:
        arr = arr.reshape(1, 1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentSpec:
    """Dynamics ``x^i_{t+1} = A x^i_t + B u^i_t`` of one agent."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    def __eq__(self, other):
        if not isinstance(other, AgentSpec):
            return NotImplemented
        return np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B)


@dataclass(frozen=True, eq=False)
class LQGame:
    """N-agent, T-stage LQ game with decoupled dynamics and coupled state costs.

    Agent i pays ``sum_t u_t^i' R^i u_t^i + x_{t+1}' Q^i x_{t+1}``; the initial
    state carries no cost.
    """

    agents: tuple[AgentSpec, ...]
    horizon: int
    Q: tuple[np.ndarray, ...]
    R: tuple[np.ndarray, ...]
    cost_symmetry: str = STANDARD
    label: str | None = None

    def __post_init__(self):
        agents = tuple(a if isinstance(a, AgentSpec) else AgentSpec(*a) for a in self.agents)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "Q", tuple(_frozen(q) for q in self.Q))
        object.__setattr__(self, "R", tuple(_frozen(r) for r in self.R))
        if self.cost_symmetry not in (STANDARD, AUXILIARY):
            raise GameValidationError(f"unknown cost_symmetry {self.cost_symmetry!r}")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def state_dims(self) -> list[int]:
        return [a.state_dim for a in self.agents]

    @property
    def control_dims(self) -> list[int]:
        return [a.control_dim for a in self.agents]

    @property
    def n(self) -> int:
        return sum(self.state_dims)

    @property
    def m(self) -> int:
        return sum(self.control_dims)

    def state_slices(self) -> list[slice]:
        return _offsets(self.state_dims)

    def control_slices(self) -> list[slice]:
        return _offsets(self.control_dims)

    def with_costs(self, Q: Sequence[np.ndarray], cost_symmetry: str | None = None,
                   label: str | None = None) -> "LQGame":
        """Copy of this game with replaced state-cost matrices."""
        return LQGame(
            agents=self.agents,
            horizon=self.horizon,
            Q=tuple(Q),
            R=self.R,
            cost_symmetry=cost_symmetry or self.cost_symmetry,
            label=label,
        )

    def __eq__(self, other):
        if not isinstance(other, LQGame):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.cost_symmetry == other.cost_symmetry
            and self.label == other.label
            and len(self.agents) == len(other.agents)
            and all(a == b for a, b in zip(self.agents, other.agents))
            and len(self.Q) == len(other.Q)
            and all(np.array_equal(a, b) for a, b in zip(self.Q, other.Q))
            and len(self.R) == len(other.R)
            and all(np.array_equal(a, b) for a, b in zip(self.R, other.R))
        )


def _offsets(dims: Sequence[int]) -> list[slice]:
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


@dataclass(frozen=True, eq=False)
class StackedSystem:
    A: np.ndarray
    B: np.ndarray
    B_hat: tuple[np.ndarray, ...]
    state_slices: tuple[slice, ...]
    control_slices: tuple[slice, ...]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def _structure_issues(game: LQGame) -> list[tuple[int | None, str]]:
    issues: list[tuple[int | None, str]] = []
    if len(game.agents) < 1:
        issues.append((None, "game has no agents"))
    if not isinstance(game.horizon, (int, np.integer)) or game.horizon < 1:
        issues.append((None, f"horizon must be a positive integer, got {game.horizon!r}"))
    for i, ag in enumerate(game.agents, start=1):
        if ag.A.ndim != 2 or ag.A.shape[0] != ag.A.shape[1] or ag.A.shape[0] < 1:
            issues.append((i, f"agent {i}: A must be square, got shape {ag.A.shape}"))
            continue
        if ag.B.ndim != 2 or ag.B.shape[0] != ag.A.shape[0] or ag.B.shape[1] < 1:
            issues.append((i, f"agent {i}: B has shape {ag.B.shape}, expected ({ag.A.shape[0]}, m_{i})"))
    if issues:
        return issues
    n = game.n
    if len(game.Q) != len(game.agents):
        issues.append((None, f"expected {len(game.agents)} Q matrices, got {len(game.Q)}"))
    if len(game.R) != len(game.agents):
        issues.append((None, f"expected {len(game.agents)} R matrices, got {len(game.R)}"))
    for i, q in enumerate(game.Q, start=1):
        if q.shape != (n, n):
            issues.append((i, f"agent {i}: Q has shape {q.shape}, expected ({n}, {n})"))
    for i, (r, ag) in enumerate(zip(game.R, game.agents), start=1):
        mi = ag.control_dim
        if r.shape != (mi, mi):
            issues.append((i, f"agent {i}: R has shape {r.shape}, expected ({mi}, {mi})"))
    return issues


def check_dimensions(game: LQGame) -> None:
    """Raise GameValidationError on the first structural problem."""
    issues = _structure_issues(game)
    if issues:
        agent, msg = issues[0]
        raise GameValidationError(msg, agent=agent)


def assemble_stacked(game: LQGame) -> StackedSystem:
    """Concatenate per-agent dynamics into block-diagonal A and B."""
    check_dimensions(game)
    n, m = game.n, game.m
    xs, us = game.state_slices(), game.control_slices()
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    for ag, sx, su in zip(game.agents, xs, us):
        A[sx, sx] = ag.A
        B[sx, su] = ag.B
    B_hat = tuple(_frozen(B[:, su]) for su in us)
    return StackedSystem(A=_frozen(A), B=_frozen(B), B_hat=B_hat,
                         state_slices=tuple(xs), control_slices=tuple(us))


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return self.ok


def _sym_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def validate(game: LQGame) -> ValidationReport:
    """Check the static part of the standing assumptions (Q PSD, R PD, shapes).

    Invertibility of the per-stage matrices is left to the solvers.
    """
    structural = _structure_issues(game)
    if structural:
        return ValidationReport(tuple(msg for _, msg in structural))
    issues = []
    standard = game.cost_symmetry == STANDARD
    for i, q in enumerate(game.Q, start=1):
        if not np.all(np.isfinite(q)):
            issues.append(f"Q{i} has non-finite entries")
            continue
        if standard:
            asym = np.max(np.abs(q - q.T)) if q.size else 0.0
            if asym > SYM_TOL:
                issues.append(f"Q{i} is not symmetric (max asymmetry {asym:.3g})")
            lam = np.linalg.eigvalsh(_sym_part(q)).min()
            if lam < -PSD_TOL:
                issues.append(f"Q{i} is not positive semi-definite (min eigenvalue {lam:.6g})")
    for i, r in enumerate(game.R, start=1):
        if not np.all(np.isfinite(r)):
            issues.append(f"R{i} has non-finite entries")
            continue
        asym = np.max(np.abs(r - r.T))
        if asym > SYM_TOL:
            issues.append(f"R{i} is not symmetric (max asymmetry {asym:.3g})")
        lam = np.linalg.eigvalsh(_sym_part(r)).min()
        if lam <= PD_FLOOR:
            issues.append(f"R{i} is not positive definite (min eigenvalue {lam:.6g})")
    return ValidationReport(tuple(issues))


def is_psd(Q: np.ndarray, tol: float = PSD_TOL) -> bool:
    return bool(np.linalg.eigvalsh(_sym_part(np.asarray(Q))).min() >= -tol)


# --- serialization -------------------------------------------------------------

def game_to_dict(game: LQGame) -> dict:
    out = {
        "version": FILE_VERSION,
        "horizon": int(game.horizon),
        "agents": [{"A": ag.A.tolist(), "B": ag.B.tolist()} for ag in game.agents],
        "Q": [q.tolist() for q in game.Q],
        "R": [r.tolist() for r in game.R],
    }
    if game.cost_symmetry != STANDARD:
        out["cost_symmetry"] = game.cost_symmetry
    if game.label is not None:
        out["label"] = game.label
    return out


def _matrix(value, field_name: str, path) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise GameFileError(f"not a numeric matrix ({exc})", path=path, field=field_name) from None
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise GameFileError(f"expected a 2D array, got {arr.ndim}D", path=path, field=field_name)
    return arr


def game_from_dict(data: dict, path=None) -> LQGame:
    if not isinstance(data, dict):
        raise GameFileError("top level must be a JSON object", path=path)
    for key in ("version", "horizon", "agents", "Q", "R"):
        if key not in data:
            raise GameFileError(f"missing required field {key!r}", path=path, field=key)
    if data["version"] != FILE_VERSION:
        raise GameFileError(
            f"unsupported schema version {data['version']!r} (expected {FILE_VERSION})",
            path=path, field="version")
    horizon = data["horizon"]
    if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 1:
        raise GameFileError("horizon must be a positive integer", path=path, field="horizon")
    agents_raw = data["agents"]
    if not isinstance(agents_raw, list) or not agents_raw:
        raise GameFileError("agents must be a non-empty array", path=path, field="agents")
    agents = []
    for k, entry in enumerate(agents_raw):
        if not isinstance(entry, dict):
            raise GameFileError("agent entry must be an object", path=path, field=f"agents[{k}]")
        for key in ("A", "B"):
            if key not in entry:
                raise GameFileError(f"missing required field {key!r}", path=path,
                                    field=f"agents[{k}].{key}")
        agents.append(AgentSpec(_matrix(entry["A"], f"agents[{k}].A", path),
                                _matrix(entry["B"], f"agents[{k}].B", path)))
    Q = [_matrix(q, f"Q[{k}]", path) for k, q in enumerate(data["Q"])]
    R = [_matrix(r, f"R[{k}]", path) for k, r in enumerate(data["R"])]
    symmetry = data.get("cost_symmetry", STANDARD)
    if symmetry not in (STANDARD, AUXILIARY):
        raise GameFileError(f"unknown cost_symmetry {symmetry!r}", path=path, field="cost_symmetry")
    game = LQGame(agents=tuple(agents), horizon=horizon, Q=tuple(Q), R=tuple(R),
                  cost_symmetry=symmetry, label=data.get("label"))
    try:
        check_dimensions(game)
    except GameValidationError as exc:
        raise GameFileError(str(exc), path=path) from None
    return game


def dumps_game(game: LQGame) -> str:
    # json emits repr(float), which round-trips IEEE-754 doubles exactly
    return json.dumps(game_to_dict(game), indent=2) + "\n"


def save_game(game: LQGame, path) -> None:
    from lqgap.io import atomic_write_text

    atomic_write_text(path, dumps_game(game))


def load_game(path) -> LQGame:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise GameFileError("game file not found", path=path) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFileError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    return game_from_dict(data, path=path)
