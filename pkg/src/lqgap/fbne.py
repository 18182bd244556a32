"""Feedback Nash equilibrium via the coupled Riccati recursion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lqgap.game_model import LQGame, StackedSystem, assemble_stacked
from lqgap.linalg import SINGULAR_COND, checked_solve, norm2


@dataclass(frozen=True, eq=False)
class FeedbackSolution:
    """Stage matrices of the FBNE recursion.

    Arrays are indexed by ``k = t - 1``: ``K[k]`` is K_t for t = 1..T, and
    ``Z[k, i]`` is Z_t^i for t = 1..T+1 (so ``Z[T]`` holds the terminal Q^i).
    """

    Z: np.ndarray  # (T+1, N, n, n)
    K: np.ndarray  # (T, m, n)
    F: np.ndarray  # (T, n, n)
    P: np.ndarray  # (T, m, m)
    S: np.ndarray  # (T, m, n)
    cond_P: np.ndarray  # (T,)
    control_slices: tuple[slice, ...]

    @property
    def horizon(self) -> int:
        return self.K.shape[0]

    def gain(self, t: int, i: int) -> np.ndarray:
        """K_t^i for 1-based stage t and 0-based agent i."""
        return self.K[t - 1, self.control_slices[i]]


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (T+1, n): x_1 .. x_{T+1}
    controls: np.ndarray  # (T, m): u_1 .. u_T


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def solve_fbne(game: LQGame, sys: StackedSystem | None = None,
               max_cond: float = SINGULAR_COND) -> FeedbackSolution:
    """Backward recursion for Z_t, K_t, F_t; K_t from one dense solve of P_t K_t = S_t.

    Asymmetric Q^i (auxiliary games) are used verbatim.
    """
    if sys is None:
        sys = assemble_stacked(game)
    T, N = game.horizon, game.n_agents
    n, m = sys.n, sys.m
    A, B = sys.A, sys.B
    cs = sys.control_slices

    Z = np.empty((T + 1, N, n, n))
    K = np.empty((T, m, n))
    F = np.empty((T, n, n))
    P = np.empty((T, m, m))
    S = np.empty((T, m, n))
    cond = np.empty(T)
    for i in range(N):
        Z[T, i] = game.Q[i]

    for k in range(T - 1, -1, -1):
        Zn = Z[k + 1]
        for i in range(N):
            BiZ = sys.B_hat[i].T @ Zn[i]  # rows of agent i: B^i' [Z^i]_{i,:}
            P[k, cs[i]] = BiZ @ B
            P[k, cs[i], cs[i]] += game.R[i]
            S[k, cs[i]] = BiZ @ A
        K[k], cond[k] = checked_solve(P[k], S[k], stage=k + 1, which="P", max_cond=max_cond)
        F[k] = A - B @ K[k]
        for i in range(N):
            Ki = K[k, cs[i]]
            Z[k, i] = game.Q[i] + F[k].T @ Zn[i] @ F[k] + Ki.T @ game.R[i] @ Ki

    _freeze(Z, K, F, P, S, cond)
    return FeedbackSolution(Z=Z, K=K, F=F, P=P, S=S, cond_P=cond, control_slices=tuple(cs))


def rollout_feedback(sol: FeedbackSolution, sys: StackedSystem, x1) -> Trajectory:
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    if x1.shape[0] != sys.n:
        raise ValueError(f"x1 has dimension {x1.shape[0]}, expected {sys.n}")
    T = sol.horizon
    xs = np.empty((T + 1, sys.n))
    us = np.empty((T, sys.m))
    xs[0] = x1
    for k in range(T):
        us[k] = -sol.K[k] @ xs[k]
        xs[k + 1] = sol.F[k] @ xs[k]
    _freeze(xs, us)
    return Trajectory(states=xs, controls=us)


def best_response_gains(game: LQGame, sol: FeedbackSolution, agent: int,
                        sys: StackedSystem | None = None,
                        max_cond: float = SINGULAR_COND) -> np.ndarray:
    """Agent's optimal LQR gains when all other agents play their gains from ``sol``.

    The others' feedback is absorbed into time-varying closed-loop dynamics and
    the resulting single-agent problem is solved by its own Riccati recursion.
    """
    if sys is None:
        sys = assemble_stacked(game)
    T = sol.horizon
    cs = sys.control_slices
    Bi = sys.B_hat[agent]
    Qi, Ri = game.Q[agent], game.R[agent]
    others = [j for j in range(game.n_agents) if j != agent]

    V = Qi.copy()
    gains = np.empty((T, Bi.shape[1], sys.n))
    for k in range(T - 1, -1, -1):
        At = sys.A.copy()
        for j in others:
            At -= sys.B_hat[j] @ sol.K[k, cs[j]]
        H = Ri + Bi.T @ V @ Bi
        G, _ = checked_solve(H, Bi.T @ V @ At, stage=k + 1, which="H", max_cond=max_cond)
        gains[k] = G
        Acl = At - Bi @ G
        V = Qi + Acl.T @ V @ Acl + G.T @ Ri @ G
    return gains


def unilateral_optimality_residual(game: LQGame, sol: FeedbackSolution, agent: int,
                                   sys: StackedSystem | None = None) -> float:
    """max_t ||K_t^i(best response) - K_t^i(sol)||_2 for one agent (0-based).

    The certificate works at the gain level, so it does not depend on an
    initial state.
    """
    if sys is None:
        sys = assemble_stacked(game)
    br = best_response_gains(game, sol, agent, sys)
    cs = sys.control_slices[agent]
    return max(norm2(br[k] - sol.K[k, cs]) for k in range(sol.horizon))
