"""Open-loop Nash equilibrium: Riccati recursion, rollout and a stacked-KKT oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lqgap.fbne import Trajectory
from lqgap.game_model import LQGame, StackedSystem, assemble_stacked
from lqgap.linalg import SINGULAR_COND, checked_solve

KKT_SIZE_LIMIT = 2000


class OracleError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class OpenLoopSolution:
    """Stage matrices of the OLNE recursion, indexed by ``k = t - 1``.

    ``M[T]`` holds the terminal Q^i; ``propagator[k]`` is Lambda_t^{-1} A.
    """

    M: np.ndarray  # (T+1, N, n, n)
    Lam: np.ndarray  # (T, n, n)
    L: np.ndarray  # (T, m, n)
    propagator: np.ndarray  # (T, n, n)
    cond_Lam: np.ndarray  # (T,)
    control_slices: tuple[slice, ...]

    @property
    def horizon(self) -> int:
        return self.L.shape[0]

    def gain(self, t: int, i: int) -> np.ndarray:
        return self.L[t - 1, self.control_slices[i]]


def solve_olne(game: LQGame, sys: StackedSystem | None = None,
               max_cond: float = SINGULAR_COND) -> OpenLoopSolution:
    if sys is None:
        sys = assemble_stacked(game)
    T, N = game.horizon, game.n_agents
    n, m = sys.n, sys.m
    A = sys.A
    cs = sys.control_slices
    Rinv = [np.linalg.inv(r) for r in game.R]
    # B^i (R^i)^{-1} B^i' is fixed over time
    BRB = [sys.B_hat[i] @ Rinv[i] @ sys.B_hat[i].T for i in range(N)]

    M = np.empty((T + 1, N, n, n))
    Lam = np.empty((T, n, n))
    L = np.empty((T, m, n))
    prop = np.empty((T, n, n))
    cond = np.empty(T)
    for i in range(N):
        M[T, i] = game.Q[i]

    eye = np.eye(n)
    for k in range(T - 1, -1, -1):
        Mn = M[k + 1]
        Lam[k] = eye + sum(BRB[i] @ Mn[i] for i in range(N))
        prop[k], cond[k] = checked_solve(Lam[k], A, stage=k + 1, which="Lambda", max_cond=max_cond)
        for i in range(N):
            L[k, cs[i]] = Rinv[i] @ sys.B_hat[i].T @ Mn[i] @ prop[k]
            M[k, i] = game.Q[i] + A.T @ Mn[i] @ prop[k]

    for a in (M, Lam, L, prop, cond):
        a.setflags(write=False)
    return OpenLoopSolution(M=M, Lam=Lam, L=L, propagator=prop, cond_Lam=cond,
                            control_slices=tuple(cs))


def rollout_openloop(sol: OpenLoopSolution, sys: StackedSystem, x1) -> Trajectory:
    """States from x_{t+1} = Lambda_t^{-1} A x_t and controls u_t = -L_t x_t."""
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    if x1.shape[0] != sys.n:
        raise ValueError(f"x1 has dimension {x1.shape[0]}, expected {sys.n}")
    T = sol.horizon
    xs = np.empty((T + 1, sys.n))
    us = np.empty((T, sys.m))
    xs[0] = x1
    for k in range(T):
        us[k] = -sol.L[k] @ xs[k]
        xs[k + 1] = sol.propagator[k] @ xs[k]
    xs.setflags(write=False)
    us.setflags(write=False)
    return Trajectory(states=xs, controls=us)


def resimulate(sys: StackedSystem, x1, controls) -> np.ndarray:
    """Integrate x_{t+1} = A x_t + B u_t from x1 under the given controls."""
    controls = np.asarray(controls, dtype=float)
    xs = np.empty((controls.shape[0] + 1, sys.n))
    xs[0] = np.asarray(x1, dtype=float).reshape(-1)
    for k, u in enumerate(controls):
        xs[k + 1] = sys.A @ xs[k] + sys.B @ u
    return xs


def resimulation_residual(traj: Trajectory, sys: StackedSystem) -> float:
    """Max relative gap between the stored states and the raw-dynamics rerun."""
    xs = resimulate(sys, traj.states[0], traj.controls)
    scale = 1.0 + np.max(np.abs(traj.states))
    return float(np.max(np.abs(xs - traj.states)) / scale)


def unroll_matrices(sys: StackedSystem, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Phi, Theta with (x_2, ..., x_{T+1}) = Phi x_1 + Theta (u_1, ..., u_T)."""
    n, m = sys.n, sys.m
    Phi = np.empty((n * T, n))
    Theta = np.zeros((n * T, m * T))
    powers = [np.eye(n)]
    for _ in range(T):
        powers.append(sys.A @ powers[-1])
    for r in range(T):  # block row r holds x_{r+2}
        Phi[r * n:(r + 1) * n] = powers[r + 1]
        for c in range(r + 1):  # u_{c+1} reaches x_{r+2} through A^{r-c}
            Theta[r * n:(r + 1) * n, c * m:(c + 1) * m] = powers[r - c] @ sys.B
    return Phi, Theta


def _agent_columns(sys: StackedSystem, T: int, agent: int) -> np.ndarray:
    sl = sys.control_slices[agent]
    return np.concatenate([np.arange(sl.start, sl.stop) + k * sys.m for k in range(T)])


def agent_cost(game: LQGame, sys: StackedSystem, x1, controls, agent: int) -> float:
    """C^i for the trajectory generated from x1 by ``controls`` (shape (T, m))."""
    controls = np.asarray(controls, dtype=float)
    xs = resimulate(sys, x1, controls)
    sl = sys.control_slices[agent]
    Q, R = game.Q[agent], game.R[agent]
    total = 0.0
    for k in range(controls.shape[0]):
        ui = controls[k, sl]
        total += ui @ R @ ui + xs[k + 1] @ Q @ xs[k + 1]
    return float(total)


def kkt_oracle(game: LQGame, sys: StackedSystem | None, x1,
               size_limit: int = KKT_SIZE_LIMIT) -> tuple[np.ndarray, Trajectory]:
    """OLNE controls from the stacked first-order conditions of all agents.

    Unrolls the dynamics to x = Phi x1 + Theta u, writes each agent's gradient
    of C^i with respect to its own controls, stacks the N stationarity blocks
    into one square system in u and solves it densely. Returns controls with
    shape (T, m) and the trajectory they generate.
    """
    if sys is None:
        sys = assemble_stacked(game)
    T, n, m = game.horizon, sys.n, sys.m
    if m * T > size_limit:
        raise OracleError(f"stacked system of size mT={m * T} exceeds limit {size_limit}")
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    if x1.shape[0] != n:
        raise ValueError(f"x1 has dimension {x1.shape[0]}, expected {n}")
    Phi, Theta = unroll_matrices(sys, T)

    H = np.zeros((m * T, m * T))
    rhs = np.zeros(m * T)
    eye_T = np.eye(T)
    for i in range(game.n_agents):
        cols = _agent_columns(sys, T, i)
        Qs = 0.5 * (game.Q[i] + game.Q[i].T)
        Qbar = np.kron(eye_T, Qs)
        Th_i = Theta[:, cols]
        # d/du^i [ u^i' Rbar u^i + x' Qbar x ] / 2 = Rbar u^i + Th_i' Qbar (Phi x1 + Theta u)
        H[cols] = Th_i.T @ Qbar @ Theta
        H[np.ix_(cols, cols)] += np.kron(eye_T, game.R[i])
        rhs[cols] = -Th_i.T @ Qbar @ Phi @ x1
    s = np.linalg.svd(H, compute_uv=False)
    if s[-1] <= s[0] * 1e-14:
        raise OracleError("stacked stationarity system is singular")
    u = np.linalg.solve(H, rhs).reshape(T, m)
    xs = resimulate(sys, x1, u)
    xs.setflags(write=False)
    u.setflags(write=False)
    return u, Trajectory(states=xs, controls=u)
