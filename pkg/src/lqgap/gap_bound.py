"""Recursive perturbation bound on FBNE gains and the FBNE-to-OLNE gap bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lqgap.auxiliary import build_auxiliary, gain_gap
from lqgap.fbne import FeedbackSolution, solve_fbne
from lqgap.game_model import LQGame, assemble_stacked
from lqgap.io import write_csv
from lqgap.linalg import norm2, sigma_min

TIGHTNESS_HEADER = ("t", "bound_dK", "actual_dK", "applicable")


class StructureMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GapBoundSeries:
    """Bounds indexed by ``k = t - 1``; NaN marks stages the bound does not reach.

    ``bound_dZ`` has T+1 rows (the last is the terminal value epsilon).
    """

    epsilon: float
    bound_dP: np.ndarray  # (T,)
    bound_dS: np.ndarray  # (T,)
    bound_dK: np.ndarray  # (T,)
    bound_dZ: np.ndarray  # (T+1, N)
    applicable: np.ndarray  # (T,) bool
    actual_dP: np.ndarray | None = None
    actual_dS: np.ndarray | None = None
    actual_dK: np.ndarray | None = None
    actual_dZ: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.bound_dK.shape[0]

    def rows(self):
        """(t, bound_dK, actual_dK, applicable) per stage."""
        for k in range(self.horizon):
            actual = self.actual_dK[k] if self.actual_dK is not None else math.nan
            yield (k + 1, float(self.bound_dK[k]), float(actual), bool(self.applicable[k]))


def _check_compatible(G: LQGame, G_hat: LQGame) -> None:
    if G.horizon != G_hat.horizon or G.n_agents != G_hat.n_agents:
        raise StructureMismatch("games differ in horizon or number of agents")
    for i, (a, b) in enumerate(zip(G.agents, G_hat.agents), start=1):
        if a != b:
            raise StructureMismatch(f"agent {i}: dynamics differ between the two games")
    for i, (a, b) in enumerate(zip(G.R, G_hat.R), start=1):
        if not np.array_equal(a, b):
            raise StructureMismatch(f"agent {i}: R differs between the two games")
    for i, (a, b) in enumerate(zip(G.Q, G_hat.Q), start=1):
        if a.shape != b.shape:
            raise StructureMismatch(f"agent {i}: Q shapes differ")


def _actuals(sol: FeedbackSolution, sol_hat: FeedbackSolution):
    T, N = sol.K.shape[0], sol.Z.shape[1]
    dP = np.array([norm2(sol_hat.P[k] - sol.P[k]) for k in range(T)])
    dS = np.array([norm2(sol_hat.S[k] - sol.S[k]) for k in range(T)])
    dK = gain_gap(sol_hat.K, sol.K)
    dZ = np.array([[norm2(sol_hat.Z[k, i] - sol.Z[k, i]) for i in range(N)] for k in range(T + 1)])
    return dP, dS, dK, dZ


def compute_bound(G: LQGame, G_hat: LQGame, sol: FeedbackSolution | None = None,
                  with_actuals: bool = True) -> GapBoundSeries:
    """Backward bound recursion on ||P^_t - P_t||, ||S^_t - S_t||, ||K^_t - K_t||, ||Z^_t^i - Z_t^i||.

    The right-hand sides of the inequalities are propagated as equalities. Once
    the perturbation of P_t reaches 1/||P_t^{-1}||_2 the bound is no longer
    valid; that stage and every earlier one is marked not applicable.
    """
    _check_compatible(G, G_hat)
    sys = assemble_stacked(G)
    if sol is None:
        sol = solve_fbne(G, sys)
    T, N = G.horizon, G.n_agents
    cs = sys.control_slices

    eps = max(norm2(qh - q) for q, qh in zip(G.Q, G_hat.Q))
    nA, nB = norm2(sys.A), norm2(sys.B)
    sqrtN = math.sqrt(N)
    nR = [norm2(r) for r in G.R]

    dP = np.full(T, np.nan)
    dS = np.full(T, np.nan)
    dK = np.full(T, np.nan)
    dZ = np.full((T + 1, N), np.nan)
    applicable = np.zeros(T, dtype=bool)
    dZ[T] = eps

    for k in range(T - 1, -1, -1):
        dz_next = dZ[k + 1]
        dz_max = dz_next.max()
        dP[k] = sqrtN * nB ** 2 * dz_max
        dS[k] = sqrtN * nA * nB * dz_max
        Pinv = 1.0 / sigma_min(sol.P[k])
        if Pinv * dP[k] >= 1.0:
            break
        applicable[k] = True
        nK = norm2(sol.K[k])
        dK[k] = Pinv / (1.0 - Pinv * dP[k]) * (nK * dP[k] + dS[k])
        nF = norm2(sol.F[k])  # F_t = A - B K_t
        for i in range(N):
            nKi = norm2(sol.K[k, cs[i]])
            nZi = norm2(sol.Z[k + 1, i])
            dZ[k, i] = ((nKi ** 2 + 1.0) * eps
                        + nB * (nZi + dz_next[i]) * (2.0 * nF + nB * dK[k]) * dK[k]
                        + nF ** 2 * dz_next[i]
                        + (nR[i] + eps) * (2.0 * nKi + dK[k]) * dK[k])

    extra = {}
    if with_actuals:
        sol_hat = solve_fbne(G_hat, sys)
        aP, aS, aK, aZ = _actuals(sol, sol_hat)
        extra = dict(actual_dP=aP, actual_dS=aS, actual_dK=aK, actual_dZ=aZ)
    return GapBoundSeries(epsilon=eps, bound_dP=dP, bound_dS=dS, bound_dK=dK, bound_dZ=dZ,
                          applicable=applicable, **extra)


def bound_fbne_olne_gap(G: LQGame) -> GapBoundSeries:
    """Bound on ||L_t - K_t||_2 obtained by perturbing G into its auxiliary game.

    The attached ``actual_dK`` is ||K~_t - K_t||_2, which equals the
    OLNE/FBNE gain gap.
    """
    return compute_bound(G, build_auxiliary(G))


def tightness_experiment(G: LQGame, G_hat: LQGame, out=None) -> list[tuple]:
    series = compute_bound(G, G_hat)
    rows = list(series.rows())
    if out is not None:
        write_csv(out, TIGHTNESS_HEADER, rows)
    return rows
