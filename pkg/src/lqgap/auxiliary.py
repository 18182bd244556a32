"""Auxiliary game construction and executable checks of its identities.

The auxiliary game keeps only agent i's own row block of Q^i. Its Riccati
solutions reproduce the open-loop equilibrium of the original game, which
turns the OLNE/FBNE comparison into a comparison of two feedback recursions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from lqgap.fbne import FeedbackSolution, solve_fbne
from lqgap.game_model import AUXILIARY, LQGame, StackedSystem, assemble_stacked
from lqgap.linalg import norm2
from lqgap.olne import solve_olne

COINCIDENCE_TOL = 1e-9
LEMMA_TOL = 1e-9


class SolveFailure(RuntimeError):
    """One of the four inner solves failed; ``which`` names it."""

    def __init__(self, which: str, cause: Exception):
        super().__init__(f"{which} failed: {cause}")
        self.which = which
        self.cause = cause

    @property
    def stage(self):
        return getattr(self.cause, "stage", None)


def build_auxiliary(game: LQGame) -> LQGame:
    blocks = game.state_slices()
    Q_aux = []
    for i, q in enumerate(game.Q):
        qa = np.zeros_like(q)
        qa[blocks[i], :] = q[blocks[i], :]
        Q_aux.append(qa)
    label = f"{game.label} (auxiliary)" if game.label else None
    return game.with_costs(Q_aux, cost_symmetry=AUXILIARY, label=label)


def gain_gap(K: np.ndarray, K_other: np.ndarray) -> np.ndarray:
    """Per-stage spectral norm of the stacked gain difference."""
    return np.array([norm2(a - b) for a, b in zip(K, K_other)])


def coincidence_gap(game: LQGame, sys: StackedSystem | None = None,
                    fb: FeedbackSolution | None = None) -> np.ndarray:
    """delta K~_t = ||K~_t - K_t||_2 for t = 1..T."""
    if sys is None:
        sys = assemble_stacked(game)
    if fb is None:
        fb = solve_fbne(game, sys)
    fb_aux = solve_fbne(build_auxiliary(game), sys)
    return gain_gap(fb_aux.K, fb.K)


@dataclass(frozen=True)
class AuxiliaryReport:
    lemma1_residual: float
    remark3_residual: float
    lemma2_gain_residual: float
    lemma2_dynamics_residual: float
    lemma3_residual: float
    deltaK_series: tuple[float, ...]
    coincide: bool
    coincidence_tol: float = COINCIDENCE_TOL

    @property
    def max_deltaK(self) -> float:
        return max(self.deltaK_series)

    def lemmas_hold(self, tol: float = LEMMA_TOL) -> bool:
        return all(r <= tol for r in (self.lemma1_residual, self.remark3_residual,
                                      self.lemma2_gain_residual, self.lemma2_dynamics_residual,
                                      self.lemma3_residual))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deltaK_series"] = list(self.deltaK_series)
        d["max_deltaK"] = self.max_deltaK
        return d


def _solve(which: str, fn, game, sys):
    try:
        return fn(game, sys)
    except Exception as exc:  # tag and re-raise whatever the solver threw
        raise SolveFailure(which, exc) from exc


def verify_auxiliary_identities(game: LQGame,
                                coincidence_tol: float = COINCIDENCE_TOL) -> AuxiliaryReport:
    sys = assemble_stacked(game)
    aux = build_auxiliary(game)
    ol = _solve("olne(G)", solve_olne, game, sys)
    ol_aux = _solve("olne(G~)", solve_olne, aux, sys)
    fb_aux = _solve("fbne(G~)", solve_fbne, aux, sys)
    fb = _solve("fbne(G)", solve_fbne, game, sys)

    T, N = game.horizon, game.n_agents
    cs, xs = sys.control_slices, sys.state_slices

    lemma1 = max(norm2(ol_aux.L[k, cs[i]] - ol.L[k, cs[i]]) for k in range(T) for i in range(N))
    remark3 = 0.0
    for k in range(T + 1):
        for i in range(N):
            for j in range(N):
                if j != i:
                    remark3 = max(remark3, norm2(ol_aux.M[k, i][xs[j], :]))
    lemma2_gain = max(norm2(fb_aux.K[k, cs[i]] - ol_aux.L[k, cs[i]])
                      for k in range(T) for i in range(N))
    lemma2_dyn = max(norm2(fb_aux.F[k] - ol_aux.propagator[k]) for k in range(T))
    lemma3 = max(norm2(ol.propagator[k] - fb_aux.F[k]) for k in range(T))
    dK = gain_gap(fb_aux.K, fb.K)
    return AuxiliaryReport(
        lemma1_residual=lemma1,
        remark3_residual=remark3,
        lemma2_gain_residual=lemma2_gain,
        lemma2_dynamics_residual=lemma2_dyn,
        lemma3_residual=lemma3,
        deltaK_series=tuple(float(v) for v in dK),
        coincide=bool(dK.max() <= coincidence_tol),
        coincidence_tol=coincidence_tol,
    )
