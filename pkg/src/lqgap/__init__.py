"""Feedback and open-loop Nash equilibria of finite-horizon LQ games, and their gap."""

from lqgap.auxiliary import (
    AuxiliaryReport,
    build_auxiliary,
    coincidence_gap,
    verify_auxiliary_identities,
)
from lqgap.fbne import (
    FeedbackSolution,
    Trajectory,
    rollout_feedback,
    solve_fbne,
    unilateral_optimality_residual,
)
from lqgap.game_model import (
    AgentSpec,
    GameFileError,
    GameValidationError,
    LQGame,
    StackedSystem,
    ValidationReport,
    assemble_stacked,
    load_game,
    save_game,
    validate,
)
from lqgap.gap_bound import GapBoundSeries, bound_fbne_olne_gap, compute_bound, tightness_experiment
from lqgap.linalg import SingularStageMatrix
from lqgap.olne import OpenLoopSolution, kkt_oracle, rollout_openloop, solve_olne

__version__ = "0.1.0"

__all__ = [
    "AgentSpec", "AuxiliaryReport", "FeedbackSolution", "GameFileError", "GameValidationError",
    "GapBoundSeries", "LQGame", "OpenLoopSolution", "SingularStageMatrix", "StackedSystem",
    "Trajectory", "ValidationReport", "assemble_stacked", "bound_fbne_olne_gap", "build_auxiliary",
    "coincidence_gap", "compute_bound", "kkt_oracle", "load_game", "rollout_feedback",
    "rollout_openloop", "save_game", "solve_fbne", "solve_olne", "tightness_experiment",
    "unilateral_optimality_residual", "validate", "verify_auxiliary_identities",
]
