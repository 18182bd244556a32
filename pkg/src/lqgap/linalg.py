"""Small dense linear-algebra helpers shared by the solvers and bounds."""

import numpy as np

SINGULAR_COND = 1e12


class SingularStageMatrix(np.linalg.LinAlgError):
    """A per-stage matrix that must be inverted is (numerically) singular."""

    def __init__(self, stage: int, condition: float, which: str = "P"):
        self.stage = stage
        self.condition = condition
        self.which = which
        super().__init__(f"{which}_t singular at stage t={stage} (condition estimate {condition:.3e})")


def norm2(M) -> float:
    """Spectral norm (largest singular value); 0 for empty arrays."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def sigma_min(M) -> float:
    return float(np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)[-1])


def checked_solve(M: np.ndarray, rhs: np.ndarray, stage: int, which: str,
                  max_cond: float = SINGULAR_COND) -> tuple[np.ndarray, float]:
    """Solve ``M X = rhs`` and return ``(X, cond_2(M))``.

    Raises SingularStageMatrix if the 2-norm condition number exceeds ``max_cond``
    or the factorization fails.
    """
    s = np.linalg.svd(M, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularStageMatrix(stage, cond, which)
    try:
        X = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise SingularStageMatrix(stage, cond, which) from None
    return X, cond
