import numpy as np
import pytest

from lqgap import AgentSpec, LQGame


def random_game(seed, n_agents=2, state_dim=2, control_dim=1, horizon=3, decoupled=False):
    """General random standard game: Gaussian dynamics, Wishart-like Q, R = VV' + I."""
    rng = np.random.default_rng(seed)
    agents = [AgentSpec(0.6 * rng.normal(size=(state_dim, state_dim)),
                        rng.normal(size=(state_dim, control_dim))) for _ in range(n_agents)]
    n = n_agents * state_dim
    mask = np.kron(np.eye(n_agents), np.ones((state_dim, state_dim)))
    Q = []
    for _ in range(n_agents):
        W = rng.normal(size=(n, n))
        q = W @ W.T / n
        Q.append(q * mask if decoupled else q)
    R = []
    for _ in range(n_agents):
        V = rng.normal(size=(control_dim, control_dim))
        R.append(V @ V.T + np.eye(control_dim))
    return LQGame(agents=agents, horizon=horizon, Q=Q, R=R)


def scalar_game(a=1.0, b=1.0, q=1.0, r=1.0, horizon=1):
    return LQGame(agents=[AgentSpec([[a]], [[b]])], horizon=horizon, Q=[[[q]]], R=[[[r]]])


def lqr_gains(A, B, Q, R, T):
    """Textbook finite-horizon LQR with stage cost u'Ru + x_{t+1}'Qx_{t+1}; independent of lqgap."""
    V = Q
    gains = []
    for _ in range(T):
        G = np.linalg.solve(R + B.T @ V @ B, B.T @ V @ A)
        gains.append(G)
        V = Q + (A - B @ G).T @ V @ (A - B @ G) + G.T @ R @ G
    return gains[::-1]


@pytest.fixture
def game_factory():
    return random_game


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
