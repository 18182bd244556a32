import numpy as np
import pytest

from lqgap import (AgentSpec, LQGame, assemble_stacked, build_auxiliary, coincidence_gap, fixtures, rollout_feedback,
                   rollout_openloop, solve_fbne, solve_olne, verify_auxiliary_identities)
from lqgap.auxiliary import SolveFailure
from lqgap.game_model import AUXILIARY

from conftest import random_game


def test_decoupled_costs_are_a_fixed_point():
    g = random_game(1, n_agents=3, decoupled=True)
    mask_own = [np.zeros((6, 6)) for _ in range(3)]
    for i in range(3):
        mask_own[i][2 * i:2 * i + 2, 2 * i:2 * i + 2] = 1
    g = g.with_costs([q * m for q, m in zip(g.Q, mask_own)])
    aux = build_auxiliary(g)
    assert aux.cost_symmetry == AUXILIARY
    for a, b in zip(aux.Q, g.Q):
        np.testing.assert_array_equal(a, b)


def test_g1_row_blocks():
    g = fixtures.load("g1")
    aux = build_auxiliary(g)
    np.testing.assert_array_equal(aux.Q[0][:2], g.Q[0][:2])
    assert not aux.Q[0][2:].any()
    np.testing.assert_array_equal(aux.Q[1][2:], g.Q[1][2:])
    assert not aux.Q[1][:2].any()
    assert aux.agents == g.agents and aux.horizon == g.horizon
    assert all(np.array_equal(a, b) for a, b in zip(aux.R, g.R))


def test_zero_costs_stay_zero():
    g = random_game(0)
    g = g.with_costs([np.zeros_like(q) for q in g.Q])
    assert all(not q.any() for q in build_auxiliary(g).Q)


def test_identities_seed7():
    rep = verify_auxiliary_identities(random_game(7, horizon=6))
    for r in (rep.lemma1_residual, rep.remark3_residual, rep.lemma2_gain_residual,
              rep.lemma2_dynamics_residual, rep.lemma3_residual):
        assert 0 <= r <= 1e-9
    assert rep.lemmas_hold()


@pytest.mark.parametrize("seed", range(20))
def test_identities_random(seed):
    g = random_game(300 + seed, n_agents=3, state_dim=2, control_dim=2, horizon=7)
    assert verify_auxiliary_identities(g).lemmas_hold()


def test_decoupled_game_coincides():
    rep = verify_auxiliary_identities(random_game(5, decoupled=True, horizon=8))
    assert rep.coincide
    assert max(rep.deltaK_series) <= 1e-12


def test_g2_violates_far_more_than_g1():
    r1 = verify_auxiliary_identities(fixtures.load("g1"))
    r2 = verify_auxiliary_identities(fixtures.load("g2"))
    assert not r1.coincide and not r2.coincide
    assert r2.max_deltaK > 100 * r1.max_deltaK


def test_coincidence_gap_single_agent_is_zero():
    g = random_game(3, n_agents=1, horizon=5)
    assert not coincidence_gap(g).any()


def test_coincidence_gap_series_shape():
    g = fixtures.load("g1")
    gap = coincidence_gap(g)
    assert gap.shape == (10,) and np.all(gap >= 0)
    # K_T only sees Q through B'Q A with Q~ sharing agent i's rows, so the last stage matches
    assert gap[-1] == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_coincidence_implies_equal_trajectories(seed):
    g = random_game(seed, decoupled=True, horizon=6)
    s = assemble_stacked(g)
    assert coincidence_gap(g, s).max() <= 1e-9
    fb, ol = solve_fbne(g, s), solve_olne(g, s)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        x1 = rng.normal(size=s.n)
        a = rollout_feedback(fb, s, x1).states
        b = rollout_openloop(ol, s, x1).states
        np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-8 * np.abs(x1).max())


def test_failure_is_tagged():
    # Lambda_T = I + diag(-1, 1) is singular for the original game, which is solved first
    g = LQGame([AgentSpec([[1.0]], [[1.0]])] * 2, 2, [np.diag([-1.0, 0.0]), np.eye(2)],
               [[[1.0]], [[1.0]]])
    with pytest.raises(SolveFailure) as err:
        verify_auxiliary_identities(g)
    assert err.value.which == "olne(G)"
    assert err.value.stage == 2
