"""Verification oracles: extragradient references, stationarity, grid scans."""

import numpy as np
import pytest

from statseek.agents import make_game
from statseek.oracle import (
    OracleNotConverged,
    PseudoGradientGame,
    brute_force_fixed_points,
    extragradient,
    natural_residual,
    stationarity_residual,
)
from statseek.profiles import CollectiveProfile, Partition, Polytope, box, contains


class ConstAgent:
    """Stub oracle whose reaction ignores the opponents."""

    def __init__(self, value):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        self.n_out = self.value.size

    def react(self, x_others):
        return self.value


def market_equilibrium():
    a = 10.0 * (1.0 + np.arange(10) / 2.0)
    return 925.0 / 11.0 - a


# ---------------- extragradient ----------------


def test_extragradient_matches_market_closed_form():
    bundle = make_game({"game": "quadratic10"})
    game = PseudoGradientGame(
        gradient=bundle.pseudo_gradient, omega=bundle.omega, lipschitz=bundle.lipschitz
    )
    x = extragradient(game, np.full(10, 50.0))
    np.testing.assert_allclose(x, market_equilibrium(), atol=1e-6)


def test_extragradient_adaptive_step_same_answer():
    bundle = make_game({"game": "quadratic10"})
    game = PseudoGradientGame(gradient=bundle.pseudo_gradient, omega=bundle.omega)
    x = extragradient(game, np.full(10, 50.0))
    np.testing.assert_allclose(x, market_equilibrium(), atol=1e-6)


def test_extragradient_adaptive_step_handles_stiff_field():
    # initial step 1 overshoots badly for F(x) = 100 x; halving must rescue it
    game = PseudoGradientGame(
        gradient=lambda x: 100.0 * x, omega=box(np.array([-1.0]), np.array([1.0]))
    )
    x = extragradient(game, np.array([1.0]))
    assert abs(float(x[0])) <= 1e-9


def test_extragradient_target_tracking_variational_point():
    # the variational point projects the targets onto the budget set
    bundle = make_game({"game": "infinite_eq"})
    game = PseudoGradientGame(
        gradient=bundle.pseudo_gradient, omega=bundle.omega, lipschitz=bundle.lipschitz
    )
    x = extragradient(game, np.zeros(2))
    np.testing.assert_allclose(x, [0.75, 0.25], atol=1e-8)
    assert float(np.sum(x)) <= 1.0 + 1e-12


def test_extragradient_bandwidth_sharing_reference():
    bundle = make_game({"game": "internet", "n_agents": 10})
    game = PseudoGradientGame(gradient=bundle.pseudo_gradient, omega=bundle.omega)
    x = extragradient(game, np.full(10, 0.05), tol=1e-12)
    assert contains(bundle.omega, x)
    assert 0.3 - 1e-12 <= float(x[0]) <= 0.5 + 1e-12
    assert natural_residual(game, x, 1e-2) <= 1e-10


def test_extragradient_budget_exhaustion_carries_best():
    bundle = make_game({"game": "quadratic10"})
    game = PseudoGradientGame(
        gradient=bundle.pseudo_gradient, omega=bundle.omega, lipschitz=bundle.lipschitz
    )
    with pytest.raises(OracleNotConverged, match="not converged") as err:
        extragradient(game, np.full(10, 100.0), max_iter=3)
    best = err.value.best
    assert best.shape == (10,)
    assert contains(bundle.omega, best)
    assert natural_residual(game, best, 0.9 / 11.0) > 1e-10


def test_extragradient_rejects_non_finite_gradient():
    game = PseudoGradientGame(
        gradient=lambda x: np.full(2, np.nan), omega=box(np.zeros(2), np.ones(2))
    )
    with pytest.raises(ValueError):
        extragradient(game, np.full(2, 0.5))


def test_natural_residual_zero_at_equilibrium():
    bundle = make_game({"game": "quadratic10"})
    game = PseudoGradientGame(
        gradient=bundle.pseudo_gradient, omega=bundle.omega, lipschitz=bundle.lipschitz
    )
    x_star = market_equilibrium()
    assert natural_residual(game, x_star, 0.9 / 11.0) <= 1e-12
    assert natural_residual(game, x_star + 0.5, 0.9 / 11.0) > 1e-3


# ---------------- stationarity residual ----------------


def test_stationarity_residual_hand_value():
    partition = Partition((1, 1))
    profile = CollectiveProfile(partition=partition, values=np.array([0.1, 0.7]))
    oracles = [ConstAgent(0.3), ConstAgent(0.4)]
    assert stationarity_residual(profile, oracles) == pytest.approx(0.13, abs=1e-15)


def test_stationarity_residual_invariant_under_relabeling():
    partition = Partition((1, 1))
    fwd = CollectiveProfile(partition=partition, values=np.array([0.1, 0.7]))
    rev = CollectiveProfile(partition=partition, values=np.array([0.7, 0.1]))
    a, b = ConstAgent(0.3), ConstAgent(0.4)
    assert stationarity_residual(fwd, [a, b]) == stationarity_residual(rev, [b, a])


def test_stationarity_residual_zero_at_market_equilibrium():
    bundle = make_game({"game": "quadratic10"})
    profile = CollectiveProfile(partition=bundle.partition, values=market_equilibrium())
    assert stationarity_residual(profile, bundle.oracles) <= 1e-24


# ---------------- brute-force grid scan ----------------


def test_grid_scan_cycling_game_has_no_fixed_points():
    bundle = make_game({"game": "no_eq"})
    hits = brute_force_fixed_points(bundle.oracles, bundle.omega, 0.01)
    assert hits == []


def test_grid_scan_target_tracking_segment():
    bundle = make_game({"game": "infinite_eq"})
    hits = brute_force_fixed_points(
        bundle.oracles, box(np.zeros(2), np.ones(2)), 0.01
    )
    assert len(hits) == 51
    for x in hits:
        assert x[0] + x[1] == pytest.approx(1.0, abs=1e-12)
        assert 0.5 - 1e-12 <= x[0] <= 1.0 + 1e-12


def test_grid_scan_default_threshold_rejects_neighbors():
    oracles = [ConstAgent(0.5)]
    omega = box(np.array([0.0]), np.array([1.0]))
    hits = brute_force_fixed_points(oracles, omega, 0.1)
    assert len(hits) == 1
    assert hits[0][0] == pytest.approx(0.5, abs=1e-12)
    loose = brute_force_fixed_points(oracles, omega, 0.1, threshold=0.02)
    assert len(loose) == 3


def test_grid_scan_guards():
    quad = make_game({"game": "quadratic10"})
    with pytest.raises(ValueError, match="oracle scale exceeded"):
        brute_force_fixed_points(quad.oracles, quad.omega, 0.5)
    halfspace = make_game({"game": "infinite_eq"}).omega
    with pytest.raises(ValueError, match="box"):
        brute_force_fixed_points([ConstAgent(0.5), ConstAgent(0.5)], halfspace, 0.1)
    omega = box(np.zeros(1), np.ones(1))
    with pytest.raises(ValueError, match="positive"):
        brute_force_fixed_points([ConstAgent(0.5)], omega, 0.0)
    with pytest.raises(ValueError, match="dimension"):
        brute_force_fixed_points([ConstAgent(0.5)], box(np.zeros(2), np.ones(2)), 0.1)
    unbounded = Polytope(lower=np.array([-np.inf]), upper=np.array([1.0]))
    with pytest.raises(ValueError, match="finite"):
        brute_force_fixed_points([ConstAgent(0.5)], unbounded, 0.1)
