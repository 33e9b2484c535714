import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsroute.game import (
    GameInstance,
    Strategy,
    abstract_game,
    best_response,
    best_response_dynamics,
    costs,
    equilibria_and_optima,
    example_nonselfish,
    geometric_game,
    is_nash,
    loop_free_count,
    relay_insertion_monotonicity_check,
    remove_loops,
    trajectory_costs,
)
from gibbsroute.geometry import Geometry, UserConfiguration
from gibbsroute.pathloss import ShiftedPower

F = Fraction


def test_cost_table():
    g = example_nonselfish()
    assert costs(g, (0, 0, 0))[1] == 7
    assert costs(g, (0, 0, 1))[1] == 6
    assert costs(g, (0, 1, 0))[1] == 6
    assert costs(g, (0, 1, 1))[1] == F(13, 2)
    assert costs(g, (0, 1, 1))[0] == [1, F(11, 4), F(11, 4)]


def test_unique_equilibrium_and_optima():
    rep = equilibria_and_optima(example_nonselfish())
    assert rep.nash == [(0, 1, 1)] and rep.nash_costs == [F(13, 2)]
    assert sorted(rep.optima) == [(0, 0, 1), (0, 1, 0)]
    assert rep.optimum_cost == 6 and rep.non_selfish
    d = rep.to_dict()
    assert d["nash_costs"] == ["13/2"] and json.dumps(d)


def test_three_equilibria_when_beta_equals_q():
    rep = equilibria_and_optima(example_nonselfish(q=1, beta=1))
    assert len(rep.nash) == 3
    assert not rep.non_selfish


def test_best_response_dynamics_from_direct():
    run = best_response_dynamics(example_nonselfish())
    assert run.profile == (0, 1, 1) and run.nash
    assert run.potentials == [7, 6, F(23, 4)]


def random_game(draw_costs, beta):
    # player i may go direct or through any single other player
    n = len(draw_costs)
    S = []
    for i in range(n):
        row = [Strategy((F(draw_costs[i][0]),), (), "direct")]
        for j in range(n):
            if j != i:
                row.append(Strategy((F(draw_costs[i][1]), F(draw_costs[j][0])), (j,)))
        S.append(row)
    return GameInstance(S, F(beta), exact=True)


costs_st = st.lists(st.tuples(st.integers(1, 9), st.integers(1, 9)), min_size=2, max_size=4)


@settings(max_examples=60, deadline=None)
@given(costs_st, st.integers(0, 6), st.data())
def test_potential_is_exact(cs, beta, data):
    g = random_game(cs, beta)
    prof = [data.draw(st.integers(0, len(S) - 1)) for S in g.strategies]
    i = data.draw(st.integers(0, g.n - 1))
    s = data.draw(st.integers(0, len(g.strategies[i]) - 1))
    Ci, _, Phi = costs(g, prof)
    p2 = list(prof)
    p2[i] = s
    Ci2, _, Phi2 = costs(g, p2)
    assert Phi2 - Phi == Ci2[i] - Ci[i]


@settings(max_examples=40, deadline=None)
@given(costs_st, st.integers(0, 6))
def test_dynamics_reach_equilibrium(cs, beta):
    g = random_game(cs, beta)
    run = best_response_dynamics(g)
    assert run.nash and is_nash(g, run.profile)
    assert all(b < a for a, b in zip(run.potentials, run.potentials[1:]))
    assert all(g.leq(costs(g, run.profile)[0][i], costs(g, [*run.profile[:i], s, *run.profile[i + 1 :]])[0][i])
               for i in range(g.n) for s in range(len(g.strategies[i])))


def test_best_response_tie_rule():
    S = [[Strategy((F(1),), ()), Strategy((F(1),), ())]]
    g = GameInstance(S, F(0), exact=True)
    assert best_response(g, (1,), 0) == 1
    assert best_response(g, (0,), 0) == 0


def test_invalid_games():
    with pytest.raises(ValueError):
        GameInstance([], 0)
    with pytest.raises(ValueError):
        GameInstance([[Strategy((0,), ())]], 0)


def test_abstract_json_roundtrip(tmp_path):
    spec = {
        "players": ["A", "B"],
        "strategies": [[{"hops": ["1"]}, {"hops": ["1/2", "1/2"], "relays": [1]}], [{"hops": [2]}]],
        "beta": "3/4",
    }
    p = tmp_path / "g.json"
    p.write_text(json.dumps(spec))
    for src in (spec, json.dumps(spec), str(p)):
        g = abstract_game(src)
        assert g.names == ["A", "B"] and g.beta == F(3, 4)
        assert costs(g, (1, 0))[1] == 3


@pytest.fixture(scope="module")
def geo_game():
    rng = np.random.default_rng(4)
    users = UserConfiguration(1.0, rng.uniform(-2, 2, (4, 1)))
    geom = Geometry(d=1, radius=2.0, gamma=1.0, beta=0.4, kmax=3)
    return geometric_game(users, geom, ShiftedPower(1, 4))


def test_geometric_strategy_counts(geo_game):
    assert loop_free_count(4, 3) == 1 + 3 + 6
    assert all(len(S) == loop_free_count(4, 3) for S in geo_game.strategies)


def test_geometric_costs_match_trajectory_costs(geo_game):
    rng = np.random.default_rng(0)
    for _ in range(20):
        prof = [int(rng.integers(len(S))) for S in geo_game.strategies]
        trajs = [geo_game.strategies[i][s].relays for i, s in enumerate(prof)]
        Ci, C, _ = costs(geo_game, prof)
        Ci2, C2 = trajectory_costs(geo_game.sirinv, trajs, 1.0, 0.4)
        assert np.allclose(Ci, Ci2) and C == pytest.approx(C2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 3), max_size=4), min_size=4, max_size=4))
def test_loop_removal_never_costs_more(geo_game, trajs):
    cut = [remove_loops(i, r) for i, r in enumerate(trajs)]
    assert all(i not in c and len(set(c)) == len(c) for i, c in enumerate(cut))
    Ci, C = trajectory_costs(geo_game.sirinv, trajs, 1.0, 0.4)
    Ci2, C2 = trajectory_costs(geo_game.sirinv, cut, 1.0, 0.4)
    assert C2 <= C + 1e-12
    assert all(b <= a + 1e-12 for a, b in zip(Ci, Ci2))


def test_relay_insertion_monotone(geo_game):
    res = relay_insertion_monotonicity_check(geo_game, samples=500, seed=1)
    assert res["checked"] == 500 and res["counterexamples"] == []


def test_pruning_keeps_equilibria(geo_game):
    users = UserConfiguration(1.0, np.random.default_rng(4).uniform(-2, 2, (4, 1)))
    geom = Geometry(d=1, radius=2.0, gamma=1.0, beta=0.4, kmax=2)
    full = geometric_game(users, geom, ShiftedPower(1, 4))
    pruned = geometric_game(users, geom, ShiftedPower(1, 4), prune=True)
    assert sum(len(S) for S in pruned.strategies) <= sum(len(S) for S in full.strategies)
    cf = sorted(round(float(c), 9) for c in equilibria_and_optima(full).nash_costs)
    cp = sorted(round(float(c), 9) for c in equilibria_and_optima(pruned).nash_costs)
    assert cf == cp
