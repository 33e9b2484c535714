"""Selfish routeing as an atomic congestion game.

Player i chooses a loop-free path from X_i to o.  A hop has a fixed cost
(gamma SIR^-1 in geometric mode) and every relay j used by the path costs
beta (m_j - 1), m_j being the number of hops entering j.  Hence

    C_i = gamma sum(hops of i) + beta sum_{j relay of i} (m_j - 1)
    C   = sum_i C_i = gamma sum(all hops) + beta sum_j m_j (m_j - 1)

and the Rosenthal potential is Phi = gamma sum(all hops) + beta/2 sum_j m_j (m_j - 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import itertools
import json
import math
from typing import Optional, Sequence

import numpy as np

from .geometry import Geometry, UserConfiguration, sir_inverse_table
from .pathloss import PathLoss

__all__ = [
    "Strategy",
    "GameInstance",
    "BudgetError",
    "costs",
    "best_response_dynamics",
    "equilibria_and_optima",
    "relay_insertion_monotonicity_check",
    "example_nonselfish",
    "geometric_game",
    "abstract_game",
    "trajectory_costs",
    "remove_loops",
]

PROFILE_BUDGET = 10**7


class BudgetError(ValueError):
    pass


def _num(v, exact: bool):
    if exact:
        return v if isinstance(v, Fraction) else Fraction(str(v))
    return float(v)


@dataclass(frozen=True)
class Strategy:
    """A path: per-hop fixed costs and the relay identities it passes through."""

    hops: tuple
    relays: tuple
    label: str = ""

    @property
    def n_hops(self) -> int:
        return len(self.hops)


@dataclass
class GameInstance:
    strategies: list  # strategies[i] = list of Strategy
    beta: object
    gamma: object = 1
    exact: bool = False
    names: Optional[list] = None
    slack: float = 1e-12

    def __post_init__(self):
        if not self.strategies:
            raise ValueError("need at least one player")
        for i, S in enumerate(self.strategies):
            if not S:
                raise ValueError(f"player {i} has no strategy")
            for s in S:
                if any(not h > 0 for h in s.hops):
                    raise ValueError("hop costs must be positive")
        self.beta = _num(self.beta, self.exact)
        self.gamma = _num(self.gamma, self.exact)
        if self.names is None:
            self.names = [f"X{i + 1}" for i in range(self.n)]
        self.fixed = [[self.gamma * sum(s.hops, _num(0, self.exact)) for s in S] for S in self.strategies]

    @property
    def n(self) -> int:
        return len(self.strategies)

    def n_profiles(self) -> int:
        return math.prod(len(S) for S in self.strategies)

    def profiles(self):
        return itertools.product(*[range(len(S)) for S in self.strategies])

    def counts(self, profile) -> dict:
        m: dict = {}
        for i, si in enumerate(profile):
            for j in self.strategies[i][si].relays:
                m[j] = m.get(j, 0) + 1
        return m

    def leq(self, a, b) -> bool:
        return a <= b if self.exact else a <= b + self.slack

    def lt(self, a, b) -> bool:
        return a < b if self.exact else a < b - self.slack


def costs(game: GameInstance, profile):
    """(C_1..C_n, C, Phi) for a profile given as one strategy index per player."""
    m = game.counts(profile)
    b = game.beta
    Ci = []
    for i, si in enumerate(profile):
        s = game.strategies[i][si]
        Ci.append(game.fixed[i][si] + b * sum((m[j] - 1 for j in s.relays), _num(0, game.exact)))
    hop_total = sum((game.fixed[i][si] for i, si in enumerate(profile)), _num(0, game.exact))
    cong = sum((v * (v - 1) for v in m.values()), 0)
    C = hop_total + b * cong
    half = Fraction(1, 2) if game.exact else 0.5
    Phi = hop_total + half * b * cong
    return Ci, C, Phi


def _individual_cost(game: GameInstance, profile, i: int, si: int):
    p = list(profile)
    p[i] = si
    return costs(game, p)[0][i]


def best_response(game: GameInstance, profile, i: int) -> int:
    """Best strategy of player i; keeps the current one on ties, else the lowest index."""
    cur = profile[i]
    vals = [_individual_cost(game, profile, i, s) for s in range(len(game.strategies[i]))]
    best = min(vals)
    if game.leq(vals[cur], best):
        return cur
    for s, v in enumerate(vals):
        if game.leq(v, best):
            return s
    return cur


def is_nash(game: GameInstance, profile) -> bool:
    base = costs(game, profile)[0]
    for i in range(game.n):
        for s in range(len(game.strategies[i])):
            if game.lt(_individual_cost(game, profile, i, s), base[i]):
                return False
    return True


@dataclass
class BestResponseRun:
    profile: tuple
    potentials: list
    steps: int
    nash: bool


def best_response_dynamics(game: GameInstance, start=None, max_steps: Optional[int] = None) -> BestResponseRun:
    """Round-robin best responses until no player can improve."""
    prof = list(start) if start is not None else [0] * game.n
    guard = max_steps if max_steps is not None else game.n_profiles() * game.n + 1
    pots = [costs(game, prof)[2]]
    steps = 0
    while True:
        moved = False
        for i in range(game.n):
            b = best_response(game, prof, i)
            if b != prof[i]:
                prof[i] = b
                pots.append(costs(game, prof)[2])
                steps += 1
                moved = True
                if steps > guard:
                    raise RuntimeError("best-response dynamics exceeded the step guard")
        if not moved:
            break
    prof = tuple(prof)
    return BestResponseRun(prof, pots, steps, is_nash(game, prof))


@dataclass
class EquilibriumReport:
    nash: list
    nash_costs: list
    optima: list
    optimum_cost: object
    non_selfish: bool

    def to_dict(self) -> dict:
        f = lambda v: str(v) if isinstance(v, Fraction) else float(v)
        return {
            "nash": [list(p) for p in self.nash],
            "nash_costs": [f(c) for c in self.nash_costs],
            "optima": [list(p) for p in self.optima],
            "optimum_cost": f(self.optimum_cost),
            "non_selfish": self.non_selfish,
        }


def equilibria_and_optima(game: GameInstance, budget: int = PROFILE_BUDGET) -> EquilibriumReport:
    """Exhaustive scan for pure Nash equilibria and system optima."""
    n = game.n_profiles()
    if n > budget:
        raise BudgetError(f"{n} profiles exceed the budget of {budget}")
    nash, nash_c = [], []
    best_c = None
    optima = []
    for p in game.profiles():
        C = costs(game, p)[1]
        if best_c is None or game.lt(C, best_c):
            best_c, optima = C, [p]
        elif game.leq(C, best_c):
            optima.append(p)
        if is_nash(game, p):
            nash.append(p)
            nash_c.append(C)
    non_selfish = any(all(game.lt(costs(game, o)[1], c) for c in nash_c) for o in optima)
    return EquilibriumReport(nash, nash_c, optima, best_c, non_selfish)


def relay_insertion_monotonicity_check(game: GameInstance, samples: int = 1000, seed: int = 0) -> dict:
    """Test that inserting a relay raises C whenever it raises the mover's C_i.

    Pairs (s, s') of one player's strategies where s' is s with one extra
    relay are sampled together with random opponents' strategies.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for i, S in enumerate(game.strategies):
        for a, sa in enumerate(S):
            for b, sb in enumerate(S):
                if len(sb.relays) == len(sa.relays) + 1 and _is_insertion(sa.relays, sb.relays):
                    pairs.append((i, a, b))
    checked = 0
    bad = []
    if not pairs:
        return {"checked": 0, "counterexamples": []}
    for _ in range(samples):
        i, a, b = pairs[int(rng.integers(len(pairs)))]
        prof = [int(rng.integers(len(S))) for S in game.strategies]
        prof[i] = a
        Ca, Ta, _ = costs(game, prof)
        prof2 = list(prof)
        prof2[i] = b
        Cb, Tb, _ = costs(game, prof2)
        checked += 1
        if game.lt(Ca[i], Cb[i]) and not game.lt(Ta, Tb):
            bad.append((tuple(prof), i, b))
    return {"checked": checked, "counterexamples": bad}


def _is_insertion(short: tuple, long: tuple) -> bool:
    return any(long[:k] + long[k + 1 :] == short for k in range(len(long)))


# -- constructors ---------------------------------------------------------------


def example_nonselfish(q=1, beta=Fraction(3, 4), gamma=1) -> GameInstance:
    """Three users: X1 sends directly at cost 1; X2, X3 go direct at 2 + q or via X1 at 1 + 1.

    The direct weight 2 + q is the one that reproduces the cost table
    (C = 5 + 2q with both direct).
    """
    q = Fraction(str(q)) if not isinstance(q, Fraction) else q
    one = Fraction(1)
    s1 = [Strategy((one,), (), "direct")]
    s23 = [Strategy((2 + q,), (), "direct"), Strategy((one, one), (0,), "via X1")]
    return GameInstance([s1, list(s23), list(s23)], beta, gamma, exact=True, names=["X1", "X2", "X3"])


def _loop_free_paths(N: int, i: int, kmax: int):
    others = [j for j in range(N) if j != i]
    for k in range(1, kmax + 1):
        for rel in itertools.permutations(others, k - 1):
            yield rel


def loop_free_count(N: int, kmax: int) -> int:
    """Number of loop-free paths of at most kmax hops from one of N users."""
    return sum(math.perm(N - 1, k - 1) for k in range(1, kmax + 1))


def geometric_game(users: UserConfiguration, geom: Geometry, model: PathLoss, gamma=None, beta=None, prune: bool = False) -> GameInstance:
    """Game with hop costs gamma SIR^-1 between users and to o.

    With `prune`, strategies through a relay whose hop costs exceed the
    direct hop are removed (they are dominated for every opponent profile).
    """
    N = users.N
    if N > 12 or geom.kmax > 3:
        raise BudgetError("geometric games need N <= 12 and kmax <= 3")
    T = sir_inverse_table(users, model)
    g = geom.gamma if gamma is None else gamma
    b = geom.beta if beta is None else beta
    strategies = []
    for i in range(N):
        S = []
        for rel in _loop_free_paths(N, i, geom.kmax):
            pts = [i, *rel, N]
            hops = tuple(float(T[a, c]) for a, c in zip(pts[:-1], pts[1:]))
            S.append(Strategy(hops, tuple(rel), "->".join(map(str, pts[1:-1])) or "direct"))
        if prune:
            direct = S[0].hops[0]
            S = [s for s in S if s.n_hops == 1 or sum(s.hops) < direct]
        strategies.append(S)
    game = GameInstance(strategies, b, g, exact=False, names=[f"X{i + 1}" for i in range(N)])
    game.sirinv = T
    return game


def trajectory_costs(sirinv: np.ndarray, trajectories: Sequence[Sequence[int]], gamma: float, beta: float):
    """(C_1..C_n, C) for arbitrary relay sequences, loops allowed."""
    N = sirinv.shape[0]
    m = np.zeros(N, dtype=np.int64)
    for rel in trajectories:
        for j in rel:
            m[j] += 1
    Ci = []
    for i, rel in enumerate(trajectories):
        pts = [i, *rel, N]
        hop = sum(sirinv[a, c] for a, c in zip(pts[:-1], pts[1:]))
        Ci.append(gamma * hop + beta * sum(m[j] - 1 for j in rel))
    hop_all = sum(gamma * sum(sirinv[a, c] for a, c in zip([i, *rel], [*rel, N])) for i, rel in enumerate(trajectories))
    return Ci, float(hop_all + beta * np.sum(m * (m - 1)))


def remove_loops(i: int, relays: Sequence[int]) -> tuple:
    """Cut every cycle out of the path X_i -> relays -> o (first visit kept)."""
    path = [i]
    for j in relays:
        if j in path:
            path = path[: path.index(j) + 1]
        else:
            path.append(j)
    return tuple(path[1:])


def abstract_game(spec) -> GameInstance:
    """Game from a dict / JSON string / path.

    Layout: ``{"players": [...], "strategies": [[{"hops": [...], "relays": [...]}, ...], ...],
    "beta": "3/4", "gamma": 1}``; numbers may be given as strings of fractions.
    """
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError:
            with open(spec) as fh:
                spec = json.load(fh)
    strategies = []
    for S in spec["strategies"]:
        strategies.append(
            [Strategy(tuple(Fraction(str(h)) for h in s["hops"]), tuple(s.get("relays", ())), s.get("label", "")) for s in S]
        )
    return GameInstance(
        strategies, Fraction(str(spec.get("beta", 0))), Fraction(str(spec.get("gamma", 1))), exact=True, names=spec.get("players")
    )
