"""Finite-density Gibbs model over message trajectories.

Every user X_i sends one message to o along a trajectory
``X_i -> X_{r_1} -> ... -> X_{r_{k-1}} -> o`` with 1 <= k <= kmax; relays are
arbitrary user indices (repeats and loops allowed).  The a priori law picks k
uniformly and the relays i.i.d. uniformly, so a k-hop trajectory has prior
mass ``N**(1-k) / kmax``.  The Gibbs weight multiplies this by
``exp(-gamma S - beta M)`` with

    S = sum over hops of SIR^-1,     M = sum_j m_j (m_j - 1),

where m_j is the number of hops entering user j.

Trajectories of one user are indexed by ``offset[k] + code``, code being the
relay sequence in base N (first relay most significant).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import itertools
import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .geometry import Geometry, UserConfiguration, sir_inverse_table
from .pathloss import PathLoss

__all__ = [
    "BudgetError",
    "KernelUnavailableError",
    "TrajectorySpace",
    "GibbsModel",
    "ChainState",
    "Trace",
    "ExactDistribution",
    "congestion_energy",
    "relay_counts",
]

ENUMERATION_BUDGET = 10**7
GIBBS_KERNEL_BUDGET = 10**6


class BudgetError(ValueError):
    def __init__(self, what: str, count: int, budget: int):
        super().__init__(f"{what}: {count} states exceed the budget of {budget}")
        self.count = count
        self.budget = budget


class KernelUnavailableError(BudgetError):
    pass


def relay_counts(relays: Sequence[Sequence[int]], N: int) -> np.ndarray:
    """m_j: number of hops entering user j."""
    m = np.zeros(N, dtype=np.int64)
    for r in relays:
        for j in r:
            m[j] += 1
    return m


def congestion_energy(m) -> int:
    m = np.asarray(m, dtype=np.int64)
    return int(np.sum(m * (m - 1)))


class TrajectorySpace:
    """All trajectories of a single user for given N and kmax."""

    def __init__(self, N: int, kmax: int):
        if N < 1:
            raise ValueError("need at least one user")
        self.N = int(N)
        self.kmax = int(kmax)
        sizes = [self.N ** (k - 1) for k in range(1, self.kmax + 1)]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.size = int(self.offsets[-1])

    def hops(self, idx: int) -> int:
        return int(np.searchsorted(self.offsets, idx, side="right"))

    def relays(self, idx: int) -> tuple:
        k = self.hops(idx)
        code = int(idx - self.offsets[k - 1])
        out = []
        for _ in range(k - 1):
            code, rem = divmod(code, self.N)
            out.append(rem)
        return tuple(reversed(out))

    def index(self, relays: Sequence[int]) -> int:
        k = len(relays) + 1
        if k > self.kmax:
            raise ValueError("trajectory longer than kmax")
        code = 0
        for j in relays:
            if not 0 <= j < self.N:
                raise IndexError(j)
            code = code * self.N + int(j)
        return int(self.offsets[k - 1] + code)

    def all_relays(self) -> list:
        return [self.relays(t) for t in range(self.size)]

    def log_prior(self) -> np.ndarray:
        """log of N**(1-k) / kmax per trajectory index."""
        k = np.array([self.hops(t) for t in range(self.size)])
        return (1 - k) * math.log(self.N) - math.log(self.kmax)

    def count_matrix(self) -> np.ndarray:
        """C[t, j] = multiplicity of user j among the relays of t."""
        C = np.zeros((self.size, self.N), dtype=np.int64)
        for t, r in enumerate(self.all_relays()):
            for j in r:
                C[t, j] += 1
        return C

    def sample(self, rng: np.random.Generator) -> int:
        k = int(rng.integers(1, self.kmax + 1))
        return int(self.offsets[k - 1] + rng.integers(0, self.N ** (k - 1)))


class GibbsModel:
    """Users, SIR table and weights (gamma, beta) of the finite Gibbs model."""

    def __init__(self, users: UserConfiguration, geom: Geometry, model: PathLoss, gamma: Optional[float] = None, beta: Optional[float] = None):
        self.users = users
        self.geom = geom
        self.model = model
        self.gamma = geom.gamma if gamma is None else float(gamma)
        self.beta = geom.beta if beta is None else float(beta)
        self.N = users.N
        self.space = TrajectorySpace(self.N, geom.kmax)
        self.sirinv = sir_inverse_table(users, model)
        rel = self.space.all_relays()
        self.relay_lists = rel
        self.S_table = np.array([[self._path_cost(i, r) for r in rel] for i in range(self.N)])
        self.counts = self.space.count_matrix()
        self.log_prior = self.space.log_prior()
        # sum_j c(c-1): congestion created by a single trajectory on its own
        self.self_pairs = np.sum(self.counts * (self.counts - 1), axis=1)

    def _path_cost(self, i: int, relays: Sequence[int]) -> float:
        pts = [i, *relays]
        tot = 0.0
        for a, b in zip(pts, pts[1:]):
            tot += self.sirinv[a, b]
        return float(tot + self.sirinv[pts[-1], self.N])

    # -- energies ---------------------------------------------------------
    def energy(self, config: Sequence[int]) -> tuple[float, int]:
        """(S, M) of a configuration given as one trajectory index per user."""
        S = float(sum(self.S_table[i, t] for i, t in enumerate(config)))
        m = self.counts[np.asarray(config, dtype=np.int64)].sum(axis=0)
        return S, congestion_energy(m)

    def total_energy(self, config, gamma: Optional[float] = None, beta: Optional[float] = None) -> float:
        g = self.gamma if gamma is None else gamma
        b = self.beta if beta is None else beta
        S, M = self.energy(config)
        return g * S + b * M

    def log_prior_config(self, config) -> float:
        return float(sum(self.log_prior[t] for t in config))

    def log_weight(self, config) -> float:
        return self.log_prior_config(config) - self.total_energy(config)

    def trajectories(self, config) -> list:
        return [self.relay_lists[t] for t in config]

    # -- exact law ----------------------------------------------------------
    def n_states(self) -> int:
        return self.space.size**self.N

    def enumerate_exact(self, budget: int = ENUMERATION_BUDGET, chunk: int = 200000) -> "ExactDistribution":
        """Exact Gibbs probabilities over all configurations (mixed radix order)."""
        n = self.n_states()
        if n > budget:
            raise BudgetError("exact enumeration", n, budget)
        T = self.space.size
        logw = np.empty(n)
        for start in range(0, n, chunk):
            idx = np.arange(start, min(n, start + chunk))
            digits = _digits(idx, T, self.N)
            S = np.zeros(len(idx))
            lp = np.zeros(len(idx))
            m = np.zeros((len(idx), self.N), dtype=np.int64)
            for i in range(self.N):
                S += self.S_table[i, digits[:, i]]
                lp += self.log_prior[digits[:, i]]
                m += self.counts[digits[:, i]]
            M = np.sum(m * (m - 1), axis=1)
            logw[start : start + len(idx)] = lp - self.gamma * S - self.beta * M
        logZ = float(logsumexp(logw))
        return ExactDistribution(self, np.exp(logw - logZ), logZ)

    def enumerate_exact_nested(self) -> "ExactDistribution":
        """Second enumeration order (itertools product, one state at a time)."""
        n = self.n_states()
        if n > 10**6:
            raise BudgetError("nested enumeration", n, 10**6)
        T = self.space.size
        logw = np.empty(n)
        for cfg in itertools.product(range(T), repeat=self.N):
            logw[_encode(cfg, T)] = self.log_weight(cfg)
        logZ = float(logsumexp(logw))
        return ExactDistribution(self, np.exp(logw - logZ), logZ)

    def decode(self, state: int) -> tuple:
        return tuple(int(v) for v in _digits(np.array([state]), self.space.size, self.N)[0])

    def encode(self, config) -> int:
        return _encode(config, self.space.size)

    # -- kernels -------------------------------------------------------------
    def conditional_log_weights(self, config, i: int, gamma: Optional[float] = None, beta: Optional[float] = None) -> np.ndarray:
        """log of the unnormalized conditional law of user i's trajectory."""
        g = self.gamma if gamma is None else gamma
        b = self.beta if beta is None else beta
        others = [t for j, t in enumerate(config) if j != i]
        m_minus = self.counts[np.asarray(others, dtype=np.int64)].sum(axis=0) if others else np.zeros(self.N, dtype=np.int64)
        dM = 2 * self.counts @ m_minus + self.self_pairs
        return self.log_prior - g * self.S_table[i] - b * dM

    def transition_probability(self, s, s2) -> float:
        """Metropolis kernel P(s -> s2) for configurations differing in at most one user."""
        s, s2 = tuple(s), tuple(s2)
        diff = [i for i in range(self.N) if s[i] != s2[i]]
        if len(diff) > 1:
            return 0.0
        E0 = self.total_energy(s)
        if len(diff) == 1:
            i = diff[0]
            q = math.exp(self.log_prior[s2[i]]) / self.N
            return q * min(1.0, math.exp(-(self.total_energy(s2) - E0)))
        # stay: rejections plus self proposals
        stay = 0.0
        for i in range(self.N):
            for t in range(self.space.size):
                c = list(s)
                c[i] = t
                q = math.exp(self.log_prior[t]) / self.N
                if t == s[i]:
                    stay += q
                else:
                    stay += q * (1.0 - min(1.0, math.exp(-(self.total_energy(c) - E0))))
        return stay

    def initial_state(self, seed: int = 0, config=None, kernel: str = "metropolis") -> "ChainState":
        rng = np.random.default_rng(seed)
        if config is None:
            config = [self.space.sample(rng) for _ in range(self.N)]
        return ChainState(self, list(config), rng, kernel=kernel)


def _digits(idx: np.ndarray, base: int, n: int) -> np.ndarray:
    out = np.empty((len(idx), n), dtype=np.int64)
    rem = idx.astype(np.int64).copy()
    for i in range(n):
        out[:, i] = rem % base
        rem //= base
    return out


def _encode(config, base: int) -> int:
    s = 0
    for i in reversed(range(len(config))):
        s = s * base + int(config[i])
    return s


@dataclass
class ExactDistribution:
    model: GibbsModel
    probs: np.ndarray
    log_Z: float

    def prob(self, config) -> float:
        return float(self.probs[self.model.encode(config)])

    def user_marginals(self) -> np.ndarray:
        """(N, T) table: law of each user's trajectory index."""
        m = self.model
        T = m.space.size
        P = self.probs.reshape((T,) * m.N)  # axis order reversed: last axis is user 0
        out = np.empty((m.N, T))
        for i in range(m.N):
            ax = m.N - 1 - i
            out[i] = P.sum(axis=tuple(a for a in range(m.N) if a != ax))
        return out

    def hop_marginals(self) -> np.ndarray:
        """(N, kmax) table of per-user hop-count laws."""
        sp = self.model.space
        um = self.user_marginals()
        return np.stack([um[:, sp.offsets[k] : sp.offsets[k + 1]].sum(axis=1) for k in range(sp.kmax)], axis=1)

    def product_deviation(self) -> float:
        """max |P(s) - prod_i P_i(s_i)| over all states."""
        m = self.model
        um = self.user_marginals()
        # mixed-radix order: state = sum_i t_i T^i, so user 0 varies fastest
        full = np.ones(1)
        for i in range(m.N):
            full = np.multiply.outer(um[i], full).ravel()
        return float(np.max(np.abs(self.probs - full)))

    def minimizers(self, gamma=None, beta=None, tol: float = 1e-12) -> list:
        m = self.model
        n = m.n_states()
        E = np.array([m.total_energy(m.decode(s), gamma, beta) for s in range(n)])
        e0 = E.min()
        return [m.decode(s) for s in np.nonzero(E <= e0 + tol * max(1.0, abs(e0)))[0]]


@dataclass
class Trace:
    steps: list = field(default_factory=list)
    S: list = field(default_factory=list)
    M: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def hop_histogram(self, space: TrajectorySpace) -> np.ndarray:
        h = np.zeros(space.kmax, dtype=np.int64)
        for cfg in self.states:
            for t in cfg:
                h[space.hops(t) - 1] += 1
        return h

    def m_histogram(self, counts: np.ndarray) -> np.ndarray:
        vals = []
        for cfg in self.states:
            vals.extend(counts[np.asarray(cfg)].sum(axis=0).tolist())
        return np.bincount(np.asarray(vals, dtype=np.int64)) if vals else np.zeros(0, dtype=np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,S_energy,M_energy,accepted\n")
            for s, a, b, c in zip(self.steps, self.S, self.M, self.accepted):
                fh.write(f"{s},{a:.17g},{b},{int(c)}\n")


class ChainState:
    """Mutable chain position with cached m_j, S and M."""

    def __init__(self, model: GibbsModel, config: list, rng: np.random.Generator, kernel: str = "metropolis", debug: bool = False):
        if kernel not in ("metropolis", "gibbs"):
            raise ValueError(f"unknown kernel {kernel!r}")
        if kernel == "gibbs" and model.space.size > GIBBS_KERNEL_BUDGET:
            raise KernelUnavailableError("gibbs kernel conditional", model.space.size, GIBBS_KERNEL_BUDGET)
        self.model = model
        self.config = list(config)
        self.rng = rng
        self.kernel = kernel
        self.debug = debug
        self.step_count = 0
        self.gamma = model.gamma
        self.beta = model.beta
        self.m = [int(v) for v in model.counts[np.asarray(self.config)].sum(axis=0)]
        self.S = float(sum(model.S_table[i, t] for i, t in enumerate(self.config)))
        self.Mval = int(sum(v * (v - 1) for v in self.m))

    @property
    def energy(self) -> float:
        return self.gamma * self.S + self.beta * self.Mval

    def recount_ok(self) -> bool:
        S, M = self.model.energy(self.config)
        m = self.model.counts[np.asarray(self.config)].sum(axis=0)
        return bool(np.array_equal(m, self.m) and M == self.Mval and abs(S - self.S) <= 1e-9 * max(1.0, abs(S)))

    def _delta_M(self, old: int, new: int) -> int:
        # sequential updates of the cached counts; undone afterwards
        m = self.m
        rel = self.model.relay_lists
        dM = 0
        for j in rel[old]:
            m[j] -= 1
            dM -= 2 * m[j]
        for j in rel[new]:
            dM += 2 * m[j]
            m[j] += 1
        for j in rel[new]:
            m[j] -= 1
        for j in rel[old]:
            m[j] += 1
        return dM

    def _apply(self, i: int, new: int, dS: float, dM: int):
        rel = self.model.relay_lists
        old = self.config[i]
        for j in rel[old]:
            self.m[j] -= 1
        for j in rel[new]:
            self.m[j] += 1
        self.config[i] = new
        self.S += dS
        self.Mval += dM

    def step(self) -> bool:
        """One kernel move; returns whether the configuration changed."""
        model = self.model
        rng = self.rng
        i = int(rng.integers(model.N))
        old = self.config[i]
        if self.kernel == "metropolis":
            new = model.space.sample(rng)
            dS = float(model.S_table[i, new] - model.S_table[i, old])
            dM = self._delta_M(old, new)
            dE = self.gamma * dS + self.beta * dM
            u = rng.random()
            acc = dE <= 0 or u < math.exp(-dE)
        else:
            lw = model.conditional_log_weights(self.config, i, self.gamma, self.beta)
            p = np.exp(lw - logsumexp(lw))
            new = int(rng.choice(len(p), p=p))
            dS = float(model.S_table[i, new] - model.S_table[i, old])
            dM = self._delta_M(old, new)
            acc = True
        self.step_count += 1
        changed = bool(acc and new != old)
        if acc:
            self._apply(i, new, dS, dM)
        if self.debug and self.step_count % 1000 == 0 and not self.recount_ok():
            raise AssertionError("m_j cache diverged from recount")
        return changed


def run_chain(state: ChainState, steps: int, thin: int = 1, burn_in: int = 0, collect_histogram: bool = False):
    """Advance the chain and record every `thin`-th post-burn-in state.

    Returns ``(trace, histogram)``; the histogram is the visit count per
    encoded state (over every post-burn-in step) when requested.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    model = state.model
    trace = Trace()
    hist = np.zeros(model.n_states(), dtype=np.int64) if collect_histogram else None
    T = model.space.size
    weights = [T**i for i in range(model.N)]
    code = sum(t * w for t, w in zip(state.config, weights))
    for n in range(1, burn_in + steps + 1):
        changed = state.step()
        if collect_histogram and changed:
            code = sum(t * w for t, w in zip(state.config, weights))
        if n <= burn_in:
            continue
        if hist is not None:
            hist[code] += 1
        if thin > 0 and (n - burn_in) % thin == 0:
            trace.steps.append(state.step_count)
            trace.S.append(state.S)
            trace.M.append(state.Mval)
            trace.accepted.append(changed)
            trace.states.append(tuple(state.config))
    return trace, hist


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p, float) - np.asarray(q, float))))


def anneal_schedule(t, gamma: float, beta: float, c0: float, cap: Optional[float] = None):
    """(gamma_t, beta_t) = s_t (gamma, beta) with s_t = c0 log(t+1) / max(gamma, beta).

    The ratio beta_t / gamma_t stays beta / gamma and max(gamma_t, beta_t) =
    c0 log(t+1).  With `cap` the scale is clipped at cap (cap=1 stops at the
    target weights).
    """
    s = c0 * np.log1p(np.asarray(t, float)) / max(gamma, beta)
    if cap is not None:
        s = np.minimum(s, cap)
    return s * gamma, s * beta


def anneal(model: GibbsModel, t_max: int, c0: Optional[float] = None, seed: int = 0, cap: Optional[float] = None, config=None):
    """Metropolis with increasing weights; returns (best config, its gamma S + beta M).

    Default c0 is lambda / N**2.
    """
    if c0 is None:
        c0 = model.users.lam / model.N**2
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    state = model.initial_state(seed, config)
    best = tuple(state.config)
    best_E = model.total_energy(best)
    g, b = model.gamma, model.beta
    gm = max(g, b)
    for t in range(t_max):
        s = c0 * math.log(t + 1) / gm
        if cap is not None:
            s = min(s, cap)
        state.gamma, state.beta = s * g, s * b
        state.step()
        E = g * state.S + b * state.Mval
        if E < best_E - 1e-12:
            best_E = E
            best = tuple(state.config)
    return best, float(best_E)
