"""High-density limit of the trajectory distribution.

For a transmitter at x0 the k-hop weight is::

    a_k(x0) = int prod_{l<k} mu(dx_l)/mu(W) exp(-gamma sum_{l=1}^k g(x_{l-1}, x_l)),  x_k = o

with ``1/A(x0) = sum_k a_k(x0)``.  The limiting k-hop measure is
``nu_k = mu(dx0) A(x0) prod mu(dx_l)/mu(W) exp(-gamma sum g)`` and the typical
trajectory law from x0 is ``T(k, x_1..x_{k-1}) = A(x0) mu(W)^{-(k-1)} exp(-gamma sum g)``
with respect to ``mu^{k-1}``.

All weights are handled on the log scale: at realistic distances they are
far below the double-precision range.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .geometry import Geometry, as_points, sample_mu
from .interference import build_interference_field, g_eval
from .pathloss import PathLoss
from .quadrature import log_integrate, mu_rule
from .seeds import derive_seed

__all__ = [
    "Estimate",
    "LimitKernel",
    "TypicalTrajectoryDensity",
    "RelayResult",
    "TransitionResult",
    "IncomingHopMeasure",
    "DiscretizedTrajectoryFamily",
    "AdmissibilityError",
    "minimizer_family",
    "variational_objective",
    "perturb_family",
]


@dataclass(frozen=True)
class Estimate:
    """A positive quantity stored as its logarithm.

    ``rel_stderr`` is the relative standard error (0 for quadrature) and
    ``flagged`` marks Monte Carlo values whose error exceeds the bound.
    """

    log_value: float
    rel_stderr: float = 0.0
    method: str = "exact"
    flagged: bool = False
    n_samples: int = 0

    @property
    def value(self) -> float:
        return math.exp(self.log_value) if self.log_value > -745 else 0.0

    @property
    def stderr(self) -> float:
        return self.value * self.rel_stderr


QUAD_MAX_NODES = 1_500_000


class LimitKernel:
    """Geometry, path loss and mu-interference field bundled for the limit objects.

    Parameters
    ----------
    geom : Geometry
    model : PathLoss
    gamma : float, optional
        Overrides ``geom.gamma``; 0 is allowed here and gives the a priori law.
    mc_samples : int
        Sample budget for every Monte Carlo a_k (k >= 3).
    max_rel_stderr : float
        MC estimates with a larger relative standard error are flagged.
    seed : int
    quad_tol : float
        Convergence tolerance (on log a_2) of the refined quadrature.
    """

    def __init__(
        self,
        geom: Geometry,
        model: PathLoss,
        gamma: Optional[float] = None,
        mc_samples: int = 20000,
        max_rel_stderr: float = 0.05,
        seed: int = 0,
        quad_tol: float = 1e-9,
        field=None,
        field_tol: float = 1e-7,
    ):
        if mc_samples < 1000:
            raise ValueError("Monte Carlo budget must be at least 1000 samples")
        self.geom = geom
        self.model = model
        self.gamma = geom.gamma if gamma is None else float(gamma)
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        self.mc_samples = int(mc_samples)
        self.max_rel_stderr = float(max_rel_stderr)
        self.seed = int(seed)
        self.quad_tol = float(quad_tol)
        self.field = field if field is not None else build_interference_field(geom, model, "mu", tol=field_tol)
        self.mu_W = geom.mu_total
        self.log_mu_W = math.log(self.mu_W)

    def with_gamma(self, gamma: float) -> "LimitKernel":
        return LimitKernel(
            self.geom, self.model, gamma, self.mc_samples, self.max_rel_stderr, self.seed, self.quad_tol, field=self.field
        )

    @property
    def d(self) -> int:
        return self.geom.d

    @property
    def kmax(self) -> int:
        return self.geom.kmax

    def point(self, x) -> np.ndarray:
        return as_points(x, self.d)[0]

    # -- g and path energies ---------------------------------------------
    def g(self, x, y) -> np.ndarray:
        return g_eval(self.field, self.model, x, y)

    def g_to_origin(self, x) -> np.ndarray:
        return self.g(x, np.zeros(self.d))

    def path_energy(self, x0, relays) -> np.ndarray:
        """sum_{l=1}^k g(x_{l-1}, x_l) for relay arrays of shape (n, k-1, d)."""
        d = self.d
        x0 = self.point(x0)
        relays = np.asarray(relays, float)
        if relays.ndim == 2:
            relays = relays[None] if d > 1 or relays.shape[-1] != 1 else relays[:, :, None]
        n = relays.shape[0]
        pts = np.concatenate([np.broadcast_to(x0, (n, 1, d)), relays.reshape(n, -1, d), np.zeros((n, 1, d))], axis=1)
        k = pts.shape[1] - 1
        a = pts[:, :-1].reshape(-1, d)
        b = pts[:, 1:].reshape(-1, d)
        return self.g(a, b).reshape(n, k).sum(axis=1)

    # -- a_k ------------------------------------------------------------
    def _relay_breaks(self, x0: np.ndarray) -> list:
        if self.d == 1:
            c = float(x0[0])
            br = [c, 0.0]
            if self.model.kind == "hertz":
                br += [c - 1, c + 1, -1.0, 1.0]
            if self.geom.has_delta:
                dc = float(self.geom.delta_center_array[0])
                br += [dc - self.geom.delta_radius, dc + self.geom.delta_radius]
            return br
        rho = float(np.linalg.norm(x0))
        br = [rho]
        if self.model.kind == "hertz":
            br += [1.0, rho - 1, rho + 1]
        return br

    def _log_a2(self, x0: np.ndarray) -> tuple[float, float]:
        """log a_2 by a refined composite rule.

        Refinement stops once the change in log a_2 is below quad_tol or the
        rule would exceed QUAD_MAX_NODES; returns (value, last change).  In
        d = 2 the Hertz kinks on circles about x0 and o cannot both sit on
        the polar grid, so there the cap is usually what ends refinement.
        """
        br = self._relay_breaks(x0)
        theta0 = math.atan2(x0[1], x0[0]) if self.d == 2 else 0.0
        prev = None
        n = 16 if self.d == 1 else 12
        o = np.zeros(self.d)
        err = math.inf
        while True:
            pts, w = mu_rule(self.geom, n, br, n_theta=None if self.d == 1 else 16 * n, theta0=theta0)
            e = self.g(x0, pts) + self.g(pts, o)
            cur = log_integrate(-self.gamma * e, w) - self.log_mu_W
            if prev is not None:
                err = abs(cur - prev)
                if err < self.quad_tol:
                    break
            prev = cur
            if 4 * len(w) > QUAD_MAX_NODES:
                break
            n *= 2
        return cur, err

    def _mc_log_ak(self, x0: np.ndarray, k: int, n: int, seed: int):
        rng = np.random.default_rng(seed)
        logs = []
        batch = 50000
        done = 0
        while done < n:
            m = min(batch, n - done)
            rel = sample_mu(rng, self.geom, m * (k - 1)).reshape(m, k - 1, self.d)
            logs.append(-self.gamma * self.path_energy(x0, rel))
            done += m
        lw = np.concatenate(logs)
        mx = lw.max()
        w = np.exp(lw - mx)
        mean = w.mean()
        rel_se = float(w.std(ddof=1) / math.sqrt(n) / mean) if n > 1 else math.inf
        return float(mx + math.log(mean)), rel_se

    def a_k(self, x0, k: int, n_samples: Optional[int] = None, seed: Optional[int] = None) -> Estimate:
        """a_k(x0): exact for k=1, quadrature for k=2, Monte Carlo for k >= 3."""
        if k < 1:
            raise ValueError("hop count must be >= 1")
        x0 = self.point(x0)
        if k == 1:
            return Estimate(float(-self.gamma * self.g_to_origin(x0)[0]), 0.0, "exact")
        if k == 2:
            lv, err = self._log_a2(x0)
            # the last refinement change stands in for the error
            rel = 0.0 if err < self.quad_tol else float(err)
            return Estimate(lv, rel, "quadrature", rel > self.max_rel_stderr)
        n = n_samples or self.mc_samples
        s = derive_seed(self.seed, "a_k", k, tuple(x0.tolist())) if seed is None else seed
        lv, rse = self._mc_log_ak(x0, k, n, s)
        return Estimate(lv, rse, "monte-carlo", rse > self.max_rel_stderr, n)

    def log_weights(self, x0) -> list[Estimate]:
        return [self.a_k(x0, k) for k in range(1, self.kmax + 1)]

    def normalizer_A(self, x0) -> Estimate:
        """A(x0) = 1 / sum_k a_k(x0)."""
        est = self.log_weights(x0)
        la = np.array([e.log_value for e in est])
        tot = logsumexp(la)
        share = np.exp(la - tot)
        rse = float(math.sqrt(np.sum((share * np.array([e.rel_stderr for e in est])) ** 2)))
        return Estimate(float(-tot), rse, "derived", any(e.flagged for e in est))

    def typical_density(self, x0) -> "TypicalTrajectoryDensity":
        x0 = self.point(x0)
        est = self.log_weights(x0)
        la = np.array([e.log_value for e in est])
        logA = -float(logsumexp(la))
        return TypicalTrajectoryDensity(self, x0, logA, est)

    # -- profiles ---------------------------------------------------------
    def _axis_point(self, rho: float) -> np.ndarray:
        p = np.zeros(self.d)
        p[0] = rho
        return p

    def nu1_density_profile(self, radii: Sequence[float]) -> list[tuple[float, float]]:
        """(radius, d nu_1 / dLeb) along the first coordinate axis."""
        out = []
        for rho in radii:
            x0 = self._axis_point(float(rho))
            A = self.normalizer_A(x0)
            val = math.exp(A.log_value + self.a_k(x0, 1).log_value) * float(self.geom.mu_density(x0)[0])
            out.append((float(rho), val))
        return out

    def nu1_limit_profile(self, radii: Sequence[float]) -> list[tuple[float, float]]:
        """gamma -> infinity shape: indicator that the direct hop beats every two-hop path."""
        out = []
        for rho in radii:
            x0 = self._axis_point(float(rho))
            direct = float(self.g_to_origin(x0)[0])
            two = self.optimal_relay(x0).value if self.kmax >= 2 else math.inf
            out.append((float(rho), float(direct < two) * float(self.geom.mu_density(x0)[0])))
        return out

    # -- optimal relays ---------------------------------------------------
    def two_hop_energy(self, x0, x1) -> np.ndarray:
        o = np.zeros(self.d)
        return self.g(x0, x1) + self.g(x1, o)

    def optimal_relay(self, x0, n_scan: int = 257, tie_tol: float = 1e-9) -> "RelayResult":
        """Minimizer of x1 -> g(x0, x1) + g(x1, o) over W.

        For strictly decreasing ell the search runs along the segment [x0, o]
        (minimizers are collinear there); otherwise over all of W.
        """
        x0 = self.point(x0)
        r0 = float(np.linalg.norm(x0))
        if r0 == 0.0:
            o = np.zeros(self.d)
            return RelayResult(o, 0.0, float(self.two_hop_energy(x0, o)[0]), False)
        if self.model.strictly_decreasing:
            f = lambda c: self.two_hop_energy(x0, np.outer(np.atleast_1d(c), x0))
            cs = np.linspace(0.0, 1.0, n_scan)
            vals = f(cs)
            cands = _local_minima_1d(cs, vals, lambda c: float(f(c)[0]))
        else:
            cands = self._relay_search_W(x0, n_scan)
        cands.sort(key=lambda t: t[1])
        best_val = cands[0][1]
        ties = [c for c in cands if c[1] <= best_val + tie_tol * max(1.0, abs(best_val))]
        if self.model.strictly_decreasing:
            pts = [(c, v, c * x0) for c, v in ties]
        else:
            pts = [(None, v, p) for p, v in ties]
        pts.sort(key=lambda t: float(np.linalg.norm(t[2])))
        distinct = [p for p in pts if np.linalg.norm(p[2] - pts[0][2]) > 1e-6 * max(1.0, r0)]
        relay = pts[0][2]
        frac = float(np.linalg.norm(relay) / r0)
        return RelayResult(relay, frac, float(pts[0][1]), bool(distinct))

    def _relay_search_W(self, x0: np.ndarray, n_scan: int):
        r = self.geom.radius
        if self.d == 1:
            xs = np.linspace(-r, r, 16 * n_scan + 1)
            vals = self.two_hop_energy(x0, xs)
            return [(np.array([c]), v) for c, v in _local_minima_1d(xs, vals, lambda c: float(self.two_hop_energy(x0, c)[0]))]
        m = 2 * n_scan // 3
        g1 = np.linspace(-r, r, m)
        X, Y = np.meshgrid(g1, g1, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        pts = pts[np.linalg.norm(pts, axis=1) <= r]
        vals = self.two_hop_energy(x0, pts)
        order = np.argsort(vals)[:5]
        out = []
        for j in order:
            fun = lambda p: float(self.two_hop_energy(x0, _clip_ball(p, r))[0])
            res = optimize.minimize(fun, pts[j], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
            out.append((_clip_ball(res.x, r), float(res.fun)))
        return out

    # -- transition radius ------------------------------------------------
    def one_or_two_gap(self, r0: float) -> float:
        """g(x0, o) - min_x1 [g(x0, x1) + g(x1, o)] at |x0| = r0 on the first axis."""
        x0 = self._axis_point(float(r0))
        return float(self.g_to_origin(x0)[0]) - self.optimal_relay(x0).value

    def transition_radius(self, n_scan: int = 64, tol: float = 1e-9) -> "TransitionResult":
        """Radius where the direct hop stops beating the best two-hop path."""
        if self.kmax < 2:
            raise ValueError("transition radius needs kmax >= 2")
        r = self.geom.radius
        rs = np.linspace(0.0, r, n_scan + 1)[1:]
        vals = np.array([self.one_or_two_gap(x) for x in rs])
        for j in range(len(rs)):
            if vals[j] > 0:
                if j == 0:
                    lo = 0.0
                    if self.one_or_two_gap(rs[0] * 1e-6) > 0:
                        return TransitionResult(None, rs, vals)
                else:
                    lo = rs[j - 1]
                root = optimize.brentq(self.one_or_two_gap, max(lo, 1e-12), rs[j], xtol=tol, rtol=4 * np.finfo(float).eps)
                return TransitionResult(float(root), rs, vals)
        return TransitionResult(None, rs, vals)

    # -- incoming hop measure ----------------------------------------------
    def incoming_hop_measure(self, points=None, n_x0: int = 48, seed: Optional[int] = None) -> "IncomingHopMeasure":
        """Lebesgue density of M = sum_k sum_{l=1}^{k-1} pi_l nu_k at `points`.

        kmax = 2 uses quadrature in both variables; kmax >= 3 uses weighted
        Monte Carlo trajectories binned on a grid.
        """
        geom = self.geom
        if points is None:
            if self.d == 1:
                points = np.linspace(-geom.radius, geom.radius, 201)[:, None]
            else:
                g1 = np.linspace(-geom.radius, geom.radius, 41)
                X, Y = np.meshgrid(g1, g1, indexing="ij")
                pts = np.column_stack([X.ravel(), Y.ravel()])
                points = pts[np.linalg.norm(pts, axis=1) <= geom.radius]
        points = as_points(points, self.d)
        if self.kmax == 1:
            return IncomingHopMeasure(points, np.zeros(len(points)), 0.0, 0.0, np.zeros(1))
        br = [0.0, 1.0, -1.0] if (self.model.kind == "hertz" and self.d == 1) else ([1.0] if self.model.kind == "hertz" else [])
        x0s, w0 = mu_rule(geom, n_x0 if self.d == 1 else max(8, n_x0 // 3), br)
        logA = np.array([self.normalizer_A(x).log_value for x in x0s])
        nu_mass = np.zeros(self.kmax + 1)
        for k in range(1, self.kmax + 1):
            lak = np.array([self.a_k(x, k).log_value for x in x0s])
            nu_mass[k] = float(np.sum(w0 * np.exp(logA + lak)))
        total_from_nu = float(sum((k - 1) * nu_mass[k] for k in range(1, self.kmax + 1)))
        if self.kmax == 2:
            o = np.zeros(self.d)
            dens = np.empty(len(points))
            for i, x in enumerate(points):
                e = self.g(x0s, x) + self.g(x, o)[0]
                dens[i] = np.sum(w0 * np.exp(logA - self.gamma * e)) / self.mu_W
            dens *= geom.mu_density(points)
            # total mass of M via the other integration order
            xs, wx = mu_rule(geom, n_x0 if self.d == 1 else max(8, n_x0 // 3), br)
            tot = 0.0
            for x, wxi in zip(xs, wx):
                e = self.g(x0s, x) + self.g(x, o)[0]
                tot += wxi * np.sum(w0 * np.exp(logA - self.gamma * e)) / self.mu_W
            return IncomingHopMeasure(points, dens, float(tot), total_from_nu, nu_mass)
        # kmax >= 3: weighted trajectory histogram
        rng = np.random.default_rng(derive_seed(self.seed if seed is None else seed, "M"))
        n = self.mc_samples
        hist_pts = points
        dens = np.zeros(len(points))
        cell = _cell_volume(points, self.d)
        x0 = sample_mu(rng, geom, n)
        lA = np.array([self.normalizer_A(x).log_value for x in x0[: min(n, 400)]])
        # A varies slowly; interpolate by nearest of the evaluated subset
        idx = _nearest(x0, x0[: len(lA)])
        lA_all = lA[idx]
        tot = 0.0
        for k in range(2, self.kmax + 1):
            rel = sample_mu(rng, geom, n * (k - 1)).reshape(n, k - 1, self.d)
            e = np.array([self.path_energy(x0[i], rel[i : i + 1])[0] for i in range(n)])
            w = self.mu_W * np.exp(lA_all - self.gamma * e)
            for l in range(k - 1):
                j = _nearest(rel[:, l, :], hist_pts)
                dens += np.bincount(j, weights=w, minlength=len(points)) / n
            tot += (k - 1) * w.mean()
        dens /= cell
        return IncomingHopMeasure(points, dens, float(tot), total_from_nu, nu_mass)


def _cell_volume(points: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        x = points[:, 0]
        h = np.gradient(x)
        return np.abs(h)
    xs = np.unique(points[:, 0])
    h = float(np.min(np.diff(xs))) if len(xs) > 1 else 1.0
    return np.full(len(points), h * h)


def _nearest(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    from scipy.spatial import cKDTree

    return cKDTree(b).query(a)[1]


def _clip_ball(p, r):
    p = np.asarray(p, float)
    n = np.linalg.norm(p)
    return p if n <= r else p * (r / n)


def _local_minima_1d(xs, vals, f):
    """Refine every interior/boundary local minimum of a scanned function."""
    xs = np.asarray(xs).ravel()
    vals = np.asarray(vals).ravel()
    n = len(xs)
    out = []
    idx = [j for j in range(n) if (j == 0 or vals[j] <= vals[j - 1]) and (j == n - 1 or vals[j] <= vals[j + 1])]
    idx = sorted(idx, key=lambda j: vals[j])[:8]
    for j in idx:
        lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, n - 1)]
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13, "maxiter": 500})
        cand = [(float(res.x), float(res.fun)), (float(xs[j]), float(vals[j]))]
        out.append(min(cand, key=lambda t: t[1]))
    return out


@dataclass
class TypicalTrajectoryDensity:
    kernel: LimitKernel
    x0: np.ndarray
    log_A: float
    weights: list

    @property
    def hop_marginal(self) -> np.ndarray:
        """pi_0 T(k) = A a_k for k = 1..kmax."""
        return np.exp(self.log_A + np.array([e.log_value for e in self.weights]))

    def log_density(self, relays) -> np.ndarray:
        """log T(k, x_1..x_{k-1}) for relay arrays of shape (n, k-1, d); k from the shape."""
        rel = np.asarray(relays, float)
        k = rel.shape[1] + 1
        K = self.kernel
        return self.log_A - (k - 1) * K.log_mu_W - K.gamma * K.path_energy(self.x0, rel)

    def total_mass_check(self, n_samples: int = 20000, seed: int = 1):
        """Integrate T against sum_k delta_k x mu^{k-1} with fresh samples.

        Returns (total, standard error).  The relay integrals are estimated
        independently of the weights that fixed A, so the total is a genuine
        check of the normalization.
        """
        K = self.kernel
        rng = np.random.default_rng(seed)
        total = math.exp(self.log_A + self.weights[0].log_value)
        var = (total * self.weights[0].rel_stderr) ** 2
        for k in range(2, K.kmax + 1):
            rel = sample_mu(rng, K.geom, n_samples * (k - 1)).reshape(n_samples, k - 1, K.d)
            vals = np.exp(self.log_density(rel) + (k - 1) * K.log_mu_W)
            total += vals.mean()
            var += vals.var(ddof=1) / n_samples
        # uncertainty in A itself
        la = np.array([e.log_value for e in self.weights])
        share = np.exp(la - logsumexp(la))
        relA = math.sqrt(np.sum((share * np.array([e.rel_stderr for e in self.weights])) ** 2))
        var += (total * relA) ** 2
        return float(total), float(math.sqrt(var))


@dataclass(frozen=True)
class RelayResult:
    relay: np.ndarray
    fraction: float
    value: float
    multiple: bool


@dataclass
class TransitionResult:
    radius: Optional[float]
    scan_radii: np.ndarray
    scan_values: np.ndarray

    @property
    def found(self) -> bool:
        return self.radius is not None


@dataclass
class IncomingHopMeasure:
    points: np.ndarray
    density: np.ndarray
    total_mass: float
    total_mass_from_nu: float
    nu_masses: np.ndarray


# -- variational formula ---------------------------------------------------


class AdmissibilityError(ValueError):
    def __init__(self, deviation: float):
        super().__init__(f"family violates sum_k pi_0 nu_k = mu (max deviation {deviation:.3e})")
        self.deviation = deviation


@dataclass
class DiscretizedTrajectoryFamily:
    """Grid version of Sigma = (nu_k).

    ``densities[k-1]`` has shape (n,)*k and holds d nu_k / d mu^{k} at the
    cell centres; ``masses`` are the mu-masses of the cells.
    """

    points: np.ndarray
    masses: np.ndarray
    densities: list

    @property
    def kmax(self) -> int:
        return len(self.densities)

    def start_marginal(self) -> np.ndarray:
        """d(sum_k pi_0 nu_k)/d mu per cell."""
        m = self.masses
        out = np.zeros(len(m))
        for k, f in enumerate(self.densities, start=1):
            g = f
            for _ in range(k - 1):
                g = g @ m
            out += g
        return out

    def relabel(self, perm) -> "DiscretizedTrajectoryFamily":
        perm = np.asarray(perm)
        dens = []
        for f in self.densities:
            dens.append(f[np.ix_(*([perm] * f.ndim))])
        return DiscretizedTrajectoryFamily(self.points[perm], self.masses[perm], dens)


def _energies(kernel: LimitKernel, pts: np.ndarray, kmax: int) -> list:
    n = len(pts)
    o = np.zeros(kernel.d)
    go = kernel.g(pts, o)
    if kmax == 1:
        return [go]
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    G = kernel.g(pts[ii.ravel()], pts[jj.ravel()]).reshape(n, n)
    out = [go, G + go[None, :]]
    if kmax >= 3:
        out.append(G[:, :, None] + G[None, :, :] + go[None, None, :])
    if kmax >= 4:
        raise ValueError("discretized families support kmax <= 3")
    return out


def minimizer_family(kernel: LimitKernel, points, masses) -> DiscretizedTrajectoryFamily:
    """The discrete analogue of nu_k = mu A mu^{k-1}/mu(W)^{k-1} exp(-gamma sum g)."""
    pts = as_points(points, kernel.d)
    m = np.asarray(masses, float)
    muW = m.sum()
    E = _energies(kernel, pts, kernel.kmax)
    logs = [-kernel.gamma * e - (k) * math.log(muW) for k, e in enumerate(E)]
    # log a_k per start cell
    la = []
    for k, L in enumerate(logs, start=1):
        t = L
        for _ in range(k - 1):
            t = logsumexp(t, axis=-1, b=m)
        la.append(t)
    logA = -logsumexp(np.stack(la), axis=0)
    dens = [np.exp(L + logA.reshape((-1,) + (1,) * k)) for k, L in enumerate(logs)]
    return DiscretizedTrajectoryFamily(pts, m, dens)


def variational_objective(family: DiscretizedTrajectoryFamily, kernel: LimitKernel, tol: float = 1e-6) -> float:
    """J(Sigma) + gamma S(Sigma) on the grid, with 0 log 0 = 0."""
    dev = float(np.max(np.abs(family.start_marginal() - 1.0)))
    if dev > tol:
        raise AdmissibilityError(dev)
    m = family.masses
    muW = m.sum()
    E = _energies(kernel, family.points, family.kmax)
    J = 0.0
    S = 0.0
    for k, f in enumerate(family.densities, start=1):
        w = m
        for _ in range(k - 1):
            w = np.multiply.outer(w, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            flogf = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
        J += float(np.sum(w * flogf)) + math.log(muW) * (k - 1) * float(np.sum(w * f))
        S += float(np.sum(w * f * E[k - 1]))
    return J + kernel.gamma * S


def perturb_family(family: DiscretizedTrajectoryFamily, rng: np.random.Generator, scale: float = 0.3) -> DiscretizedTrajectoryFamily:
    """Random positive reweighting, renormalized so that it stays admissible."""
    dens = [f * np.exp(scale * rng.standard_normal(f.shape)) for f in family.densities]
    tmp = DiscretizedTrajectoryFamily(family.points, family.masses, dens)
    tot = tmp.start_marginal()
    dens = [f / tot.reshape((-1,) + (1,) * (f.ndim - 1)) for f in dens]
    return DiscretizedTrajectoryFamily(family.points, family.masses, dens)
