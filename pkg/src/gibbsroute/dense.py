"""Dense subarea Delta with weight a -> infinity.

Relative to the interference from Delta the hop penalty becomes

    g_Delta(x, y) = int_Delta ell(|y - z|) dz / ell(|x - y|).

Relaying dies out exponentially in a exactly when every two-hop path is
strictly worse than the direct hop::

    min_{x0, x1} g_Delta(x0, x1) + g_Delta(x1, o) - g_Delta(x0, o) > 0.

Locally, for a point-like Delta = {y0}, the detour value on the circle
|x1 - y0| = eps is bounded by ``ft(eps) = ell(eps)/ell(|x0-y0|+eps) +
ell(|y0|)/ell(|y0|+eps)``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Optional

import numpy as np
from scipy import optimize

from .geometry import Geometry, as_points
from .interference import build_interference_field
from .pathloss import PathLoss

__all__ = [
    "SubareaSpec",
    "TwoHopVerdict",
    "twohop_condition",
    "twohop_bounds",
    "RateField",
    "ma_rate_field",
    "detour_upper",
    "detour_upper_derivative",
    "detour_min",
    "shifted_sign_boundary",
]


class SubareaSpec:
    """Delta, its unit-weight interference field and g_Delta."""

    def __init__(self, geom: Geometry, model: PathLoss, tol: float = 1e-8, field=None):
        if not geom.has_delta:
            raise ValueError("geometry has no subarea Delta")
        self.geom = geom
        self.model = model
        self.field = field if field is not None else build_interference_field(geom, model, "delta", tol=tol)
        self.d = geom.d
        self.I_o = float(self.field(np.zeros(self.d))[0])

    @property
    def leb_delta(self) -> float:
        return self.geom.delta_volume

    def g(self, x, y) -> np.ndarray:
        xp = as_points(x, self.d)
        yp = as_points(y, self.d)
        return self.field(yp) * self.model.inverse(np.linalg.norm(xp - yp, axis=1))

    def excess(self, x0, x1) -> np.ndarray:
        """g_Delta(x0, x1) + g_Delta(x1, o) - g_Delta(x0, o)."""
        x0 = as_points(x0, self.d)
        x1 = as_points(x1, self.d)
        inv = self.model.inverse
        return (
            self.field(x1) * inv(np.linalg.norm(x0 - x1, axis=1))
            + self.I_o * inv(np.linalg.norm(x1, axis=1))
            - self.I_o * inv(np.linalg.norm(x0, axis=1))
        )

    def excess_allnumerator(self, x0, x1) -> np.ndarray:
        """The excess multiplied by ell(|x0 - x1|) ell(|x1|); same sign, no denominators but one."""
        x0 = as_points(x0, self.d)
        x1 = as_points(x1, self.d)
        ell = self.model
        l01 = ell(np.linalg.norm(x0 - x1, axis=1))
        l1 = ell(np.linalg.norm(x1, axis=1))
        l0 = ell(np.linalg.norm(x0, axis=1))
        return l1 * self.field(x1) + l01 * self.I_o - l1 * l01 / l0 * self.I_o

    def grid(self, n: int) -> np.ndarray:
        """Cell centres of an n^d grid over W (points outside W dropped)."""
        r = self.geom.radius
        c = -r + (np.arange(n) + 0.5) * (2 * r / n)
        if self.d == 1:
            return c[:, None]
        X, Y = np.meshgrid(c, c, indexing="ij")
        p = np.column_stack([X.ravel(), Y.ravel()])
        return p[np.linalg.norm(p, axis=1) <= r]


@dataclass
class TwoHopVerdict:
    holds: Optional[bool]
    margin: float
    witness: tuple
    margin_allnumerator: float
    witness_allnumerator: tuple
    grid_margin: float
    indeterminate: bool

    @property
    def forms_agree(self) -> bool:
        return (self.margin > 0) == (self.margin_allnumerator > 0)

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "margin": self.margin,
            "witness": [np.asarray(w).tolist() for w in self.witness],
            "margin_allnumerator": self.margin_allnumerator,
            "indeterminate": self.indeterminate,
        }


def _pair_grid_min(fun, pts: np.ndarray, n_best: int = 5, chunk: int = 512):
    n = len(pts)
    best = []
    for s in range(0, n, chunk):
        a = pts[s : s + chunk]
        ii, jj = np.meshgrid(np.arange(len(a)), np.arange(n), indexing="ij")
        v = fun(a[ii.ravel()], pts[jj.ravel()]).reshape(len(a), n)
        flat = np.argsort(v, axis=None)[:n_best]
        for f in flat:
            i, j = np.unravel_index(f, v.shape)
            best.append((float(v[i, j]), s + i, j))
    best.sort()
    return best[:n_best]


def _refine_pair(fun, spec: SubareaSpec, p0: np.ndarray, p1: np.ndarray):
    r = spec.geom.radius
    d = spec.d

    def clip(p):
        nrm = np.linalg.norm(p)
        return p if nrm <= r else p * (r / nrm)

    def obj(z):
        return float(fun(clip(z[:d]), clip(z[d:]))[0])

    res = optimize.minimize(obj, np.concatenate([p0, p1]), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000, "maxfev": 40000})
    z = res.x
    return float(res.fun), (clip(z[:d]), clip(z[d:]))


def twohop_condition(spec: SubareaSpec, n_grid: int = 64, n_best: int = 5, tol: float = 1e-9) -> TwoHopVerdict:
    """Grid plus Nelder-Mead minimization of the two-hop excess over W x W.

    Both the plain form and the all-numerator form are minimized; the verdict
    is indeterminate if the margin is within `tol` (relative to g_Delta(o, o))
    of zero.
    """
    pts = spec.grid(n_grid)
    out = []
    for fun in (spec.excess, spec.excess_allnumerator):
        cands = _pair_grid_min(fun, pts, n_best)
        gmin = cands[0][0]
        best = (gmin, (pts[cands[0][1]], pts[cands[0][2]]))
        for _, i, j in cands:
            v, w = _refine_pair(fun, spec, pts[i], pts[j])
            if v < best[0]:
                best = (v, w)
        out.append((best[0], best[1], gmin))
    scale = max(spec.I_o, 1e-300)
    margin = out[0][0]
    indet = abs(margin) <= tol * scale
    holds = None if indet else bool(margin > 0)
    return TwoHopVerdict(holds, margin, out[0][1], out[1][0], out[1][1], out[0][2], indet)


def twohop_bounds(spec: SubareaSpec) -> tuple[float, float, float]:
    """(p, lower, upper) for the all-numerator minimum with p = ell_min / ell_max on W x W."""
    lmax = spec.model.value_at_zero
    lmin = float(spec.model(2 * spec.geom.radius))
    p = lmin / lmax
    L = spec.leb_delta
    return p, lmax**2 * L * (2 * p * p - 1 / p), lmax**2 * L * (2 - p**3)


@dataclass
class RateField:
    points: np.ndarray
    rate: np.ndarray
    kmax: int

    @property
    def sup(self) -> float:
        return float(self.rate.max())

    @property
    def argsup(self) -> np.ndarray:
        return self.points[int(np.argmax(self.rate))]

    def rows(self):
        return [(*p.tolist(), float(v)) for p, v in zip(self.points, self.rate)]


def ma_rate_field(spec: SubareaSpec, kmax: int = 2, n_grid: int = 64, gamma: Optional[float] = None, points=None) -> RateField:
    """lim a^-1 log dM^a/dLeb at the grid points, by min-plus recursion on the grid.

    For each transmitter x0 the denominator is the best path energy with at
    most kmax hops and the numerator the best path energy with a relay at x;
    the rate is -gamma min_{x0} (numerator - denominator) <= 0.  Relays range
    over the same grid.  Sums are associated identically in both terms so
    that a best path through x gives exactly zero.
    """
    if kmax not in (2, 3):
        raise ValueError("rate field supports kmax in {2, 3}")
    gam = spec.geom.gamma if gamma is None else float(gamma)
    P = spec.grid(n_grid) if points is None else as_points(points, spec.d)
    n = len(P)
    II = spec.field(P)
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    G = II[None, :] * spec.model.inverse(D)  # G[i, j] = g(P_i, P_j)
    go = spec.I_o * spec.model.inverse(np.linalg.norm(P, axis=1))
    two = G + go[None, :]  # two[i, j]: P_i -> P_j -> o
    best2 = two.min(axis=1)
    den = np.minimum(go, best2)
    num = two.copy()
    if kmax == 3:
        # relay x in first position: x0 -> x -> (best single relay) -> o
        three_first = G + best2[None, :]
        best3 = three_first.min(axis=1)
        den = np.minimum(den, best3)
        # relay x in second position: min_m G[i, m] + (G[m, j] + go[j])
        three_second = np.empty((n, n))
        for i in range(n):
            three_second[i] = np.min(G[i][:, None] + two, axis=0)
        num = np.minimum(num, np.minimum(three_first, three_second))
    rate = -gam * np.min(num - den[:, None], axis=0) + 0.0
    return RateField(P, rate, kmax)


# -- local detour functions -----------------------------------------------------


def _dist(a, b) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(a, float)) - np.atleast_1d(np.asarray(b, float))))


def detour_upper(x0, y0, model: PathLoss, eps) -> np.ndarray:
    """ft(eps) = ell(eps)/ell(|x0-y0|+eps) + ell(|y0|)/ell(|y0|+eps); negative eps uses the continuation of ell."""
    D = _dist(x0, y0)
    ry = float(np.linalg.norm(np.atleast_1d(y0)))
    e = np.asarray(eps, float)
    ell = model.extended
    return ell(e) / ell(D + e) + ell(ry) / ell(ry + e)


def detour_upper_derivative(x0, y0, model: PathLoss) -> float:
    """ft'(0) = ell'(0)/ell(D) - ell(0) ell'(D)/ell(D)^2 - ell'(|y0|)/ell(|y0|), D = |x0 - y0|.

    For the Hertz model the right derivatives of ell are used.
    """
    D = _dist(x0, y0)
    ry = float(np.linalg.norm(np.atleast_1d(y0)))
    l, dl = model, model.derivative
    return float(dl(0.0) / l(D) - l(0.0) * dl(D) / l(D) ** 2 - dl(ry) / l(ry))


def shifted_sign_boundary(x0, y0, alpha: float) -> float:
    """|x0-y0| (1+|x0-y0|)^(alpha-1) - (1+|y0|)^-1; ft'(0) < 0 iff positive (for K = 1)."""
    D = _dist(x0, y0)
    ry = float(np.linalg.norm(np.atleast_1d(y0)))
    return D * (1 + D) ** (alpha - 1) - 1.0 / (1 + ry)


def detour_min(x0, y0, model: PathLoss, eps: float, n_angles: int = 3600, radius: Optional[float] = None):
    """f(eps) = min over |x1 - y0| = eps of ell(eps)/ell(|x0-x1|) + ell(|y0|)/ell(|x1|), by angular scan.

    With `radius` the scan is restricted to W = B_radius(o); returns
    ``(value, minimizer, touches_boundary)``.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    y0 = np.atleast_1d(np.asarray(y0, float))
    d = len(y0)
    if d == 1:
        cand = np.array([[y0[0] - eps], [y0[0] + eps]])
    else:
        th = np.linspace(0, 2 * math.pi, n_angles, endpoint=False)
        cand = y0[None, :] + eps * np.column_stack([np.cos(th), np.sin(th)])
    if radius is not None:
        keep = np.linalg.norm(cand, axis=1) <= radius
        if not np.any(keep):
            return math.inf, None, True
        cand = cand[keep]
    ry = float(np.linalg.norm(y0))
    vals = model(eps) / model(np.linalg.norm(cand - x0, axis=1)) + model(ry) / model(np.linalg.norm(cand, axis=1))
    j = int(np.argmin(vals))
    touches = bool(radius is not None and np.linalg.norm(cand[j]) >= radius * (1 - 1e-9) - 2 * math.pi * eps / max(n_angles, 1))
    return float(vals[j]), cand[j], touches
