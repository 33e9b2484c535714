"""Interference fields x -> int ell(|z - x|) nu(dz) for ball-supported nu.

A uniform measure on a ball is rotationally invariant about the ball centre,
so its field is a radial function of the distance to that centre.  The field
is tabulated once with a piecewise cubic spline (breakpoints where the
integrand has kinks) and checked against direct evaluation at a staggered
set of validation radii.  Sums of such fields represent mu + a Leb|_Delta.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .geometry import Geometry, as_points
from .pathloss import PathLoss

__all__ = [
    "QuadratureError",
    "ball_interference",
    "InterferenceField",
    "FieldSum",
    "build_interference_field",
    "g_eval",
]


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative error {achieved:.3e})")
        self.achieved = achieved


def _disk_integral(model: PathLoss, R: float, rho: float, epsrel: float = 1e-12) -> float:
    """int_{B_R(c)} ell(|z - x|) dz in d=2 with |x - c| = rho."""
    F = model.first_moment
    if rho == 0.0:
        return 2 * math.pi * float(F(R))
    if rho <= R:
        # rays from an interior point: s in [0, s_hi(theta)]
        def f(th):
            s = -rho * math.cos(th) + math.sqrt(max(R * R - (rho * math.sin(th)) ** 2, 0.0))
            return float(F(s))

        pts = []
        if model.kind == "hertz":
            c = (R * R - rho * rho - 1.0) / (2 * rho)
            if -1.0 < c < 1.0:
                pts.append(math.acos(c))
        if R - rho < 1e-3 * R:
            pts.append(0.5 * math.pi)
        val, _ = integrate.quad(f, 0.0, math.pi, points=pts or None, epsabs=0.0, epsrel=epsrel, limit=400)
        return 2.0 * val
    # exterior point: substitute sin(phi) = (R/rho) sin(psi) to remove the
    # square-root singularity at the tangent direction
    q = R / rho

    def f(psi):
        sphi = q * math.sin(psi)
        cphi = math.sqrt(1.0 - sphi * sphi)
        cpsi = math.cos(psi)
        w = q * cpsi / cphi
        s_hi = rho * cphi + R * cpsi
        s_lo = rho * cphi - R * cpsi
        return float(F(s_hi) - F(s_lo)) * w

    pts = []
    if model.kind == "hertz":
        for tgt in (1.0,):
            # s_hi or s_lo equal to tgt: solve numerically on a scan
            grid = np.linspace(0, 0.5 * math.pi, 257)
            sp = q * np.sin(grid)
            cp = np.sqrt(1 - sp * sp)
            for s in (rho * cp + R * np.cos(grid), rho * cp - R * np.cos(grid)):
                sg = np.sign(s - tgt)
                for j in np.nonzero(sg[:-1] * sg[1:] < 0)[0]:
                    pts.append(0.5 * (grid[j] + grid[j + 1]))
    val, _ = integrate.quad(f, 0.0, 0.5 * math.pi, points=pts or None, epsabs=0.0, epsrel=epsrel, limit=400)
    return 2.0 * val


def ball_interference(model: PathLoss, d: int, R: float, rho) -> np.ndarray:
    """Direct evaluation of int_{B_R(c)} ell(|z - x|) dz at distances rho = |x - c|."""
    rho = np.abs(np.asarray(rho, dtype=float))
    if d == 1:
        L = model.antiderivative
        out = L(R + rho) + L(R - rho)
        return np.asarray(out, float)
    if d == 2:
        flat = rho.ravel()
        out = np.array([_disk_integral(model, R, float(r)) for r in flat])
        return out.reshape(rho.shape)
    raise ValueError("only d = 1 and d = 2 are supported")


class InterferenceField:
    """Tabulated field of ``weight * Leb|_{B_R(center)}``.

    Parameters
    ----------
    model : PathLoss
    d : int
    ball_radius : float
    center : array_like, optional
        Centre of the source ball (default: the origin).
    weight : float
        Constant density of the source measure.
    rho_max : float, optional
        Largest tabulated distance to `center` (default: ``|center| + ball_radius``,
        which covers every point of a ball W containing the source).
    tol : float
        Required relative interpolation error at the validation points.
    n_nodes : int
        Initial total node count, split over the smooth segments; each
        segment is refined by doubling until `tol` is met.
    """

    def __init__(
        self,
        model: PathLoss,
        d: int,
        ball_radius: float,
        center=None,
        weight: float = 1.0,
        rho_max: float | None = None,
        tol: float = 1e-7,
        n_nodes: int = 256,
        max_nodes: int = 16384,
        tag: str = "mu",
    ):
        self.model = model
        self.d = int(d)
        self.R = float(ball_radius)
        self.center = np.zeros(self.d) if center is None else np.atleast_1d(np.asarray(center, float))
        self.weight = float(weight)
        self.tag = tag
        self.tol = float(tol)
        if rho_max is None:
            rho_max = float(np.linalg.norm(self.center)) + self.R
        self.rho_max = float(rho_max)
        self._build(n_nodes, max_nodes)

    # -- construction ---------------------------------------------------
    def _breakpoints(self) -> list[float]:
        R, top = self.R, self.rho_max
        cand = [R]
        if self.model.kind == "hertz":
            cand += [R - 1.0, R + 1.0, 1.0 - R]
        inner = sorted({c for c in cand if 1e-9 < c < top - 1e-9})
        return [0.0] + inner + [top]

    def _build(self, n_nodes: int, max_nodes: int):
        # Chebyshev-Lobatto nodes per segment: nested under doubling, and
        # clustered at the segment ends where the field is least smooth.
        # The validation points of one level are the new nodes of the next.
        bps = self._breakpoints()
        span = self.rho_max
        direct = lambda r: ball_interference(self.model, self.d, self.R, r)
        pieces = []
        worst = 0.0
        for lo, hi in zip(bps[:-1], bps[1:]):
            m = max(4, int(math.ceil(n_nodes * (hi - lo) / span)))
            x = lo + (hi - lo) * 0.5 * (1 - np.cos(np.pi * np.arange(m + 1) / m))
            v = direct(x)
            while True:
                spl = CubicSpline(x, v)
                xv = lo + (hi - lo) * 0.5 * (1 - np.cos(np.pi * (2 * np.arange(m) + 1) / (2 * m)))
                vv = direct(xv)
                err = float(np.max(np.abs(spl(xv) - vv) / np.abs(vv)))
                if err <= self.tol:
                    break
                if 2 * m > max_nodes:
                    raise QuadratureError("interference table did not reach the requested tolerance", err)
                order = np.argsort(np.concatenate([x, xv]))
                x = np.concatenate([x, xv])[order]
                v = np.concatenate([v, vv])[order]
                m *= 2
            pieces.append((lo, hi, spl))
            worst = max(worst, err)
            self._pieces = pieces
        self.achieved_error = worst
        self.nodes = np.concatenate([p[2].x for p in pieces])
        self.values = self.weight * np.concatenate([p[2](p[2].x) for p in pieces])

    def _radial_unit(self, rho, nu: int = 0) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        flat = rho.ravel()
        out = np.empty_like(flat)
        idx = np.searchsorted(np.array([p[1] for p in self._pieces]), flat, side="left")
        idx = np.clip(idx, 0, len(self._pieces) - 1)
        for j, (lo, hi, spl) in enumerate(self._pieces):
            sel = idx == j
            if np.any(sel):
                out[sel] = spl(flat[sel], nu) if nu else spl(flat[sel])
        return out.reshape(rho.shape)

    # -- evaluation -----------------------------------------------------
    def radial(self, rho) -> np.ndarray:
        """Field value at distance rho from the source centre."""
        return self.weight * self._radial_unit(np.abs(np.asarray(rho, float)))

    def radial_derivative(self, rho) -> np.ndarray:
        return self.weight * self._radial_unit(np.abs(np.asarray(rho, float)), nu=1)

    def direct(self, rho) -> np.ndarray:
        """Untabulated evaluation (slow in d=2)."""
        return self.weight * ball_interference(self.model, self.d, self.R, rho)

    def _dist(self, x):
        p = as_points(x, self.d)
        return p, np.linalg.norm(p - self.center, axis=1)

    def __call__(self, x) -> np.ndarray:
        _, r = self._dist(x)
        return self.radial(r)

    def gradient(self, x) -> np.ndarray:
        p, r = self._dist(x)
        dr = self.radial_derivative(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, (p - self.center) / r[:, None], 0.0)
        return dr[:, None] * unit

    def min_value(self) -> float:
        return float(self.values.min())

    def scaled(self, w: float) -> "InterferenceField":
        new = object.__new__(InterferenceField)
        new.__dict__.update(self.__dict__)
        new.weight = self.weight * w
        new.values = self.values * w
        return new

    def table(self) -> list[tuple[float, float]]:
        return list(zip(self.nodes.tolist(), self.values.tolist()))


class FieldSum:
    """Sum of interference fields (mu + a Leb|_Delta)."""

    def __init__(self, terms: Sequence[InterferenceField]):
        self.terms = list(terms)
        self.d = self.terms[0].d
        self.tag = "+".join(t.tag for t in self.terms)
        self.achieved_error = max(t.achieved_error for t in self.terms)

    def __call__(self, x) -> np.ndarray:
        return sum(t(x) for t in self.terms)

    def gradient(self, x) -> np.ndarray:
        return sum(t.gradient(x) for t in self.terms)

    def min_value(self) -> float:
        return float(sum(t.min_value() for t in self.terms))


def build_interference_field(geom: Geometry, model: PathLoss, source: str = "mu", tol: float = 1e-7, n_nodes: int = 256):
    """Field of ``source`` in {"mu", "W", "delta"}.

    "W" is the base part intensity * Leb|_W, "delta" is Leb|_Delta with unit
    weight (the numerator of g_Delta) and "mu" is the full intensity measure.
    """
    base = lambda: InterferenceField(model, geom.d, geom.radius, weight=geom.intensity, tol=tol, n_nodes=n_nodes, tag="W")

    def delta(weight):
        if not geom.has_delta:
            raise ValueError("geometry has no subarea Delta")
        c = geom.delta_center_array
        return InterferenceField(
            model,
            geom.d,
            geom.delta_radius,
            center=c,
            weight=weight,
            rho_max=float(np.linalg.norm(c)) + geom.radius,
            tol=tol,
            n_nodes=n_nodes,
            tag="delta",
        )

    if source == "W":
        return base()
    if source == "delta":
        return delta(1.0)
    if source == "mu":
        if geom.has_delta and geom.a > 0:
            return FieldSum([base(), delta(geom.a)])
        return base()
    raise ValueError(f"unknown source measure {source!r}")


def g_eval(field, model: PathLoss, x, y) -> np.ndarray:
    """g(x, y) = I(y) / ell(|x - y|); x, y broadcast against each other."""
    d = field.d
    xp = as_points(x, d)
    yp = as_points(y, d)
    dist = np.linalg.norm(xp - yp, axis=1)
    return field(yp) * model.inverse(dist)
