"""Composite quadrature rules for integrals against mu on a ball."""
from __future__ import annotations

import math

import numpy as np

from .geometry import Geometry

__all__ = ["gauss_legendre_composite", "mu_rule", "log_integrate"]


def gauss_legendre_composite(breaks, n: int):
    """Nodes and weights of n-point Gauss-Legendre on every [b_i, b_{i+1}]."""
    b = np.unique(np.asarray(breaks, dtype=float))
    t, w = np.polynomial.legendre.leggauss(n)
    lo, hi = b[:-1, None], b[1:, None]
    x = 0.5 * (hi - lo) * t[None, :] + 0.5 * (hi + lo)
    ww = 0.5 * (hi - lo) * w[None, :]
    return x.ravel(), ww.ravel()


def _ball_rule(d: int, radius: float, center, n: int, breaks=(), n_theta: int | None = None):
    if d == 1:
        c = float(np.asarray(center).ravel()[0])
        pts = [c - radius, c + radius] + [p for p in breaks if c - radius < p < c + radius]
        x, w = gauss_legendre_composite(pts, n)
        return x[:, None], w
    rb = [0.0, radius] + [p for p in breaks if 0.0 < p < radius]
    r, wr = gauss_legendre_composite(rb, n)
    m = n_theta or 4 * n
    th = 2 * math.pi * np.arange(m) / m
    R, T = np.meshgrid(r, th, indexing="ij")
    W = (wr * r)[:, None] * (2 * math.pi / m)
    pts = np.column_stack([R.ravel() * np.cos(T.ravel()), R.ravel() * np.sin(T.ravel())])
    pts = pts + np.asarray(center, float)
    return pts, np.broadcast_to(W, R.shape).ravel().copy()


def mu_rule(geom: Geometry, n: int, breaks=(), n_theta: int | None = None, theta0: float = 0.0):
    """Quadrature (points, weights) for integrals against mu.

    `breaks` are positions (d=1) or radii about o (d=2) where the integrand
    is not smooth.  In d=2 the angular grid is rotated by `theta0`, so that a
    peak along a known direction sits on a grid ray.
    """
    pts, w = _ball_rule(geom.d, geom.radius, np.zeros(geom.d), n, breaks, n_theta)
    if geom.d == 2 and theta0:
        c, s = math.cos(theta0), math.sin(theta0)
        pts = pts @ np.array([[c, s], [-s, c]])
    w = w * geom.intensity
    if geom.has_delta and geom.a > 0:
        c = geom.delta_center_array
        if geom.d == 1:
            inner = [p for p in breaks]
        else:
            inner = []
        p2, w2 = _ball_rule(geom.d, geom.delta_radius, c, n, inner, n_theta)
        pts = np.vstack([pts, p2])
        w = np.concatenate([w, geom.a * w2])
    return pts, w


def log_integrate(log_f: np.ndarray, w: np.ndarray) -> float:
    """log sum_i w_i exp(log_f_i), stable for very negative exponents."""
    m = np.max(log_f)
    if not np.isfinite(m):
        return -math.inf
    return float(m + math.log(np.sum(w * np.exp(log_f - m))))
