"""Communication area, intensity measure and Poisson users."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from .pathloss import PathLoss, unit_ball_volume

__all__ = [
    "Geometry",
    "UserConfiguration",
    "as_points",
    "sample_users",
    "sample_uniform_ball",
    "sir",
    "sir_inverse_table",
    "EmptyConfigurationError",
]


class EmptyConfigurationError(ValueError):
    """SIR is undefined without any user."""


def as_points(x, d: int) -> np.ndarray:
    """Coerce scalars / sequences to an (n, d) float array."""
    a = np.asarray(x, dtype=float)
    if d == 1:
        if a.ndim == 0:
            return a.reshape(1, 1)
        if a.ndim == 1:
            return a.reshape(-1, 1)
        return a.reshape(-1, 1)
    if a.ndim == 1:
        if a.shape[0] != d:
            raise ValueError(f"point of length {a.shape[0]} in dimension {d}")
        return a.reshape(1, d)
    return a.reshape(-1, d)


@dataclass(frozen=True)
class Geometry:
    """Ball area W = B_r(o), intensity mu and the penalty weights.

    ``mu = intensity * Leb|_W + a * Leb|_Delta`` where Delta is the optional
    ball with centre `delta_center` and radius `delta_radius`.
    """

    d: int = 1
    radius: float = 5.0
    gamma: float = 1.0
    beta: float = 0.0
    kmax: int = 2
    intensity: float = 1.0
    delta_center: Optional[tuple] = None
    delta_radius: Optional[float] = None
    a: float = 0.0

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("only d = 1 and d = 2 are supported")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if int(self.kmax) != self.kmax or self.kmax < 1:
            raise ValueError("kmax must be an integer >= 1")
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")
        if self.a < 0:
            raise ValueError("a must be nonnegative")
        if self.delta_radius is not None:
            c = np.atleast_1d(np.asarray(self.delta_center if self.delta_center is not None else 0.0, float))
            if c.size != self.d:
                raise ValueError("delta_center has the wrong dimension")
            object.__setattr__(self, "delta_center", tuple(float(v) for v in c))
            if not self.delta_radius > 0:
                raise ValueError("delta_radius must be positive")
            if np.linalg.norm(c) + self.delta_radius > self.radius * (1 + 1e-12):
                raise ValueError("Delta must lie inside W")
        elif self.a > 0:
            raise ValueError("a > 0 requires a subarea Delta")

    # ------------------------------------------------------------------
    @property
    def has_delta(self) -> bool:
        return self.delta_radius is not None

    @property
    def delta_center_array(self) -> np.ndarray:
        return np.asarray(self.delta_center if self.delta_center is not None else (0.0,) * self.d)

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.d) * self.radius**self.d

    @property
    def delta_volume(self) -> float:
        return unit_ball_volume(self.d) * self.delta_radius**self.d if self.has_delta else 0.0

    @property
    def mu_total(self) -> float:
        """mu(W)."""
        return self.intensity * self.volume + self.a * self.delta_volume

    def mu_density(self, x) -> np.ndarray:
        """Lebesgue density of mu at the points x (zero outside W)."""
        p = as_points(x, self.d)
        rho = np.linalg.norm(p, axis=1)
        dens = np.where(rho <= self.radius * (1 + 1e-12), self.intensity, 0.0)
        if self.has_delta and self.a > 0:
            inside = np.linalg.norm(p - self.delta_center_array, axis=1) <= self.delta_radius
            dens = dens + self.a * inside
        return dens

    def contains(self, x, slack: float = 1e-12) -> np.ndarray:
        p = as_points(x, self.d)
        return np.linalg.norm(p, axis=1) <= self.radius * (1 + slack)

    def replace(self, **kw) -> "Geometry":
        from dataclasses import replace

        return replace(self, **kw)

    def to_dict(self) -> dict:
        out = {
            "dimension": self.d,
            "radius": self.radius,
            "gamma": self.gamma,
            "beta": self.beta,
            "kmax": self.kmax,
            "intensity": self.intensity,
        }
        if self.has_delta:
            out.update(delta_center=list(self.delta_center), delta_radius=self.delta_radius, a=self.a)
        return out


@dataclass(frozen=True)
class UserConfiguration:
    """User positions X_1..X_N together with the density parameter lambda."""

    lam: float
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        object.__setattr__(self, "points", pts)
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def N(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def empirical_mass(self) -> float:
        """Total mass N / lambda of the normalized empirical measure."""
        return self.N / self.lam


def sample_uniform_ball(rng: np.random.Generator, n: int, d: int, radius: float, center=None) -> np.ndarray:
    if d == 1:
        pts = rng.uniform(-radius, radius, size=(n, 1))
    else:
        rr = radius * np.sqrt(rng.uniform(size=n))
        th = rng.uniform(0.0, 2 * math.pi, size=n)
        pts = np.column_stack([rr * np.cos(th), rr * np.sin(th)])
    if center is not None:
        pts = pts + np.asarray(center, float)
    return pts


def sample_mu(rng: np.random.Generator, geom: Geometry, n: int) -> np.ndarray:
    """n i.i.d. points from mu / mu(W)."""
    if not (geom.has_delta and geom.a > 0):
        return sample_uniform_ball(rng, n, geom.d, geom.radius)
    p_delta = geom.a * geom.delta_volume / geom.mu_total
    in_delta = rng.uniform(size=n) < p_delta
    out = np.empty((n, geom.d))
    k = int(in_delta.sum())
    out[in_delta] = sample_uniform_ball(rng, k, geom.d, geom.delta_radius, geom.delta_center_array)
    out[~in_delta] = sample_uniform_ball(rng, n - k, geom.d, geom.radius)
    return out


def sample_users(geom: Geometry, lam: float, seed: int) -> UserConfiguration:
    """Poisson process with intensity lambda * mu on W."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(lam * geom.mu_total))
    return UserConfiguration(lam, sample_mu(rng, geom, n))


def sir(users: UserConfiguration, i: int, x, model: PathLoss) -> float:
    """ell(|X_i - x|) / (lambda^-1 sum_j ell(|X_j - x|)), own term included."""
    if users.N == 0:
        raise EmptyConfigurationError("SIR undefined for an empty configuration")
    if not 0 <= i < users.N:
        raise IndexError(i)
    xp = as_points(x, users.d)[0]
    dist = np.linalg.norm(users.points - xp, axis=1)
    ell = model(dist)
    return float(ell[i] / (ell.sum() / users.lam))


def sir_inverse_table(users: UserConfiguration, model: PathLoss) -> np.ndarray:
    """N x (N+1) table of SIR(X_i -> y)^-1; columns are users, last is o."""
    if users.N == 0:
        raise EmptyConfigurationError("SIR undefined for an empty configuration")
    pts = users.points
    targets = np.vstack([pts, np.zeros((1, users.d))])
    dist = np.linalg.norm(pts[:, None, :] - targets[None, :, :], axis=2)
    ell = model(dist)
    interference = ell.sum(axis=0) / users.lam
    return interference[None, :] / ell
