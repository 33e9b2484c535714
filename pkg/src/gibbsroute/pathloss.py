"""Path-loss models ell(r) and their radial integrals.

Three families are supported::

    IdealHertz(alpha)      ell(r) = min(1, r**-alpha)
    ShiftedPower(K, alpha) ell(r) = (K + r)**-alpha
    Exponential(alpha)     ell(r) = exp(-alpha * r)

Besides point evaluation every model carries closed forms for the radial
antiderivatives ``L(s) = int_0^s ell`` and ``F(s) = int_0^s u ell(u) du``;
the interference fields are assembled from these.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

__all__ = [
    "PathLoss",
    "IdealHertz",
    "ShiftedPower",
    "Exponential",
    "DivergenceError",
    "unit_ball_volume",
]

KINDS = ("hertz", "shifted", "exponential")


class DivergenceError(ValueError):
    """Raised when int ell(|y|) dy over R^d is infinite."""


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class PathLoss:
    """A monotone path-loss function.

    Parameters
    ----------
    kind : {"hertz", "shifted", "exponential"}
    alpha : float
        Decay exponent or rate, positive.
    K : float
        Shift of the shifted power law; ignored by the other kinds.
    """

    kind: str
    alpha: float
    K: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown path-loss kind {self.kind!r}; expected one of {KINDS}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind == "shifted" and not self.K > 0:
            raise ValueError("shift K must be positive")

    # -- evaluation -----------------------------------------------------
    @property
    def strictly_decreasing(self) -> bool:
        return self.kind != "hertz"

    @property
    def value_at_zero(self) -> float:
        return float(self(0.0))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        a = self.alpha
        if self.kind == "hertz":
            with np.errstate(divide="ignore"):
                out = np.where(r <= 1.0, 1.0, np.power(np.maximum(r, 1.0), -a))
        elif self.kind == "shifted":
            out = np.power(self.K + r, -a)
        else:
            out = np.exp(-a * r)
        return out if out.ndim else float(out)

    def inverse(self, r):
        """1 / ell(r), computed without forming ell (avoids underflow)."""
        r = np.asarray(r, dtype=float)
        a = self.alpha
        if self.kind == "hertz":
            out = np.power(np.maximum(r, 1.0), a)
        elif self.kind == "shifted":
            out = np.power(self.K + r, a)
        else:
            out = np.exp(a * r)
        return out if out.ndim else float(out)

    def derivative(self, r):
        """ell'(r). For the Hertz kink at r = 1 the right derivative is used."""
        r = np.asarray(r, dtype=float)
        a = self.alpha
        if self.kind == "hertz":
            out = np.where(r < 1.0, 0.0, -a * np.power(np.maximum(r, 1.0), -a - 1.0))
        elif self.kind == "shifted":
            out = -a * np.power(self.K + r, -a - 1.0)
        else:
            out = -a * np.exp(-a * r)
        return out if out.ndim else float(out)

    def extended(self, r):
        """Analytic continuation of ell to r < 0 (for centred differences at 0).

        Hertz is continued by its plateau value 1.
        """
        r = np.asarray(r, dtype=float)
        if self.kind == "hertz":
            out = np.where(r <= 1.0, 1.0, np.power(np.maximum(r, 1.0), -self.alpha))
        elif self.kind == "shifted":
            out = np.power(self.K + r, -self.alpha)
        else:
            out = np.exp(-self.alpha * r)
        return out if out.ndim else float(out)

    # -- radial integrals ------------------------------------------------
    def antiderivative(self, s):
        """L(s) = int_0^|s| ell(u) du, extended as an odd function of s."""
        s = np.asarray(s, dtype=float)
        x = np.abs(s)
        a, K = self.alpha, self.K
        if self.kind == "hertz":
            xe = np.maximum(x, 1.0)
            tail = np.log(xe) if a == 1 else (1.0 - xe ** (1.0 - a)) / (a - 1.0)
            v = np.where(x <= 1.0, x, 1.0 + tail)
        elif self.kind == "shifted":
            if a == 1:
                v = np.log((K + x) / K)
            else:
                v = (K ** (1.0 - a) - (K + x) ** (1.0 - a)) / (a - 1.0)
        else:
            v = -np.expm1(-a * x) / a
        out = np.sign(s) * v
        return out if out.ndim else float(out)

    def first_moment(self, s):
        """F(s) = int_0^s u ell(u) du for s >= 0."""
        x = np.maximum(np.asarray(s, dtype=float), 0.0)
        a, K = self.alpha, self.K
        if self.kind == "hertz":
            xe = np.maximum(x, 1.0)
            tail = np.log(xe) if a == 2 else (xe ** (2.0 - a) - 1.0) / (2.0 - a)
            v = np.where(x <= 1.0, 0.5 * x * x, 0.5 + tail)
        elif self.kind == "shifted":
            u = K + x
            p2 = np.log(u / K) if a == 2 else (u ** (2.0 - a) - K ** (2.0 - a)) / (2.0 - a)
            p1 = np.log(u / K) if a == 1 else (u ** (1.0 - a) - K ** (1.0 - a)) / (1.0 - a)
            v = p2 - K * p1
        else:
            ax = a * x
            v = (1.0 - np.exp(-ax) * (1.0 + ax)) / (a * a)
        return v if np.ndim(v) else float(v)

    def total_mass(self, d: int) -> float:
        """b = int_{R^d} ell(|y|) dy.

        Raises
        ------
        DivergenceError
            For power laws with alpha <= d.
        """
        if d < 1:
            raise ValueError("dimension must be >= 1")
        a = self.alpha
        wd = unit_ball_volume(d)
        if self.kind == "hertz":
            if a <= d:
                raise DivergenceError(f"min(1, r^-{a}) is not integrable in dimension {d}")
            return wd * a / (a - d)
        if self.kind == "shifted":
            if a <= d:
                raise DivergenceError(f"(K+r)^-{a} is not integrable in dimension {d}")
            return d * wd * self.K ** (d - a) * float(special.beta(d, a - d))
        return d * wd * math.gamma(d) / a**d

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        out = {"pathloss_kind": self.kind, "alpha": self.alpha}
        if self.kind == "shifted":
            out["pathloss_shift"] = self.K
        return out


def IdealHertz(alpha: float) -> PathLoss:
    return PathLoss("hertz", float(alpha))


def ShiftedPower(K: float, alpha: float) -> PathLoss:
    return PathLoss("shifted", float(alpha), float(K))


def Exponential(alpha: float) -> PathLoss:
    return PathLoss("exponential", float(alpha))
