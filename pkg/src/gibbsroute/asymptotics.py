"""Large-distance and strong-interference diagnostics.

Large distances (transmitter at r0 -> infinity, Hertz path loss
``min(1, r**-alpha)``): the hop count maximizing a_k grows like
``t* r0 / log**(1/alpha) r0`` with ``t* = (b gamma (alpha-1)/d)**(1/alpha)``,
the minimizer of ``rate(t) = d t + b gamma t**(1-alpha)``.

Strong interference (gamma -> infinity, strictly decreasing ell): the
minimizing relays of ``sum_l g(x_{l-1}, x_l)`` lie on the segment from x0 to
o with strictly decreasing norms, and trajectories away from that segment
lose mass exponentially fast in gamma.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize, stats
from scipy.special import logsumexp

from .geometry import as_points
from .limit import Estimate, LimitKernel
from .pathloss import PathLoss
from .seeds import derive_seed

__all__ = [
    "RateFunction",
    "OutOfRegimeError",
    "hop_scale",
    "transfer_log_weights",
    "mc_log_weights",
    "is_log_weights",
    "ArgmaxProbe",
    "argmax_k_probe",
    "hop_deviation_statistic",
    "StrongGammaResult",
    "minimize_path_energy",
    "strong_gamma_check",
    "laplace_log_ak",
    "gamma_ladder",
]


class OutOfRegimeError(ValueError):
    pass


@dataclass(frozen=True)
class RateFunction:
    """t -> d t + b gamma t**(1-alpha)."""

    d: int
    alpha: float
    gamma: float
    b: float

    def __post_init__(self):
        if not self.alpha > self.d:
            raise ValueError("alpha must exceed d")
        if not (self.b > 0 and self.gamma > 0):
            raise ValueError("b and gamma must be positive")

    @classmethod
    def from_model(cls, model: PathLoss, d: int, gamma: float) -> "RateFunction":
        return cls(d, model.alpha, gamma, model.total_mass(d))

    def __call__(self, t):
        t = np.asarray(t, float)
        return self.d * t + self.b * self.gamma * t ** (1.0 - self.alpha)

    @property
    def t_star(self) -> float:
        return (self.b * self.gamma * (self.alpha - 1) / self.d) ** (1.0 / self.alpha)

    @property
    def min_value(self) -> float:
        """alpha/(alpha-1) d**(1-1/alpha) (b gamma (alpha-1))**(1/alpha)."""
        a = self.alpha
        return a / (a - 1) * self.d ** (1 - 1 / a) * (self.b * self.gamma * (a - 1)) ** (1 / a)

    def derivative(self, t):
        t = np.asarray(t, float)
        return self.d - (self.alpha - 1) * self.b * self.gamma * t ** (-self.alpha)

    def numerical_argmin(self, xtol: float = 1e-14) -> float:
        """Root of the derivative, bracketed by doubling from t = 1.

        Golden-section search on the values would stall at sqrt(eps)
        relative accuracy because the minimum is quadratic.
        """
        f = lambda t: float(self.derivative(t))
        lo, hi = 1.0, 1.0
        while f(lo) > 0:
            lo /= 2
        while f(hi) < 0:
            hi *= 2
        if lo == hi:
            return lo
        return optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def hop_scale(model: PathLoss, r0: float, xtol: float = 1e-14) -> float:
    """k with log r0 = 1 / ell(r0 / k), by monotone root finding in the hop length."""
    if not r0 > 1:
        raise OutOfRegimeError("hop scale needs r0 > 1")
    target = math.log(r0)
    if model.value_at_zero and 1.0 / model.value_at_zero >= target:
        raise OutOfRegimeError(f"1/ell >= {1.0 / model.value_at_zero:g} exceeds log r0 = {target:g}")
    f = lambda u: float(model.inverse(u)) - target
    hi = 1.0
    while f(hi) < 0:
        hi *= 2
    lo = 0.0
    if model.kind == "hertz":
        lo = 1.0 if hi > 1 else 0.0
    u = optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return r0 / u


# -- a_k at large distance ---------------------------------------------------------


def transfer_log_weights(kernel: LimitKernel, x0: float, kmax: int, h: float, band: Optional[float] = None) -> np.ndarray:
    """log a_k(x0), k = 1..kmax, in d = 1 by a discretized transfer recursion.

    a_k(x0) = (K^{k-1} phi)(x0) with ``K(x, y) = exp(-gamma g(x, y)) mu(dy)/mu(W)``
    and ``phi(x) = exp(-gamma g(x, o))``.  The relay integral uses the
    trapezoid rule on a grid of step h through x0; hops longer than `band`
    are dropped (default: three hop scales, at least 3), which can only lower
    the estimate.  The recursion runs on the log scale.
    """
    if kernel.d != 1:
        raise ValueError("transfer recursion is implemented for d = 1")
    geom, model = kernel.geom, kernel.model
    r = geom.radius
    x0 = float(x0)
    jlo = -int(math.floor((x0 + r) / h + 1e-9))
    jhi = int(math.floor((r - x0) / h + 1e-9))
    x = x0 + h * np.arange(jlo, jhi + 1)
    n = len(x)
    i0 = -jlo
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    if band is None:
        try:
            band = 3.0 * max(1.0, abs(x0) / hop_scale(model, max(abs(x0), 3.0)))
        except OutOfRegimeError:
            band = 3.0
        band = max(band, 3.0)
    B = min(n - 1, int(math.ceil(band / h)))
    field_y = kernel.field(x)
    logw = np.log(w * geom.mu_density(x)) - kernel.log_mu_W
    gam = kernel.gamma
    offs = np.arange(-B, B + 1)
    # logK[o, i] = log K(x_i, x_{i+o}) for i+o inside the grid, else -inf
    inv = model.inverse(np.abs(offs) * h)
    logK = np.full((len(offs), n), -np.inf)
    for a, o in enumerate(offs):
        lo, hi = max(0, -o), min(n, n - o)
        j = np.arange(lo, hi) + o
        logK[a, lo:hi] = -gam * field_y[j] * inv[a] + logw[j]
    logphi = -gam * kernel.field(np.zeros(1))[0] * model.inverse(np.abs(x))
    out = np.empty(kmax)
    lv = logphi
    out[0] = lv[i0]
    buf = np.empty_like(logK)
    pad = np.full(n + 2 * B, -np.inf)
    for k in range(2, kmax + 1):
        pad[B : B + n] = lv
        win = sliding_window_view(pad, n)  # win[a, i] = lv[i + offs[a]]
        np.add(logK, win, out=buf)
        mx = buf.max(axis=0)
        mx = np.where(np.isfinite(mx), mx, 0.0)
        np.subtract(buf, mx, out=buf)
        np.exp(buf, out=buf)
        with np.errstate(divide="ignore"):
            lv = np.log(buf.sum(axis=0)) + mx
        out[k - 1] = lv[i0]
    return out


def mc_log_weights(kernel: LimitKernel, x0, ks: Sequence[int], n_samples: Optional[int] = None, seed: int = 0) -> list[Estimate]:
    return [kernel.a_k(x0, int(k), n_samples=n_samples, seed=derive_seed(seed, "mc", int(k))) for k in ks]


def is_log_weights(kernel: LimitKernel, x0, ks: Sequence[int], n_samples: int = 20000, seed: int = 0) -> list[Estimate]:
    """Importance sampling around the equal-hop straight path.

    Relay l is drawn from a Gaussian at ``(1 - l/k) x0`` with variance equal
    to the hop length |x0|/k per coordinate.
    """
    x0 = kernel.point(x0)
    d = kernel.d
    r0 = float(np.linalg.norm(x0))
    geom = kernel.geom
    out = []
    for k in ks:
        k = int(k)
        if k == 1:
            out.append(kernel.a_k(x0, 1))
            continue
        rng = np.random.default_rng(derive_seed(seed, "is", k))
        sig = math.sqrt(max(r0 / k, 1e-12))
        c = 1.0 - np.arange(1, k) / k
        mean = c[:, None] * x0[None, :]
        z = rng.standard_normal((n_samples, k - 1, d))
        rel = mean[None] + sig * z
        logq = np.sum(-0.5 * z**2 - math.log(sig) - 0.5 * math.log(2 * math.pi), axis=(1, 2))
        dens = geom.mu_density(rel.reshape(-1, d)).reshape(n_samples, k - 1)
        inside = np.all(dens > 0, axis=1)
        lw = np.full(n_samples, -np.inf)
        if np.any(inside):
            e = kernel.path_energy(x0, rel[inside])
            lw[inside] = (
                np.sum(np.log(dens[inside]), axis=1) - (k - 1) * kernel.log_mu_W - kernel.gamma * e - logq[inside]
            )
        mx = lw.max()
        if not np.isfinite(mx):
            out.append(Estimate(-np.inf, math.inf, "importance", True, n_samples))
            continue
        wts = np.exp(lw - mx)
        mean_w = wts.mean()
        rse = float(wts.std(ddof=1) / math.sqrt(n_samples) / mean_w)
        out.append(Estimate(float(mx + math.log(mean_w)), rse, "importance", rse > kernel.max_rel_stderr, n_samples))
    return out


@dataclass
class ArgmaxProbe:
    ks: np.ndarray
    log_a: np.ndarray
    stderr: np.ndarray
    k_star: int
    resolved: bool
    method: str

    @property
    def inconclusive(self) -> bool:
        return not self.resolved

    def rows(self):
        return list(zip(self.ks.tolist(), self.log_a.tolist(), self.stderr.tolist()))


def argmax_k_probe(
    kernel: LimitKernel,
    x0,
    k_range: Sequence[int],
    method: str = "auto",
    h: float = 0.02,
    n_samples: Optional[int] = None,
    seed: int = 0,
    min_gap: float = 1e-3,
) -> ArgmaxProbe:
    """Hop count maximizing a_k(x0) over `k_range`.

    The maximum counts as resolved when it beats both neighbours by more
    than two combined standard errors and by at least `min_gap` in log a_k.
    For the transfer method the standard error is the change between grid
    steps 2h and h.
    """
    ks = np.array(sorted(int(k) for k in k_range))
    if method == "auto":
        method = "transfer" if kernel.d == 1 else "mc"
    if method == "transfer":
        kmax = int(ks.max())
        fine = transfer_log_weights(kernel, float(kernel.point(x0)[0]), kmax, h)
        coarse = transfer_log_weights(kernel, float(kernel.point(x0)[0]), kmax, 2 * h)
        la = fine[ks - 1]
        with np.errstate(invalid="ignore"):
            se = np.abs(fine - coarse)[ks - 1]
        se = np.where(np.isfinite(se), se, np.inf)
    elif method in ("mc", "is"):
        est = mc_log_weights(kernel, x0, ks, n_samples, seed) if method == "mc" else is_log_weights(kernel, x0, ks, n_samples or 20000, seed)
        la = np.array([e.log_value for e in est])
        # delta method: stderr of log a_k is the relative stderr
        se = np.array([e.rel_stderr for e in est])
    else:
        raise ValueError(f"unknown method {method!r}")
    j = int(np.argmax(la))
    resolved = True
    for nb in (j - 1, j + 1):
        if 0 <= nb < len(ks):
            gap = la[j] - la[nb]
            if not (gap > 2 * math.hypot(se[j], se[nb]) and gap >= min_gap):
                resolved = False
    return ArgmaxProbe(ks, la, se, int(ks[j]), resolved, method)


# -- hop-length deviations ---------------------------------------------------------


def hop_deviation_statistic(trajectory, r0: float, delta: float, alpha: float = 4.0) -> float:
    """max over I in [k-1], #I >= delta k, of the mean of
    (|x_{l-1} - x_l| - ||x_{l-1}| - |x_l||) / log**(1/alpha) r0 over l in I.

    `trajectory` is x_0, ..., x_k with x_k = o.  The maximum over subsets of
    at least m elements is the mean of the m largest gaps.
    """
    pts = np.asarray(trajectory, float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if not np.allclose(pts[-1], 0.0):
        raise ValueError("trajectory must end at o")
    k = len(pts) - 1
    m = max(1, int(math.ceil(delta * k - 1e-12)))
    if m > k - 1:
        raise ValueError(f"need at least {m} relay hops, trajectory has {k - 1}")
    a, b = pts[:-2], pts[1:-1]  # hops l = 1..k-1
    gaps = np.linalg.norm(a - b, axis=1) - np.abs(np.linalg.norm(a, axis=1) - np.linalg.norm(b, axis=1))
    gaps = np.maximum(gaps, 0.0)
    top = np.sort(gaps)[::-1][:m]
    return float(top.mean() / math.log(r0) ** (1.0 / alpha))


# -- strong interference -----------------------------------------------------------


def _energy_and_grad(kernel: LimitKernel, x0: np.ndarray, flat: np.ndarray):
    d = kernel.d
    rel = flat.reshape(-1, d)
    pts = np.vstack([x0[None], rel, np.zeros((1, d))])
    a, b = pts[:-1], pts[1:]
    diff = a - b
    dist = np.linalg.norm(diff, axis=1)
    model = kernel.model
    I_b = kernel.field(b)
    gI_b = kernel.field.gradient(b)
    inv = model.inverse(dist)
    # d(1/ell)/dr = -ell'/ell^2
    dinv = -model.derivative(dist) * inv * inv
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(dist[:, None] > 0, diff / dist[:, None], 0.0)
    E = float(np.sum(I_b * inv))
    grad_pts = np.zeros_like(pts)
    grad_pts[:-1] += (I_b * dinv)[:, None] * unit
    grad_pts[1:] += gI_b * inv[:, None] - (I_b * dinv)[:, None] * unit
    return E, grad_pts[1:-1].ravel()


@dataclass
class StrongGammaResult:
    x0: np.ndarray
    relays: np.ndarray
    value: float
    line_distance: float
    segment_distance: float
    decreasing_norms: bool
    fractions: np.ndarray
    converged: bool
    n_starts: int


def _dist_to_line(p: np.ndarray, x0: np.ndarray) -> np.ndarray:
    u = x0 / np.linalg.norm(x0)
    proj = p @ u
    return np.linalg.norm(p - proj[:, None] * u[None, :], axis=1)


def _dist_to_segment(p: np.ndarray, x0: np.ndarray) -> np.ndarray:
    L2 = float(x0 @ x0)
    c = np.clip(p @ x0 / L2, 0.0, 1.0)
    return np.linalg.norm(p - c[:, None] * x0[None, :], axis=1)


def minimize_path_energy(kernel: LimitKernel, x0, k: int, n_starts: int = 32, seed: int = 0, gtol: float = 1e-10):
    """Global minimum of sum_{l=1}^k g(x_{l-1}, x_l) over relays in W (multistart BFGS).

    Returns (relays of shape (k-1, d), value, converged).
    """
    x0 = kernel.point(x0)
    d = kernel.d
    if k == 1:
        return np.zeros((0, d)), float(kernel.g_to_origin(x0)[0]), True
    r = kernel.geom.radius
    rng = np.random.default_rng(derive_seed(seed, "strong", k))
    starts = [np.outer(1.0 - np.arange(1, k) / k, x0).ravel()]
    while len(starts) < n_starts:
        c = np.sort(rng.uniform(0, 1, k - 1))[::-1]
        jitter = rng.normal(scale=0.3 * max(1.0, np.linalg.norm(x0) / k), size=(k - 1, d))
        p = np.outer(c, x0) + jitter
        nrm = np.linalg.norm(p, axis=1, keepdims=True)
        p = np.where(nrm > r, p * (0.98 * r / nrm), p)
        starts.append(p.ravel())

    def fun(fl):
        p = fl.reshape(-1, d)
        nrm = np.linalg.norm(p, axis=1)
        over = np.maximum(nrm - r, 0.0)
        E, g = _energy_and_grad(kernel, x0, fl)
        # soft wall keeping relays inside W
        pen = 1e6 * np.sum(over**2)
        with np.errstate(invalid="ignore", divide="ignore"):
            gp = np.where(nrm[:, None] > 0, 2e6 * over[:, None] * p / nrm[:, None], 0.0)
        return E + pen, g + gp.ravel()

    best = None
    conv = False
    for s in starts:
        res = optimize.minimize(fun, s, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": 5000})
        if best is None or res.fun < best.fun - 1e-12:
            best = res
    # polish the winner; BFGS stops on the gradient tolerance
    res = optimize.minimize(fun, best.x, jac=True, method="BFGS", options={"gtol": gtol * 1e-2, "maxiter": 5000})
    if res.fun <= best.fun:
        best = res
    _, g = fun(best.x)
    conv = bool(np.max(np.abs(g)) < 1e-6 * max(1.0, abs(best.fun)))
    return best.x.reshape(-1, d), float(best.fun), conv


def strong_gamma_check(kernel: LimitKernel, x0, k: int, n_starts: int = 32, seed: int = 0) -> StrongGammaResult:
    """Minimizing relays of the k-hop energy with straightness diagnostics."""
    x0 = kernel.point(x0)
    rel, val, conv = minimize_path_energy(kernel, x0, k, n_starts, seed)
    if len(rel) == 0:
        return StrongGammaResult(x0, rel, val, 0.0, 0.0, True, np.zeros(0), conv, n_starts)
    norms = np.concatenate([[np.linalg.norm(x0)], np.linalg.norm(rel, axis=1), [0.0]])
    return StrongGammaResult(
        x0,
        rel,
        val,
        float(_dist_to_line(rel, x0).max()),
        float(_dist_to_segment(rel, x0).max()),
        bool(np.all(np.diff(norms) < 0)),
        np.linalg.norm(rel, axis=1) / np.linalg.norm(x0),
        conv,
        n_starts,
    )


def _hessian(kernel: LimitKernel, x0: np.ndarray, flat: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    n = len(flat)
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        H[:, i] = (_energy_and_grad(kernel, x0, flat + e)[1] - _energy_and_grad(kernel, x0, flat - e)[1]) / (2 * eps)
    return 0.5 * (H + H.T)


def laplace_log_ak(kernel: LimitKernel, x0, k: int, n_samples: int = 20000, seed: int = 0, minimizer=None) -> Estimate:
    """a_k(x0) by importance sampling from the Laplace approximation at the minimizing relays.

    The proposal is Gaussian with covariance (gamma H)^-1, H the Hessian of
    the path energy, widened by a factor 2 in variance for robustness.
    """
    x0 = kernel.point(x0)
    if k == 1:
        return kernel.a_k(x0, 1)
    if minimizer is None:
        minimizer = minimize_path_energy(kernel, x0, k, seed=seed)[0]
    mflat = np.asarray(minimizer, float).ravel()
    H = _hessian(kernel, x0, mflat)
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, 1e-8 * max(1.0, w.max()))
    cov = 2.0 * (V / (kernel.gamma * w)) @ V.T
    L = np.linalg.cholesky(cov)
    rng = np.random.default_rng(derive_seed(seed, "laplace", k))
    n = len(mflat)
    z = rng.standard_normal((n_samples, n))
    samp = mflat[None] + z @ L.T
    logq = -0.5 * np.sum(z**2, axis=1) - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    d = kernel.d
    rel = samp.reshape(n_samples, k - 1, d)
    dens = kernel.geom.mu_density(rel.reshape(-1, d)).reshape(n_samples, k - 1)
    inside = np.all(dens > 0, axis=1)
    lw = np.full(n_samples, -np.inf)
    e = kernel.path_energy(x0, rel[inside])
    lw[inside] = np.sum(np.log(dens[inside]), axis=1) - (k - 1) * kernel.log_mu_W - kernel.gamma * e - logq[inside]
    mx = lw.max()
    wts = np.exp(lw - mx)
    mean = wts.mean()
    rse = float(wts.std(ddof=1) / math.sqrt(n_samples) / mean)
    return Estimate(float(mx + math.log(mean)), rse, "laplace-importance", rse > kernel.max_rel_stderr, n_samples)


@dataclass
class GammaLadder:
    gammas: np.ndarray
    log_T: np.ndarray
    slope: float
    intercept: float
    predicted_slope: float
    point: np.ndarray
    excess_energy: float


def gamma_ladder(
    kernel: LimitKernel,
    x0,
    k: int,
    gammas: Sequence[float] = (2.0, 4.0, 8.0),
    eps: float = 0.5,
    n_samples: int = 20000,
    seed: int = 0,
) -> GammaLadder:
    """log T^gamma(k, x_hat) along a gamma ladder at a fixed point x_hat off the segment.

    x_hat is the k-hop minimizer with its first relay pushed a distance 2 eps
    perpendicular to [x0, o], so it lies in the deviation set for eps.  The
    fitted slope is compared with -(Xi(x_hat) - m), m the minimal energy over
    all hop counts.
    """
    if kernel.d < 2:
        raise ValueError("deviation sets are empty in d = 1")
    x0 = kernel.point(x0)
    kmax = kernel.kmax
    mins = {kk: minimize_path_energy(kernel, x0, kk, seed=seed) for kk in range(1, kmax + 1)}
    m_all = min(v[1] for v in mins.values())
    rel = mins[k][0].copy()
    u = x0 / np.linalg.norm(x0)
    perp = np.array([-u[1], u[0]])
    rel[0] = rel[0] + 2 * eps * perp
    xi = float(kernel.path_energy(x0, rel[None])[0])
    logT = []
    for gm in gammas:
        K = kernel.with_gamma(gm)
        las = [laplace_log_ak(K, x0, kk, n_samples, seed, mins[kk][0]).log_value for kk in range(1, kmax + 1)]
        logA = -float(logsumexp(las))
        logT.append(logA - (k - 1) * K.log_mu_W - gm * xi)
    gam = np.asarray(gammas, float)
    fit = stats.linregress(gam, logT)
    return GammaLadder(gam, np.array(logT), float(fit.slope), float(fit.intercept), -(xi - m_all), rel, xi - m_all)
