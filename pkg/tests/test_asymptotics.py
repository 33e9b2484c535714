import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from gibbsroute.asymptotics import (
    OutOfRegimeError,
    RateFunction,
    argmax_k_probe,
    gamma_ladder,
    hop_deviation_statistic,
    hop_scale,
    is_log_weights,
    laplace_log_ak,
    strong_gamma_check,
    transfer_log_weights,
)
from gibbsroute.geometry import Geometry
from gibbsroute.limit import LimitKernel
from gibbsroute.pathloss import Exponential, IdealHertz, ShiftedPower


@settings(max_examples=50)
@given(st.integers(1, 2), st.floats(2.5, 8), st.floats(0.1, 10), st.floats(0.1, 10))
def test_rate_minimizer_closed_form(d, alpha, gamma, b):
    rf = RateFunction(d, alpha, gamma, b)
    assert rf.numerical_argmin() == pytest.approx(rf.t_star, rel=1e-8)
    assert rf.min_value == pytest.approx(float(rf(rf.t_star)), rel=1e-12)
    brute = optimize.minimize_scalar(lambda u: float(rf(math.exp(u))), bounds=(-10, 10), method="bounded", options={"xatol": 1e-12})
    assert rf.min_value == pytest.approx(brute.fun, rel=1e-9)


def test_rate_from_model():
    rf = RateFunction.from_model(IdealHertz(4), 1, 1.0)
    assert rf.b == pytest.approx(8 / 3)
    assert rf.t_star == pytest.approx(8.0 ** 0.25)
    with pytest.raises(ValueError):
        RateFunction(2, 2.0, 1.0, 1.0)


def test_hop_scale():
    assert hop_scale(IdealHertz(4), 100.0) == pytest.approx(100 / math.log(100) ** 0.25)
    assert hop_scale(Exponential(2.0), 1e4) == pytest.approx(2 * 1e4 / math.log(math.log(1e4)))
    r0 = 1e3
    k = hop_scale(ShiftedPower(1, 4), r0)
    assert (1 + r0 / k) ** 4 == pytest.approx(math.log(r0))
    with pytest.raises(OutOfRegimeError):
        hop_scale(IdealHertz(4), 0.5)
    with pytest.raises(OutOfRegimeError):
        hop_scale(IdealHertz(4), 2.0)


@pytest.fixture(scope="module")
def line10():
    return LimitKernel(Geometry(d=1, radius=10.0, kmax=3), IdealHertz(4), mc_samples=200000)


def test_transfer_matches_quadrature_and_mc(line10):
    la = transfer_log_weights(line10, 6.0, 3, h=0.005)
    assert la[0] == pytest.approx(line10.a_k(6.0, 1).log_value, abs=1e-12)
    assert la[1] == pytest.approx(line10.a_k(6.0, 2).log_value, abs=2e-3)
    e3 = line10.a_k(6.0, 3)
    assert la[2] == pytest.approx(e3.log_value, abs=4 * e3.rel_stderr + 5e-3)


def test_transfer_converges_in_h(line10):
    a = transfer_log_weights(line10, 6.0, 4, h=0.02)
    b = transfer_log_weights(line10, 6.0, 4, h=0.01)
    c = transfer_log_weights(line10, 6.0, 4, h=0.005)
    assert np.all(np.abs(c - b) < np.abs(b - a) + 1e-12)


def test_importance_sampling_agrees(line10):
    e = is_log_weights(line10, 6.0, [2, 3], n_samples=100000, seed=1)
    assert e[0].log_value == pytest.approx(line10.a_k(6.0, 2).log_value, abs=5 * e[0].rel_stderr + 1e-3)


def test_argmax_probe_small(line10):
    pr = argmax_k_probe(line10, 8.0, range(1, 8), method="transfer", h=0.01)
    assert pr.k_star == int(pr.ks[np.argmax(pr.log_a)])
    assert len(pr.rows()) == 7
    with pytest.raises(ValueError):
        argmax_k_probe(line10, 8.0, [1, 2], method="simpson")


def test_hop_deviation_collinear_is_zero():
    traj = np.array([[5.0, 0.0], [3.0, 0.0], [1.5, 0.0], [0.2, 0.0], [0.0, 0.0]])
    assert hop_deviation_statistic(traj, 100.0, 0.5) == 0.0


def test_hop_deviation_picks_largest_gaps():
    # hop 1 is a 3-4-5 sidestep with gap 5 - 1 = 4; hop 2 is radial
    traj = np.array([[4.0, 0.0], [0.0, 3.0], [0.0, 1.0], [0.0, 0.0]])
    scale = math.log(50.0) ** 0.25
    assert hop_deviation_statistic(traj, 50.0, 0.3) == pytest.approx(4 / scale)
    assert hop_deviation_statistic(traj, 50.0, 0.6) == pytest.approx(2 / scale)
    with pytest.raises(ValueError):
        hop_deviation_statistic(traj, 50.0, 0.9)
    with pytest.raises(ValueError):
        hop_deviation_statistic(traj[:-1], 50.0, 0.3)


@pytest.fixture(scope="module")
def disk3():
    return LimitKernel(Geometry(d=2, radius=3.0, kmax=3), ShiftedPower(1, 4))


def test_strong_gamma_straight(disk3):
    rng = np.random.default_rng(5)
    for _ in range(4):
        r, th = 3 * math.sqrt(rng.uniform(0.05, 1)), rng.uniform(0, 2 * math.pi)
        res = strong_gamma_check(disk3, [r * math.cos(th), r * math.sin(th)], 3)
        assert res.line_distance < 1e-6 * 3
        assert res.decreasing_norms


def test_laplace_matches_quadrature(disk3):
    x0 = np.array([2.4, 0.0])
    K = disk3.with_gamma(20.0)
    est = laplace_log_ak(K, x0, 2, n_samples=40000)
    assert est.log_value == pytest.approx(K.a_k(x0, 2).log_value, abs=5 * est.rel_stderr + 1e-3)


def test_gamma_ladder_decays(disk3):
    lad = gamma_ladder(disk3, [2.5, 0.0], 3, seed=0)
    assert lad.slope < 0
    assert lad.excess_energy > 0
    assert lad.slope == pytest.approx(lad.predicted_slope, rel=0.1)
    with pytest.raises(ValueError):
        gamma_ladder(LimitKernel(Geometry(d=1, radius=3.0, kmax=2), IdealHertz(4)), 2.0, 2)
