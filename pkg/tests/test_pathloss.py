import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from gibbsroute.pathloss import DivergenceError, Exponential, IdealHertz, PathLoss, ShiftedPower, unit_ball_volume

MODELS = [IdealHertz(4), IdealHertz(2.5), ShiftedPower(1, 4), ShiftedPower(0.5, 3), Exponential(1.5)]


def test_values():
    h = IdealHertz(4)
    assert h(0.0) == 1.0 and h(1.0) == 1.0
    assert h(2.0) == pytest.approx(1 / 16)
    assert ShiftedPower(1, 4)(1.0) == pytest.approx(1 / 16)
    assert Exponential(2)(0.5) == pytest.approx(math.exp(-1))


def test_rejects_bad_parameters():
    with pytest.raises(ValueError, match="kind"):
        PathLoss("cubic", 4)
    with pytest.raises(ValueError, match="alpha"):
        IdealHertz(0)
    with pytest.raises(ValueError, match="shift"):
        ShiftedPower(0, 4)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}-{m.alpha}")
def test_antiderivatives_match_quadrature(model):
    for s in (0.3, 1.0, 2.7, 9.0):
        L = integrate.quad(model, 0, s, points=[1.0] if s > 1 else None)[0]
        F = integrate.quad(lambda u: u * model(u), 0, s, points=[1.0] if s > 1 else None)[0]
        assert model.antiderivative(s) == pytest.approx(L, rel=1e-10)
        assert model.antiderivative(-s) == pytest.approx(-L, rel=1e-10)
        assert model.first_moment(s) == pytest.approx(F, rel=1e-10)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}-{m.alpha}")
def test_derivative_and_inverse(model):
    r = np.array([0.2, 0.7, 1.5, 3.0])
    h = 1e-6
    fd = (model(r + h) - model(r - h)) / (2 * h)
    assert np.allclose(model.derivative(r), fd, rtol=1e-6, atol=1e-12)
    assert np.allclose(model.inverse(r) * model(r), 1.0)


def test_inverse_is_exact_far_out():
    m = ShiftedPower(1, 4)
    assert math.log(m.inverse(1e70)) == pytest.approx(4 * math.log(1e70 + 1))
    assert Exponential(1).inverse(700.0) == pytest.approx(math.exp(700.0))


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}-{m.alpha}")
def test_total_mass(model, d):
    if model.kind != "exponential" and model.alpha <= d:
        pytest.skip("divergent")
    radial = integrate.quad(lambda r: r ** (d - 1) * model(r), 0, np.inf, limit=200)[0]
    assert model.total_mass(d) == pytest.approx(d * unit_ball_volume(d) * radial, rel=1e-7)


def test_total_mass_simple_values():
    assert IdealHertz(4).total_mass(1) == pytest.approx(8 / 3)
    assert ShiftedPower(1, 4).total_mass(1) == pytest.approx(2 / 3)


def test_divergent_mass():
    with pytest.raises(DivergenceError):
        IdealHertz(2).total_mass(2)
    with pytest.raises(DivergenceError):
        ShiftedPower(1, 1).total_mass(1)


@given(st.floats(0, 50), st.floats(0, 50), st.sampled_from(MODELS))
def test_monotone_nonincreasing(r, s, model):
    lo, hi = min(r, s), max(r, s)
    assert model(hi) <= model(lo)
    if model.strictly_decreasing and hi > lo + 1e-9:
        assert model(hi) < model(lo) or model(lo) == 0.0


@settings(max_examples=50)
@given(st.floats(0.01, 30))
def test_extended_agrees_on_positive_axis(r):
    for m in MODELS:
        assert m.extended(r) == pytest.approx(m(r))
