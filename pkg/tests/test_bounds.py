import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jlssabs.bounds import (GainSlopes, bound_curves, infinite_horizon_bound, moment_bound,
                            pointwise_probability_bound, sup_probability_bound, triangle_bound,
                            write_bounds_csv)
from jlssabs.errors import InvalidArgs, NegativeInput

G = GainSlopes(a=1.0, h=1.35, r_e=0.16, r_i=0.0)


def test_moment_bound_closed_form():
    t = np.array([0.0, 1.0, 10.0])
    b = moment_bound(G, 2.0, 4.0, 0.0, t)
    np.testing.assert_allclose(b, 2.0 * np.exp(-1.35 * t) + 0.16 * 4.0 / 1.35)
    assert moment_bound(G, 0.0, 0.0, 0.0, 5.0) == 0.0


def test_moment_bound_rejects_negative():
    with pytest.raises(NegativeInput):
        moment_bound(G, -1.0, 0.0, 0.0, 1.0)


def test_pointwise_is_markov_on_root():
    b = pointwise_probability_bound(G, 0.25, 0.0, 0.0, 2.0, 0.0)
    assert b == pytest.approx(0.5 / 2.0)
    assert pointwise_probability_bound(G, 100.0, 0.0, 0.0, 0.1, 0.0) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.01, 10),
       st.floats(0.1, 20), st.integers(1, 4))
def test_sup_branches_agree_at_boundary(a, h, eps, V0frac, T, k):
    g = GainSlopes(a=a, h=h, r_e=1.0, k=k)
    aek = a * eps ** k
    c = aek * h  # boundary a eps^k = c / theta
    V0 = min(V0frac, 0.99) * aek
    hi = sup_probability_bound(g, V0, eps, T, c, clamp=False)
    lo = sup_probability_bound(g, V0, eps, T, c * (1 + 1e-12), clamp=False)
    assert lo == pytest.approx(hi, rel=1e-9, abs=1e-12)


def test_sup_bound_tends_to_infinite_horizon():
    for V0 in (0.1, 0.5, 0.9):
        b = sup_probability_bound(G, V0, 1.0, 1e6, 0.0)
        assert b == pytest.approx(infinite_horizon_bound(G, V0, 1.0), rel=1e-12)


def test_sup_bound_validation():
    with pytest.raises(InvalidArgs):
        sup_probability_bound(G, 1.0, 0.0, 1.0, 0.0)
    with pytest.raises(InvalidArgs):
        infinite_horizon_bound(G, 1.0, 0.0)


def test_triangle_bound():
    assert triangle_bound(1.0, 1.0) == pytest.approx(4.0)
    f = triangle_bound(lambda t: t, 4.0)
    assert f(1.0) == pytest.approx(9.0)
    with pytest.raises(NegativeInput):
        triangle_bound(-1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100))
def test_triangle_dominates_sum(b1, b2):
    assert triangle_bound(b1, b2) >= b1 + b2 - 1e-9


def test_gain_slopes_validation():
    with pytest.raises(InvalidArgs):
        GainSlopes(a=0.0, h=1.0, r_e=0.0)


def test_curves_zero_when_nothing_drives_the_error(tmp_path):
    t = np.linspace(0, 2, 5)
    c = bound_curves(G, t, 0.0)
    for key in ("moment", "pointwise_probability", "sup_probability", "infinite_horizon"):
        assert np.all(c[key] == 0.0)
    write_bounds_csv(tmp_path / "b.csv", c)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].split(",")[0] == "t" and len(lines) == 6


def test_moment_exponent_is_decay_slope():
    t = np.linspace(0, 5, 11)
    b = moment_bound(G, 1.0, 0.0, 0.0, t)
    np.testing.assert_allclose(np.diff(np.log(b)) / np.diff(t), -1.35)
