import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autobidlab import numerics
from autobidlab.errors import DomainError, NonFiniteIntegrand, NoSignChange
from autobidlab.numerics import Interval, Tolerance


def bisect(f, lo, hi, iters=200):
    """Plain bisection; slow but obviously correct."""
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_linear_root():
    assert numerics.find_root(lambda x: x - 0.5, (0.0, 1.0)) == pytest.approx(0.5, abs=1e-12)


def test_sqrt2_matches_bisection_oracle():
    f = lambda x: x * x - 2.0
    assert abs(numerics.find_root(f, (0.0, 2.0)) - bisect(f, 0.0, 2.0)) < 1e-9


def test_no_sign_change():
    with pytest.raises(NoSignChange):
        numerics.find_root(lambda x: x, (1.0, 2.0))


def test_root_needs_finite_bracket():
    with pytest.raises(DomainError):
        numerics.find_root(lambda x: x, (0.0, math.inf))


def test_endpoint_root_returned_exactly():
    assert numerics.find_root(lambda x: x * (1 - x), (0.0, 0.5)) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 20.0), st.integers(1, 5))
def test_root_of_power_matches_bisection(c, k):
    f = lambda x: x**k - c
    hi = max(2.0, c)
    assert numerics.find_root(f, (0.0, hi)) == pytest.approx(bisect(f, 0.0, hi), rel=1e-10, abs=1e-12)


def test_expand_bracket_finds_sign_change():
    f = lambda x: x - 1000.0
    hi = numerics.expand_bracket(f, 0.0, 1.0)
    assert f(hi) > 0 and hi <= 2048.0


def test_integrate_examples():
    assert numerics.integrate(lambda z: z, (0.0, 1.0)) == pytest.approx(0.5, abs=1e-12)
    assert numerics.integrate(lambda z: z**-2, (1.0, math.inf)) == pytest.approx(1.0, abs=1e-8)
    assert numerics.integrate(lambda z: z**3, (0.0, 0.7)) == pytest.approx(0.7**4 / 4, abs=1e-12)


def test_integrate_with_breakpoint():
    f = lambda z: 0.0 if z < 0.3 else 1.0
    assert numerics.integrate(f, (0.0, 1.0), breakpoints=[0.3]) == pytest.approx(0.7, abs=1e-10)


def test_integrate_rejects_nan():
    with pytest.raises(NonFiniteIntegrand):
        numerics.integrate(lambda z: math.nan, (0.0, 1.0))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 3.0))
def test_integrate_exponential_against_closed_form(rate, b):
    got = numerics.integrate(lambda z: math.exp(-rate * z), (0.0, b))
    assert got == pytest.approx((1 - math.exp(-rate * b)) / rate, rel=1e-9)


def test_maximize_examples():
    x, y = numerics.maximize_1d(lambda b: (1 - b) * b, (0.0, 1.0))
    assert (x, y) == (pytest.approx(0.5, abs=1e-7), pytest.approx(0.25, abs=1e-12))
    x, _ = numerics.maximize_1d(lambda b: (1 - b) * b**3, (0.0, 1.0))
    assert x == pytest.approx(0.75, abs=1e-6)


def test_maximize_constant_prefers_lower_end():
    assert numerics.maximize_1d(lambda b: 3.0, (0.2, 1.0)) == (0.2, 3.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0))
def test_maximize_beats_dense_grid(c):
    f = lambda x: -((x - c) ** 2) + 0.1 * math.sin(7 * x)
    grid = np.linspace(0, 1, 20001)
    best = max(f(float(x)) for x in grid)
    _, y = numerics.maximize_1d(f, (0.0, 1.0))
    assert y >= best - 1e-9


def test_interval_and_tolerance_validation():
    with pytest.raises(DomainError):
        Interval(1.0, 0.0)
    with pytest.raises(DomainError):
        Tolerance(max_iter=0)
    assert Interval(0.0, math.inf).bounded is False


def test_count_sign_changes():
    assert numerics.count_sign_changes([1, -1, -2, 3, 0, 4]) == 2


def test_chebyshev_nodes_in_unit_interval():
    nodes = numerics.chebyshev_nodes(9)
    assert len(nodes) == 9 and np.all((nodes >= 0) & (nodes <= 1))
