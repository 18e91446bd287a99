import math

import numpy as np
import pytest

from stochwave.quadrature import interval_rule, triangle_rule


@pytest.mark.parametrize("degree", range(13))
def test_interval_rule_exact_on_monomials(degree):
    x, w = interval_rule(degree)
    for k in range(degree + 1):
        assert np.dot(w, x**k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


def _tri_monomial_exact(a, b):
    # integral of x^a y^b over the triangle (0,0),(1,0),(0,1)
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 8, 12])
def test_triangle_rule_exact_on_monomials(degree):
    pts, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(0.5, rel=1e-13)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = np.dot(w, pts[:, 0] ** a * pts[:, 1] ** b)
            assert val == pytest.approx(_tri_monomial_exact(a, b), rel=1e-12, abs=1e-15)


def test_triangle_points_inside():
    for degree in (2, 5, 9):
        pts, w = triangle_rule(degree)
        assert np.all(pts >= -1e-14)
        assert np.all(pts.sum(axis=1) <= 1 + 1e-14)
