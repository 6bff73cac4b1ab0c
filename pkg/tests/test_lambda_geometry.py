import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildflow.lambda_geometry import (StateU, as_states, cone_residual, constraint_defect, dist_to_K,
                                      dist_to_K_bruteforce, in_cone, lambda_convex_f, nearest_K_param,
                                      segment_in_cone, state, to_matrix)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
states = st.tuples(finite, finite, finite, finite, finite).map(np.array)


def test_state_layout():
    s = state(0.5, (1.0, 2.0), (3.0, 4.0))
    assert s.tolist() == [0.5, 1.0, 2.0, 3.0, 4.0]
    u = StateU.from_array(s)
    assert np.array_equal(u.as_array(), s)
    with pytest.raises(ValueError):
        as_states(np.zeros(4))


def test_cone_residual_closed_form():
    s = state(2.0, (1.0, -1.0), (0.0, 0.0))
    assert cone_residual(s) == pytest.approx(2.0 * (1 + 1 - 2))


@given(states)
def test_cone_is_minus_det(s):
    assert abs(cone_residual(s) + np.linalg.det(to_matrix(s))) <= 1e-10 * (1 + np.linalg.norm(s) ** 3)


@given(finite, finite, finite, finite, finite)
def test_difference_of_K_points_on_cone_when_rho_equal(r, u1, u2, w1, w2):
    # states in K with equal rho differ by (0, du, r du): cone residual 0
    a = state(r, (u1, u2), (r * u1, r * u2))
    b = state(r, (w1, w2), (r * w1, r * w2))
    assert cone_residual(a - b) == 0.0
    assert in_cone(a - b)


def test_in_cone_relative_tolerance():
    s = state(1.0, (0.0, -1.0), (5.0, 5.0))  # v1^2 + v2^2 + rho v2 = 0
    assert in_cone(s)
    assert not in_cone(s + state(0, (0.1, 0), (0, 0)))
    assert segment_in_cone(np.zeros(5), s)


def test_barrier_zero_on_K_and_defect():
    k = state(0.7, (0.3, -0.2), (0.7 * 0.3, 0.7 * -0.2))
    assert lambda_convex_f(k) == pytest.approx(0.0, abs=1e-15)
    assert constraint_defect(k) == pytest.approx(0.0, abs=1e-15)
    assert dist_to_K(k) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.tuples(*[st.floats(-1, 1)] * 5).map(np.array))
def test_dist_matches_bruteforce(s):
    d = dist_to_K(s)
    b = dist_to_K_bruteforce(s, lim=2.5, step=2e-3)
    assert d <= b + 1e-9
    assert b - d <= 5e-3


def test_nearest_point_realizes_distance():
    s = state(0.3, (0.2, -0.5), (0.4, 0.1))
    r, u, d2 = nearest_K_param(s)
    p = state(float(r), tuple(u), tuple(r * u))
    assert np.linalg.norm(s - p) ** 2 == pytest.approx(float(d2), rel=1e-10)


def test_dist_vectorized_shape():
    a = np.random.default_rng(0).normal(size=(3, 4, 5))
    d = dist_to_K(a)
    assert d.shape == (3, 4)
    assert d[1, 2] == pytest.approx(dist_to_K(a[1, 2]))
