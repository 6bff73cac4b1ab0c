import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildflow.errors import DegenerateDirection, IterationCap
from wildflow.lambda_geometry import state
from wildflow.quadrature import ball_rule
from wildflow.suites import default_direction
from wildflow.wave_potential import (ZETA1_MAX, ZETA2_MAX, Domain, SawtoothProfile, WavePatch,
                                     ball_slab_measure, ball_volume, building_block, cutoff_radial,
                                     d_operator, distance_to_segment, greedy_ball_cover, n_min,
                                     patch_field, plateau_stripes, potential_apply, sawtooth_eval,
                                     wave_coefficients)

U = default_direction()


def test_sawtooth_values_and_integrals():
    p = SawtoothProfile(1 / 3)
    S, s, ds = sawtooth_eval(p, np.array([0.1, 0.5, 0.9, 1 / 6]))
    assert ds.tolist() == pytest.approx([2 / 3, -1 / 3, 2 / 3, 2 / 3])  # left value at the jump 1/6
    assert S[1] == pytest.approx(p.lam * (1 - p.lam) / 8)
    assert p.S_max == pytest.approx(S[1])


@given(st.floats(0.05, 0.95), st.floats(0.0, 0.5))
def test_sawtooth_symmetry(lam, x):
    p = SawtoothProfile(lam)
    S1, s1, _ = sawtooth_eval(p, 0.5 + x)
    S2, s2, _ = sawtooth_eval(p, 0.5 - x)
    assert S1 == pytest.approx(S2, abs=1e-14)
    assert s1 == pytest.approx(-s2, abs=1e-14)


@given(st.floats(0.05, 0.95), st.floats(-3, 3))
def test_sawtooth_derivatives(lam, x):
    p = SawtoothProfile(lam)
    h = 1e-6
    a, b = p.jumps()
    y = x - np.floor(x)
    if min(abs(y - a), abs(y - b)) < 1e-4:
        return
    Sp, sp, _ = sawtooth_eval(p, x + h)
    Sm, sm, _ = sawtooth_eval(p, x - h)
    _, s, ds = sawtooth_eval(p, x)
    assert (Sp - Sm) / (2 * h) == pytest.approx(s, abs=1e-7)
    assert (sp - sm) / (2 * h) == pytest.approx(ds, abs=1e-7)


def test_wave_coefficients_reference():
    xi, c, d = wave_coefficients(state(1.0, (0.0, -1.0), (0.3, -0.2)))
    np.testing.assert_allclose(xi, [1.0, 0.0, -0.3], atol=1e-15)
    assert (c, d) == pytest.approx((-0.3, -0.2))


def test_wave_coefficients_degenerate():
    with pytest.raises(DegenerateDirection):
        wave_coefficients(state(0.0, (1.0, 0.0), (0.0, 0.0)))
    with pytest.raises(DegenerateDirection):
        wave_coefficients(state(1.0, (1.0, 1.0), (0.0, 0.0)))


def test_plane_wave_reproduces_direction():
    # D(d|xi| s(N k.y)/N, beta |xi|^2 S(N k.y)/N^2) = s'(N k.y) U
    xi, c, d = wave_coefficients(U)
    n = np.linalg.norm(xi)
    k = xi / n
    beta = np.sign(U[0])
    gphi = lambda y: (None, d * n * np.outer([1.0], k)[0])  # noqa: E731
    hpsi = lambda y: (None, None, beta * n * n * np.outer(k, k))  # noqa: E731
    np.testing.assert_allclose(potential_apply(gphi, hpsi, np.zeros(3)), U, atol=1e-12)


def _fd_field(p, eta, h=1e-4):
    """Field from finite differences of the cut-off potentials in local coordinates."""
    n2, N = p.xi_norm**2, p.N

    def pots(e):
        r = np.linalg.norm(e)
        Z = cutoff_radial(r, p.cutoff_width)[0]
        S, s, _ = sawtooth_eval(p.profile, p.phase(e))
        return Z * p.beta * n2 * S / N**2, Z * p.d * p.xi_norm * s / N

    E = np.eye(3) * h
    g = np.array([(pots(eta + E[i])[1] - pots(eta - E[i])[1]) / (2 * h) for i in range(3)])
    H = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            H[i, j] = (pots(eta + E[i] + E[j])[0] - pots(eta + E[i] - E[j])[0]
                       - pots(eta - E[i] + E[j])[0] + pots(eta - E[i] - E[j])[0]) / (4 * h * h)
    return d_operator(g, H)


def test_annulus_field_matches_potentials():
    p = WavePatch(np.zeros(3), 1.0, U, 1 / 3, 3, cutoff_width=0.3)
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(40):
        d = rng.normal(size=3)
        eta = d / np.linalg.norm(d) * rng.uniform(0.75, 0.95)
        theta = p.phase(eta)
        y = theta - np.floor(theta)
        if min(abs(y - a) for a in (*p.profile.jumps(), 0.0, 1.0)) < 0.02:
            continue
        np.testing.assert_allclose(patch_field(p, eta), _fd_field(p, eta), atol=2e-5)
        checked += 1
    assert checked >= 10


def test_plateau_field_on_segment_and_outside_zero():
    p = WavePatch(np.array([0.5, 0.5, 0.5]), 0.2, U, 0.25, 16)
    pts = p.center + 0.2 * np.random.default_rng(0).uniform(-0.85, 0.85, (2000, 3)) / np.sqrt(3)
    f = patch_field(p, pts)
    hi, lo = p.endpoints()
    assert distance_to_segment(f, lo, hi).max() <= 1e-14
    assert np.abs(patch_field(p, np.array([[0.0, 0.0, 0.0]]))).max() == 0.0


def test_cutoff_derivatives_and_bounds():
    w = 0.2
    r = np.linspace(0.8, 1.0, 2001)
    Z, Z1, Z2 = cutoff_radial(r, w)
    assert Z[0] == 1.0 and abs(Z[-1]) <= 1e-15
    assert np.abs(Z1).max() * w <= ZETA1_MAX + 1e-12
    assert np.abs(Z2).max() * w * w <= ZETA2_MAX + 1e-9
    np.testing.assert_allclose(np.gradient(Z, r)[5:-5], Z1[5:-5], atol=1e-3)


def test_exact_measures():
    assert ball_slab_measure(1.0, -1.0, 1.0) == pytest.approx(4 * np.pi / 3)
    p = WavePatch(np.zeros(3), 0.3, U, 1 / 3, 8, cutoff_width=0.1)
    m = sum(s[3] for s in plateau_stripes(p))
    assert m == pytest.approx(float(ball_volume(0.3 * 0.9)), rel=1e-12)


def test_building_block_fractions():
    dom = Domain.ball((0.5, 0.5, 0.5), 0.5)
    _, st = building_block(dom, U, 1 / 3, 0.1, 64, 0.015)
    assert st.cutoff_budget <= 0.05
    assert st.high_fraction == pytest.approx((1 / 3) * (1 - st.epsilon_total), abs=0.01)
    assert st.n_min == n_min(0.1, U, 1 / 3, 0.015)


def test_greedy_cover_disjoint_and_inside():
    dom = Domain.box((0, 0, 0), (1, 1, 1))
    cov = greedy_ball_cover(dom, 0.6)
    c, r = cov.centers, cov.radii
    assert cov.covered_fraction >= 0.6
    assert np.all(dom.inner_distance(c) >= r - 1e-12)
    dd = np.linalg.norm(c[:, None] - c[None], axis=-1) - (r[:, None] + r[None])
    np.fill_diagonal(dd, 1.0)
    assert dd.min() >= -1e-12
    with pytest.raises(IterationCap):
        greedy_ball_cover(dom, 0.99, max_levels=1)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 6), st.floats(0.05, 0.3))
def test_ball_rule_volume(n_sub, w):
    p = WavePatch(np.zeros(3), 0.7, U, 0.4, 5, cutoff_width=w)
    # slab areas are quadratic in u: Gauss is exact, midpoint is second order
    r = ball_rule(p, n_sub, 6, 16, u_rule="gauss")
    assert r.weights.sum() == pytest.approx(float(ball_volume(0.7)), rel=1e-12)
    pl = ball_rule(p, n_sub, 6, 16, parts="plateau", u_rule="gauss")
    assert pl.weights.sum() == pytest.approx(float(ball_volume(0.7 * (1 - w))), rel=1e-12)
    mid = ball_rule(p, n_sub, 6, 16).weights.sum()
    assert mid == pytest.approx(float(ball_volume(0.7)), rel=2e-2 / n_sub**2)
