import numpy as np
import pytest

from wildflow.errors import BadShrink, CenterOnAxis, CornerEscape, NoAdmissibleDelta, NotMember, OutOfBall
from wildflow.lambda_geometry import cone_residual, dist_to_K, lambda_convex_f, state
from wildflow.t4_hull import (HullSpec, admissible_delta, admissible_delta_many, app_constants,
                              corner_map, membership_in_Uz, min_shrink, openness_margin, segment_witness,
                              shrunk_corners, staircase, t4_for_center, t4_margin)

A0 = state(0.0, (0.0, 0.0), (0.3, -0.2))


def test_t4_reference_weights():
    cfg = t4_for_center(A0)
    np.testing.assert_allclose(cfg.weights, [0.0379, 0.462, 0.0379, 0.462], atol=5e-4)
    assert cfg.weights.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(cfg.weights @ cfg.corners, A0, atol=1e-14)
    assert np.abs(cone_residual(A0 - cfg.corners)).max() <= 1e-14
    assert (cfg.r_x, cfg.r_y) == (0.5, 0.5)


def test_t4_corners_on_K_exactly():
    cfg = t4_for_center(A0)
    c = cfg.corners
    assert np.array_equal(c[:, 3:5], c[:, :1] * c[:, 1:3])


def test_paper_radius_breaks_singularity():
    cfg = t4_for_center(A0, radius_mode="paper")
    assert np.abs(cone_residual(A0 - cfg.corners)).max() > 1e-3


def test_t4_rejects_axis_and_outside():
    with pytest.raises(CenterOnAxis):
        t4_for_center(state(0.0, (0.0, 0.0), (0.0, -0.5)))
    with pytest.raises(OutOfBall):
        t4_for_center(state(1.2, (0, 0), (0, 0)))
    spec = HullSpec((0.3, -0.2), 0.05)
    with pytest.raises(OutOfBall):
        t4_for_center(A0 + 0.1, spec)


def test_admissible_delta_reference_and_vectorized():
    assert admissible_delta((0.3, -0.2)) == pytest.approx(0.0758, abs=5e-4)
    assert admissible_delta((0.2, -0.35)) == 0.25
    many = admissible_delta_many([(0.3, -0.2), (0.2, -0.35), (0.0, 0.5)])
    assert many[0] == pytest.approx(admissible_delta((0.3, -0.2)))
    assert np.isnan(many[2])
    with pytest.raises(NoAdmissibleDelta):
        admissible_delta((0.0, 0.5))


def test_app_constants():
    c = app_constants(HullSpec.for_z((0.2, -0.35)))
    assert c["M"] == pytest.approx(3.306, abs=2e-3)
    assert c["c1"] == pytest.approx(0.02836, abs=2e-5)
    assert c["c0"] == 7 / 32


def test_margin_positive_in_ball():
    spec = HullSpec.for_z((0.2, -0.35))
    rng = np.random.default_rng(3)
    d = rng.normal(size=(500, 5))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = spec.center + 0.8 * spec.delta * d
    assert t4_margin(pts).min() > 0


def test_membership_of_ball_point_and_corner_segment():
    spec = HullSpec.for_z((0.2, -0.35))
    w = membership_in_Uz(spec.center, spec)
    np.testing.assert_allclose(w.state, spec.center, atol=1e-12)
    X = corner_map(spec.center, 2)[0]
    mid = 0.3 * spec.center + 0.7 * X
    w = membership_in_Uz(mid, spec)
    np.testing.assert_allclose(w.state, mid, atol=1e-8)
    assert openness_margin(w, spec) > 0
    far = state(0.0, (3.0, 3.0), (0.0, 0.0))
    with pytest.raises(NotMember):
        membership_in_Uz(far, spec)


def test_shrink_and_segment_witness():
    spec = HullSpec.for_z((0.2, -0.35))
    C = spec.center
    T = shrunk_corners(C, 0.97)
    full = t4_for_center(C).corners
    np.testing.assert_allclose(T, 0.03 * C + 0.97 * full)
    s0 = min_shrink(C, spec)
    assert 0 < s0 < 1
    lens = np.linalg.norm(full - C, axis=1)
    assert 2 * s0 * lens.min() == pytest.approx(dist_to_K(C))
    w = segment_witness(T[0], C, 1, spec)
    assert w is not None and w.mix == pytest.approx(0.03)


def test_staircase_top_split():
    spec = HullSpec.for_z((0.2, -0.35))
    C = spec.center
    lam = staircase(C, spec, 1 / 32, 0.97, 1)
    sp = lam.splits[0]
    np.testing.assert_allclose((1 - sp.kappa) * sp.low + sp.kappa * sp.high, C, atol=1e-14)
    assert abs(cone_residual(sp.direction)) <= 1e-12
    assert sp.corner == 4
    np.testing.assert_allclose(lam.C_nodes[-1], C)
    assert lambda_convex_f(np.array(lam.C_nodes + lam.T_nodes)).max() <= 1e-10


def test_staircase_errors():
    spec = HullSpec.for_z((0.2, -0.35))
    with pytest.raises(BadShrink):
        staircase(spec.center, spec, 0.1, 0.0, 1)
    with pytest.raises(BadShrink):
        staircase(spec.center, spec, 0.1, 1e-4, 1)
    with pytest.raises(CornerEscape):
        staircase(spec.center + 1.0, spec, 0.1, 0.97, 1)
    with pytest.raises(ValueError):
        staircase(spec.center, spec, 0.1, 0.97, 1, order=[1, 1, 2, 3])
