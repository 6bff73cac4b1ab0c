import numpy as np
import pytest

from wildflow.errors import FormatError, GridTooCoarse, NotIrrotational
from wildflow.lambda_geometry import dist_to_K
from wildflow.quadrature import ball_rule
from wildflow.testfns import TestFunction, default_family
from wildflow.weak_verifier import (FieldGrid, VerificationReport, constraint_stats, convergence_orders,
                                    corrupt_flux, pressure_reconstruct, render_grid, residual_summary,
                                    smooth_fixture, sobolev_diagnostic, weak_residuals, weak_trace)
from wildflow.wild_constructor import ConstructionConfig, direct_construction, initialize


@pytest.fixture(scope="module")
def one_round():
    return direct_construction(ConstructionConfig(rounds=1, patch_budget=12))[0][-1]


def test_fieldgrid_roundtrip(tmp_path):
    fg = smooth_fixture(8, 8)
    fg.save(tmp_path / "f.npz")
    back = FieldGrid.load(tmp_path / "f.npz")
    np.testing.assert_array_equal(back.data, fg.data)
    assert back.header() == fg.header()
    (tmp_path / "bad.npz").write_bytes(b"junk")
    with pytest.raises(FormatError):
        FieldGrid.load(tmp_path / "bad.npz")
    with pytest.raises(FormatError):
        FieldGrid(np.zeros((4, 4, 5, 5)), 4, 3, 1.0, 1)


def test_time_nodes_hit_endpoints():
    fg = smooth_fixture(4, 8, pad=2)
    t = fg.t[fg.interior()]
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.0)
    assert fg.weights().sum() * fg.n**2 == pytest.approx(1.0)


def test_smooth_fixture_passes_and_corruption_hits_identity1_only():
    fg = smooth_fixture(32, 32)
    good = residual_summary(weak_residuals(fg, tolerance=1e-6))
    assert max(good[k] for k in ("identity1_q", "identity2", "curl")) <= 1e-12
    bad = residual_summary(weak_residuals(corrupt_flux(fg)))
    assert bad["identity1_q"] > 1e-4
    assert bad["identity2"] <= 1e-12 and bad["curl"] <= 1e-12


def test_grid_too_coarse_for_discontinuous_field(one_round):
    fg = render_grid(one_round, 16, 8)
    with pytest.raises(GridTooCoarse) as info:
        weak_residuals(fg, tolerance=1e-8)
    assert info.value.estimate > 1e-8


def test_constant_subsolution_exact():
    sub = initialize(ConstructionConfig())
    res = weak_residuals(sub, n=32)
    assert all(v == 0.0 for vals in res.values() for v in vals)
    fg = render_grid(sub, 8, 8)
    cs = constraint_stats(fg)
    assert cs["dist_L1"] == pytest.approx(float(dist_to_K(sub.base)), rel=1e-12)


def test_forest_residuals_converge(one_round):
    r64 = weak_residuals(one_round, n=64)
    r128 = weak_residuals(one_round, n=128)
    s = residual_summary(r128)
    assert max(s[k] for k in ("identity1_q", "identity2", "curl")) <= 1e-6
    orders = convergence_orders(r64, r128)
    assert min(orders.values()) >= 1.8


def test_rhov_form_against_direct_quadrature():
    sub = direct_construction(ConstructionConfig(rounds=1, patch_budget=1))[0][-1]
    assert len(sub.patches) == 1
    tests = default_family(1.0, "interior", 3)
    res = weak_residuals(sub, tests, n=128)
    rec = sub.patches[0]
    rule = ball_rule(rec.wave, 8, 8, 32, u_rule="gauss")
    U = sub.evaluate(rule.points)
    for j, g in enumerate(tests):
        gi = TestFunction(g.kappa, g.kind, "initial", g.T).grad(rule.points)
        direct = float((U[:, 0] * (gi[:, 2] + U[:, 1] * gi[:, 0] + U[:, 2] * gi[:, 1])) @ rule.weights)
        assert res["identity1_rhov"][j] == pytest.approx(direct, abs=1e-9)


def test_pressure_and_irrotational():
    fg = smooth_fixture(16, 8)
    p, res = pressure_reconstruct(fg, fg.pad + 3)
    assert res <= 1e-12 and abs(p.mean()) <= 1e-14
    x = fg.x
    data = np.zeros_like(fg.data)
    data[..., 1] = np.sin(2 * np.pi * x)[None, :, None]  # v1 depends on x2: curl != 0
    swirl = FieldGrid(data, fg.n, fg.m, fg.T, fg.pad)
    with pytest.raises(NotIrrotational):
        pressure_reconstruct(swirl, 0)


def test_sobolev_convention():
    fg = smooth_fixture(16, 4)
    zero = sobolev_diagnostic(fg, 1.0, [0.0])
    assert zero["norm"] == [0.0]
    data = np.zeros_like(fg.data)
    X1, X2 = np.meshgrid(fg.x, fg.x, indexing="ij")
    data[..., 0] = np.cos(2 * np.pi * (2 * X1 + X2))[..., None]
    fr = FieldGrid(data, fg.n, fg.m, fg.T, fg.pad)
    s = 0.5
    # cos = two unit exponentials of amplitude 1/2
    assert sobolev_diagnostic(fr, s, [0.5])["norm"][0] == pytest.approx((1 + 5) ** (s / 2) / np.sqrt(2))


def test_weak_trace_zero_before_start(one_round):
    fg = render_grid(one_round, 16, 16)
    tr = weak_trace(fg)
    assert tr["max_abs_pre_initial"] == 0.0
    assert tr["sup_slice_rho_Linf"] > 0.5


def test_report_json_stable():
    rep = VerificationReport()
    rep.add("a", 1e-8, 1e-6)
    rep.add("b", 2.0, 1.8, relation=">=")
    assert rep.passed
    assert rep.dumps() == VerificationReport(list(rep.checks), {}).dumps()
    rep.add("c", 1.0, 0.5)
    assert not rep.passed
