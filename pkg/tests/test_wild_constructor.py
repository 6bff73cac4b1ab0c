import json

import numpy as np
import pytest

from wildflow import wild_constructor as wc
from wildflow.errors import FormatError, InvalidConfig, ToleranceUnreachable
from wildflow.lambda_geometry import dist_to_K
from wildflow.wild_constructor import ConstructionConfig, Subsolution, direct_construction, initialize

SMALL = dict(rounds=2, patch_budget=25)


@pytest.fixture(scope="module")
def small_run():
    return direct_construction(ConstructionConfig(**SMALL))


def test_config_roundtrip_and_errors():
    cfg = ConstructionConfig(seed=4, z=(0.1, -0.4))
    back = ConstructionConfig.from_dict(json.loads(json.dumps(cfg.as_dict())))
    assert back == cfg
    with pytest.raises(InvalidConfig):
        ConstructionConfig.from_dict({"bogus": 1})
    with pytest.raises(InvalidConfig):
        ConstructionConfig(shrink=1.5).validate()
    with pytest.raises(InvalidConfig):
        ConstructionConfig(eta=(0.9, 0.9)).validate()
    with pytest.raises(InvalidConfig):
        initialize(ConstructionConfig(z=(0.0, 0.6)))  # no admissible radius
    assert [ConstructionConfig().frequency(k) for k in (1, 2, 3)] == [8, 16, 32]


def test_initial_subsolution():
    sub = initialize(ConstructionConfig())
    st = sub.stats()
    assert st["measure"] == pytest.approx(1.0)
    assert st["dist_integral"] == pytest.approx(float(dist_to_K(sub.base)))
    assert st["n_patches"] == 0 and st["band_fraction"] == 0.0
    pts = np.random.default_rng(0).uniform(size=(10, 3))
    np.testing.assert_array_equal(sub.evaluate(pts), np.broadcast_to(sub.base, (10, 5)))


def test_rounds_decrease_dist_and_conserve_measure(small_run):
    subs, log = small_run
    d = [s.stats()["dist_integral"] for s in subs]
    assert all(b < a for a, b in zip(d, d[1:]))
    for s in subs:
        assert s.stats()["measure"] == pytest.approx(1.0, rel=1e-9)
    assert log.column("dist_integral") == pytest.approx(d)
    assert all(e["fwc_bound"] <= e["fwc_tolerance"] for e in log.entries[1:])


def test_patches_disjoint_within_parent(small_run):
    sub = small_run[0][-1]
    for reg in sub.regions:
        kids = [sub.patches[c].wave for c in reg.children]
        for i, a in enumerate(kids):
            for b in kids[i + 1:]:
                assert np.linalg.norm(a.center - b.center) >= a.radius + b.radius - 1e-12


def test_evaluate_matches_region_state(small_run):
    sub = small_run[0][-1]
    checked = 0
    for reg in sub.regions:
        if reg.owner is None or reg.children:
            continue
        w = sub.patches[reg.owner].wave
        um = 0.5 * (reg.u_lo + reg.u_hi)
        y = w.center + w.radius * um * w.k
        np.testing.assert_allclose(sub.evaluate(y[None])[0], reg.state, atol=1e-12)
        checked += 1
        if checked >= 25:
            break
    assert checked > 0


def test_serialization_roundtrip(small_run):
    sub = small_run[0][-1]
    text = sub.dumps()
    back = Subsolution.loads(text)
    assert back.dumps() == text
    assert back.stats() == sub.stats()
    with pytest.raises(FormatError):
        Subsolution.from_dict({"format": "other"})
    assert "NaN" not in text


def test_truncation_matches_history(small_run):
    subs, _ = small_run
    full = subs[-1]
    assert full.truncated(1).dumps() == subs[1].dumps()
    assert full.truncated(0).stats() == subs[0].stats()


def test_determinism_and_seed_dependence():
    a = direct_construction(ConstructionConfig(rounds=1, patch_budget=10, seed=1))[0][-1].dumps()
    b = direct_construction(ConstructionConfig(rounds=1, patch_budget=10, seed=1))[0][-1].dumps()
    c = direct_construction(ConstructionConfig(rounds=1, patch_budget=10, seed=2))[0][-1].dumps()
    assert a == b
    assert a != c


def test_tolerance_unreachable(monkeypatch):
    monkeypatch.setattr(wc, "_fwc_bound", lambda records, tests: 1.0)
    with pytest.raises(ToleranceUnreachable):
        direct_construction(ConstructionConfig(rounds=1, patch_budget=5, N_cap=16))
