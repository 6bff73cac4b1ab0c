import json

import pytest

from wildflow.cli import RunConfig, build_run_config, main, make_parser
from wildflow.errors import InvalidConfig
from wildflow.weak_verifier import corrupt_flux, smooth_fixture


def test_geometry_reduced_and_injected_bug(capsys):
    assert main(["geometry", "--samples", "10"]) == 0
    first = capsys.readouterr().out
    assert main(["geometry", "--samples", "10"]) == 0
    # timings differ; the check values do not
    strip = lambda text: [ln.split("(")[0] for ln in text.splitlines()]  # noqa: E731
    assert strip(capsys.readouterr().out) == strip(first)
    assert main(["geometry", "--samples", "10", "--inject-radius-bug"]) != 0
    assert "FAIL  [paper] singularity_oracle" in capsys.readouterr().out


def test_t4_writes_json(tmp_path):
    assert main(["t4", "--samples", "20", "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "t4.json").read_text())
    assert len(rec["corners"]) == 4 and rec["delta"] == 0.25
    assert (tmp_path / "t4_checks.csv").exists()


def test_run_config_roundtrip_and_overrides(tmp_path):
    args = make_parser().parse_args(["construct", "--seed", "3", "--z", "0.1,-0.4", "--grid", "32,16",
                                     "--tolerance", "weak_residual=1e-5", "--rounds", "1"])
    rc = build_run_config(args)
    assert rc.construction.seed == 3 and rc.construction.z == (0.1, -0.4)
    assert rc.grid == (32, 16) and rc.tolerances == {"weak_residual": 1e-5}
    back = RunConfig.from_dict(json.loads(rc.dumps()))
    assert back.dumps() == rc.dumps()
    path = tmp_path / "cfg.json"
    path.write_text(rc.dumps())
    rc2 = build_run_config(make_parser().parse_args(["construct", "--config", str(path)]))
    assert rc2.dumps() == rc.dumps()
    with pytest.raises(InvalidConfig):
        build_run_config(make_parser().parse_args(["construct", "--tolerance", "nope=1"]))


def test_construct_rounds_zero_and_bad_config(tmp_path, capsys):
    assert main(["construct", "--rounds", "0", "--out", str(tmp_path / "c")]) == 0
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == [
        "config.json", "log.csv", "log.json", "round_0.json"]
    assert main(["construct", "--z", "0.0,0.6", "--out", str(tmp_path / "d")]) == 2
    assert "InvalidConfig" in capsys.readouterr().err


def test_construct_verify_report_pipeline(tmp_path):
    out = tmp_path / "run"
    assert main(["construct", "--rounds", "1", "--out", str(out)]) == 0
    assert main(["verify", str(out / "round_1.json"), "--grid", "128,16", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["format"] == "wildflow-report"
    assert main(["report", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["dist_strictly_decreasing"] and summary["verification_passed"]


def test_verify_field_fixtures(tmp_path):
    fg = smooth_fixture(32, 32)
    fg.save(tmp_path / "good.npz")
    corrupt_flux(fg).save(tmp_path / "bad.npz")
    assert main(["verify", str(tmp_path / "good.npz"), "--out", str(tmp_path / "g")]) == 0
    assert main(["verify", str(tmp_path / "bad.npz"), "--out", str(tmp_path / "b")]) == 1
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    failed = [c["name"] for c in rep["checks"] if not c["pass"]]
    assert failed == ["identity1_q_max_abs"]
