import json
import math
from pathlib import Path

import numpy as np
import pytest

from visc_nonlocal import cli, experiments as E, reports as R, scenario as S
from visc_nonlocal.errors import ScenarioInvalid

SCEN = Path(S.__file__).parent / "scenarios"
STUDIES = SCEN / "studies"


def doc(**over):
    base = {"name": "t", "kernel": {"family": "box", "cutoff": 1.0},
            "u": {"family": "polynomial_1d", "coeffs": [0.0, 0.0, 1.0]}}
    base.update(over)
    return base


# scenarios -------------------------------------------------------------------------

def test_scenario_defaults_and_grid():
    sc = S.build_scenario(doc(points={"lo": [-0.5], "hi": [0.5], "spacing": [0.25]}))
    assert sc.points[:, 0].tolist() == [-0.5, -0.25, 0.0, 0.25, 0.5]
    assert sc.epsilon_schedule == S.DEFAULT_EPSILON and sc.mode == "sub"
    assert sc.phi is sc.u and sc.operator.family == "zero"
    sc2 = S.build_scenario(doc(dimension=2, kernel={"family": "gaussian", "sigma": 0.5},
                               u={"family": "zero"},
                               points={"lo": [0, 0], "hi": [1, 1], "spacing": [0.5, 1.0]}))
    assert sc2.points.shape == (6, 2)


@pytest.mark.parametrize("bad", [
    {"name": None},
    {"mode": "both"},
    {"unknown": 1},
    {"schedules": {"epsilon": [0.25, 0.5]}},
    {"schedules": {"delta": [0.1, -0.1]}},
    {"schedules": {"n": [3, 2]}},
    {"schedules": {"gamma": [1.0]}},
    {"points": {"lo": [0.0], "hi": [1.0], "spacing": [0.0]}},
    {"points": {"list": [[0.0]]}, "dimension": 2},
    {"points": {}},
    {"kernel": {"family": "nonsense"}},
    {"kernel": {"family": "box", "dim": 2}},
    {"u": {"family": "polynomial_1d", "coeffs": [0, 1], "extra": 2}},
    {"checks": {"tolerance": 1}},
    {"forge": {"radius": 1}},
])
def test_invalid_scenarios(bad):
    d = doc(**bad)
    if d.get("name") is None:
        d.pop("name")
    with pytest.raises(ScenarioInvalid):
        S.build_scenario(d)


def test_invalid_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "x"\n[kernel]\nfamily = "box"\n')
    assert cli.main(["suite", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 3
    broken = tmp_path / "broken.toml"
    broken.write_text("name = [\n")
    assert cli.main(["check", "--scenario", str(broken), "--definition", "B"]) == 3
    assert cli.main(["check", "--scenario", str(tmp_path / "missing.toml"), "--definition", "B"]) == 3
    with pytest.raises(SystemExit) as exc:
        cli.main(["check", "--definition", "Z", "--scenario", str(bad)])
    assert exc.value.code == 3


def test_seed_override():
    sc = S.load_scenario(SCEN / "quadratic_box.toml", seed_override=7)
    assert sc.seed == 7 and sc.check.seed == 7
    assert sc.with_seed(3).seed == 3


# tables and report files ----------------------------------------------------------------

def test_table_csv_roundtrip(tmp_path):
    t = E.StudyTable(["n", "value", "flag", "label", "missing"])
    t.add(n=1, value=0.1, flag=True, label="[0.5]", missing=math.nan)
    t.add(n=2, value=-1e-300, flag=False, label="x y", missing=2.5)
    R.write_table(tmp_path / "t.csv", t)
    back = R.read_table(tmp_path / "t.csv")
    assert t.same_rows(back)
    with pytest.raises(KeyError):
        t.add(n=3)


def test_json_emitter():
    text = R.dumps({"a": [1, 2.5, float("nan")], "b": {"c": True, "d": None}, "e": []})
    assert json.loads(text) == {"a": [1, 2.5, None], "b": {"c": True, "d": None}, "e": []}
    assert R.dumps(0.1).strip() == "0.10000000000000001"


def test_emit_empty_results(tmp_path):
    paths = R.emit_reports(tmp_path, [], None, 2)
    assert json.loads(paths["report"].read_text()) == []
    assert paths["study"].read_text() == "\n"
    assert paths["plotdata"].read_text().splitlines() == [
        "x1,x2,residual_A,residual_Aprime,residual_B,residual_Bprime,residual_C"]


def test_three_point_suite_gives_fifteen_records(tmp_path):
    sc = S.load_scenario(SCEN / "quadratic_box.toml")
    assert sc.points.shape[0] == 3
    res = E.run_equivalence_suite(sc)
    paths = R.emit_reports(tmp_path, res.reports, res.table, sc.dimension)
    records = json.loads(paths["report"].read_text())
    assert len(records) == 15
    assert {r["definition"] for r in records} == set(("A", "Aprime", "B", "Bprime", "C"))
    assert len(R.read_table(paths["plotdata"]).rows) == 3
    assert R.read_table(paths["study"]).same_rows(res.table)


# experiments ---------------------------------------------------------------------------

def test_suite_examples():
    bump = E.run_equivalence_suite(S.load_scenario(SCEN / "smooth_bump_box.toml"))
    assert bump.status == 0
    # at the maximum the jump integral is negative, so F = 0 leaves a positive residual
    at_max = [r for r in bump.reports if r.point == [0.0]]
    assert len(at_max) == 5 and all(r.verdict == "fail" and r.residual > 0 for r in at_max)
    far = [r for r in bump.reports if abs(r.point[0]) == 2.0]
    assert far and all(r.verdict == "pass" for r in far)
    zero = E.run_equivalence_suite(S.load_scenario(SCEN / "zero_case.toml"))
    assert zero.status == 0
    for r in zero.reports:
        assert r.verdict == "pass"
        if r.definition not in ("A", "Aprime"):
            assert r.residual == 0.0
    kinked = E.run_equivalence_suite(S.load_scenario(SCEN / "kinked_1d.toml"))
    assert kinked.status == 0
    assert all(r.verdict == "fail" and r.residual > 0 for r in kinked.reports
               if r.definition in ("A", "B", "C"))


def test_suite_reports_incoherence():
    # a jet that passes A while the test function fails B: the suite must flag it
    sc = S.build_scenario(doc(name="mixed", operator={"family": "zeroth", "c": 1.0},
                              u={"family": "constant", "value": 0.0},
                              checks={"slack_rel": 0.0}))
    res = E.run_equivalence_suite(sc)
    assert res.status == 0
    sc = S.build_scenario(doc(name="shifted", operator={"family": "custom_affine", "const": 0.5},
                              checks={"slack_rel": 0.0}))
    res = E.run_equivalence_suite(sc)
    verdicts = {r.definition: r.verdict for r in res.reports}
    residuals = {r.definition: r.residual for r in res.reports}
    # 0.5 - 2/3 < 0 for B; A' sees the small-ball bound inflated by delta
    assert verdicts["B"] == "pass" and residuals["B"] == pytest.approx(0.5 - 2 / 3)


def test_epsilon_study_quadratic():
    sc = S.load_scenario(STUDIES / "quadratic_epsilon.toml")
    table, reports = E.epsilon_refinement_study(sc)
    eps_rows = [r for r in table.rows if r["stage"] == "epsilon"]
    for row in eps_rows:
        assert abs(row["gap"] - row["delta"] * 2 * row["epsilon"]**3 / 3) <= 1e-10
        assert row["gap"] == pytest.approx(row["bound"], rel=1e-12)
    assert all(table.monotone_flags.values())
    # gap is linear in delta, so it vanishes with delta
    delta_rows = [r for r in table.rows if r["stage"] == "delta"]
    ratios = [r["gap"] / r["delta"] for r in delta_rows]
    assert np.allclose(ratios, ratios[0], rtol=1e-9)


def test_monotone_zero_kernel():
    sc = S.build_scenario(doc(kernel={"family": "zero"},
                              u={"family": "gaussian_bump"}, schedules={"n": [1, 2, 3]}))
    table = E.monotone_convergence_experiment(sc)
    assert table.column("exterior_integral") == [0.0, 0.0, 0.0]
    assert all(table.monotone_flags.values())


# command line -------------------------------------------------------------------------

def test_cli_check(tmp_path, capsys):
    out = tmp_path / "c"
    code = cli.main(["check", "--scenario", str(SCEN / "quadratic_box.toml"), "--definition", "B",
                     "--out", str(out)])
    assert code == 0
    recs = json.loads((out / "report.json").read_text())
    assert [r["definition"] for r in recs] == ["B"] * 3
    assert recs[1]["residual"] == pytest.approx(-2 - 2 / 3)
    assert "residual" in capsys.readouterr().out
    code = cli.main(["check", "--scenario", str(SCEN / "quadratic_box.toml"), "--definition", "A",
                     "--mode", "super", "--out", str(out)])
    assert code == 0


def test_cli_check_not_integrable(tmp_path):
    sc = tmp_path / "k.toml"
    sc.write_text('name = "k"\n[kernel]\nfamily = "stable"\nalpha = 1.5\n'
                  '[u]\nfamily = "cone"\nsign = -1.0\n[phi]\nfamily = "polynomial_1d"\n'
                  'coeffs = [0.0, 0.0, 1.0]\n')
    assert cli.main(["check", "--scenario", str(sc), "--definition", "C", "--out",
                     str(tmp_path / "o")]) == 4
    rec = json.loads((tmp_path / "o" / "report.json").read_text())[0]
    assert rec["verdict"] == "not_integrable" and rec["residual"] is None


def test_cli_studies(tmp_path):
    out = tmp_path / "eps"
    assert cli.main(["study-epsilon", "--scenario", str(STUDIES / "quadratic_epsilon.toml"),
                     "--out", str(out)]) == 0
    t = R.read_table(out / "study.csv")
    assert t.columns == E.EPSILON_COLUMNS and len(t.rows) == 12
    out = tmp_path / "mono"
    assert cli.main(["study-monotone", "--scenario", str(STUDIES / "bump_monotone.toml"),
                     "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["flags"] == {"nonincreasing": True, "limit_within_1e-3": True}
    assert len(R.read_table(out / "study.csv").rows) == 20


def test_cli_forge_and_kernel(tmp_path):
    out = tmp_path / "f"
    assert cli.main(["forge-test-function", "--scenario", str(STUDIES / "forge_saddle_2d.toml"),
                     "--out", str(out)]) == 0
    info = json.loads((out / "forge.json").read_text())
    assert info["glue_coordinates"] and len(info["eigenvalues"]) == 2
    samples = R.read_table(out / "forge_samples.csv")
    assert len(samples.rows) == 512
    corner = [r for r in samples.rows if r["region"] == "corner"]
    assert corner and min(r["hessian_min_eig"] for r in corner) >= -1e-10
    junc = R.read_table(out / "junctions.csv")
    coarse = [r["worst_vs_exact"] for r in junc.rows if r["h"] == 1e-3]
    fine = [r["worst_vs_exact"] for r in junc.rows if r["h"] == 1e-4]
    assert len(coarse) == len(fine) == 2
    assert all(f <= 0.02 * c + 1e-9 for c, f in zip(coarse, fine))
    assert cli.main(["verify-kernel", "--scenario", str(STUDIES / "stable_half.toml"),
                     "--out", str(tmp_path / "k")]) == 0
    k = json.loads((tmp_path / "k" / "kernel.json").read_text())
    assert k["near_second_moment"] == pytest.approx(4 / 3, abs=1e-8)
    assert cli.main(["verify-kernel", "--scenario", str(STUDIES / "divergent_power.toml"),
                     "--out", str(tmp_path / "d")]) == 4
    assert json.loads((tmp_path / "d" / "kernel.json").read_text())["admissible"] is False


def test_cli_rerun_is_byte_identical(tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["suite", "--scenario", str(SCEN / "bump_stable_2d.toml"),
                         "--out", str(out)]) == 0
        runs.append({p.name: p.read_bytes() for p in (out / "bump_stable_2d").iterdir()})
    assert runs[0] == runs[1]
    assert set(runs[0]) == {"report.json", "study.csv", "plotdata.csv", "summary.json"}


def test_cli_roundtrip_study_table(tmp_path):
    sc = S.load_scenario(SCEN / "kinked_2d.toml")
    res = E.run_equivalence_suite(sc)
    cli.main(["suite", "--scenario", str(SCEN / "kinked_2d.toml"), "--out", str(tmp_path)])
    assert R.read_table(tmp_path / "kinked_2d" / "study.csv").same_rows(res.table)
