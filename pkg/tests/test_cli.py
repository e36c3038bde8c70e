import json
import math

import numpy as np
import pytest

from conifold_lab import cli
from conifold_lab import radial_profiles as rp
from conifold_lab.config import JOBS_ENV, ConfigError, RunConfig, default_jobs
from conifold_lab.errors import VerificationError
from conifold_lab.report import Check, Report, fmt, jsonable, merge_reports

SMALL_CURVATURE = {
    "t_list": [1.0],
    "ratio_max": 10.0,
    "per_decade": 4,
    "oracle_points": 1,
    "s3_t": [1.0],
}
SMALL_POSITIVITY = {"n_list": [100, 200], "density": 1, "oracle_points": 2, "random_scenarios": 1}


def run(tmp_path, *args, config=None, name="cfg.json"):
    argv = list(args)
    if config is not None:
        path = tmp_path / name
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv)


def load(path):
    return json.loads(path.read_text())


def checks(doc):
    return {c["check_id"]: c for c in doc["checks"]}


# --- config ---------------------------------------------------------------------


def test_default_config_round_trips():
    cfg = RunConfig()
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_custom_config_round_trips(tmp_path):
    data = {
        "schema_version": 1,
        "seed": 7,
        "tolerance_scale": 0.5,
        "positivity": {"scenario": {"a": [[0, 0, 0.1, 0.2]], "b": [], "q": [], "kappa_E": 2.0, "name": "x"}},
        "curvature": {"extra_r2": [[1.0, 1.0], [1.0, 3.0]]},
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    cfg = RunConfig.load(path)
    assert cfg.seed == 7 and cfg.curvature.extra_r2 == [[1.0, 1.0], [1.0, 3.0]]
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "bad",
    [
        {"schema_version": 2},
        {"unknown": 1},
        {"profile": {"nope": 1}},
        {"profile": {"t_min": 0.0}},
        {"profile": {"ode_tol": -1e-9}},
        {"cutoff": {"n_list": []}},
        {"cutoff": {"n_list": [3]}},
        {"curvature": {"t_list": []}},
        {"curvature": {"s3_eps": [1e-3]}},
        {"positivity": {"scenario": "weird"}},
        {"tolerance_scale": 0},
    ],
)
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_jobs_env(monkeypatch):
    monkeypatch.setenv(JOBS_ENV, "3")
    assert default_jobs() == 3
    monkeypatch.setenv(JOBS_ENV, "zero")
    with pytest.raises(ConfigError):
        default_jobs()


# --- exit codes -------------------------------------------------------------------


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["profile", "--jobs", "x"], ["cutoff", "--bogus"]])
def test_usage_errors_exit_1(argv, capsys):
    assert cli.main(argv) == 1


def test_missing_config_file_exit_1(tmp_path):
    assert cli.main(["cutoff", "--config", str(tmp_path / "absent.json")]) == 1


def test_bad_env_jobs_exit_1(tmp_path, monkeypatch):
    monkeypatch.setenv(JOBS_ENV, "-2")
    assert cli.main(["cutoff", "--out", str(tmp_path)]) == 1


def test_profile_t_zero_is_config_error(tmp_path):
    assert run(tmp_path, "profile", "--out", str(tmp_path), config={"profile": {"t_min": 0.0}}) == 1


def test_cutoff_n3_is_config_error(tmp_path):
    assert run(tmp_path, "cutoff", "--out", str(tmp_path), config={"cutoff": {"n_list": [3]}}) == 1


def test_verification_error_exit_2(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise VerificationError("injected")

    monkeypatch.setattr(rp, "derivatives", broken)
    assert cli.main(["profile", "--out", str(tmp_path)]) == 2


def test_failed_check_exit_2(tmp_path):
    # a tolerance scale of 1e-30 fails the residual checks without raising
    code = cli.main(["profile", "--out", str(tmp_path), "--tolerance-scale", "1e-30"])
    assert code == 2
    doc = load(tmp_path / "profile_report.json")
    assert doc["status"] == "fail"
    assert "ode_residual_fd" in doc["summary"]["failed"]
    assert "h_monotone" not in doc["summary"]["failed"]


# --- subcommands ----------------------------------------------------------------------


def test_profile_default_passes(tmp_path):
    assert cli.main(["profile", "--out", str(tmp_path)]) == 0
    doc = load(tmp_path / "profile_report.json")
    assert doc["status"] == "pass" and doc["schema_version"] == 1
    lines = (tmp_path / "profile.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(cli.PROFILE_COLUMNS)
    assert sum(1 for ln in lines if ln.startswith("deformed,")) == 200
    assert all(c["ref"] for c in doc["checks"])


def test_profile_tightened_tolerance_keeps_ode_checks(tmp_path):
    cli.main(["profile", "--out", str(tmp_path), "--tolerance-scale", "0.1"])
    c = checks(load(tmp_path / "profile_report.json"))
    assert c["ode_residual_analytic"]["passed"] and c["ode_residual_fd"]["passed"]
    assert c["ode_residual_analytic"]["tolerance"] == pytest.approx(1e-10)


def test_cutoff_single_n_reports_minima(tmp_path):
    assert run(tmp_path, "cutoff", "--out", str(tmp_path), config={"cutoff": {"n_list": [100]}}) == 0
    doc = load(tmp_path / "cutoff_report.json")
    minima = doc["extras"]["interval_minima"]["100"]
    assert set(minima) == {"chi1_on_c1_c3", "law_on_c1_c3", "psi_on_c3_c4", "law_on_c3_c4"}


def test_cutoff_default_reports_c1(tmp_path):
    assert cli.main(["cutoff", "--out", str(tmp_path)]) == 0
    c = checks(load(tmp_path / "cutoff_report.json"))
    assert 0 < c["item2_item3_bounds"]["measured"]["c1_hat"] < math.inf


def test_curvature_rejects_guard_points_and_continues(tmp_path):
    cfg = {"curvature": {**SMALL_CURVATURE, "extra_r2": [[1.0, 1.0], [1.0, 1.0005], [2.0, 5.0]]}}
    assert run(tmp_path, "curvature", "--out", str(tmp_path), config=cfg) == 0
    doc = load(tmp_path / "curvature_report.json")
    rejected = doc["extras"]["rejected_points"]
    assert [(p["t"], p["r2"]) for p in rejected] == [(1.0, 1.0), (1.0, 1.0005)]
    rows = (tmp_path / "curvature.csv").read_text().splitlines()
    assert rows[-1].startswith(fmt(2.0) + "," + fmt(5.0))
    c = checks(doc)
    assert c["s3_limit_t1"]["passed"]


def test_positivity_trivial(tmp_path):
    cfg = {"positivity": {**SMALL_POSITIVITY, "scenario": "trivial"}}
    assert run(tmp_path, "positivity", "--out", str(tmp_path), config=cfg) == 0
    front = load(tmp_path / "frontier.json")
    assert 0 <= front["c0_star"] < 1e-9
    assert [row["n"] for row in front["frontier"]] == [100, 200]


def test_positivity_search_error_exit_2(tmp_path):
    cfg = {"positivity": {**SMALL_POSITIVITY, "c0_max": 1.0}}
    assert run(tmp_path, "positivity", "--out", str(tmp_path), config=cfg) == 2


def test_positivity_custom_scenario_larger_c0(tmp_path):
    base = {"positivity": {**SMALL_POSITIVITY}}
    assert run(tmp_path, "positivity", "--out", str(tmp_path / "a"), config=base, name="a.json") == 0
    big = {"a": [[0, 0, 30.0, 0.0], [1, 0, 10.0, 0.0]], "b": [[0, 0, 0.2, 0.0]], "q": [[0, 0, 0.1, 0.0]],
           "kappa_E": 1.0, "name": "big"}
    cfg = {"positivity": {**SMALL_POSITIVITY, "scenario": big}}
    run(tmp_path, "positivity", "--out", str(tmp_path / "b"), config=cfg, name="b.json")
    a = load(tmp_path / "a" / "frontier.json")["c0_star"]
    b = load(tmp_path / "b" / "frontier.json")["c0_star"]
    assert b > a > 0


def test_positivity_typo_candidates_logged_not_failed(tmp_path):
    # with a match tolerance far below rounding every entry mismatches, but
    # all stay below the report-only threshold and are itemised
    cfg = {"positivity": {**SMALL_POSITIVITY, "match_rtol": 1e-300}}
    run(tmp_path, "positivity", "--out", str(tmp_path), config=cfg)
    doc = load(tmp_path / "positivity_report.json")
    c = checks(doc)["expansion_oracle"]
    assert c["passed"]
    items = doc["extras"]["typo_candidates"]
    assert len(items) == c["measured"]["mismatches"] > 0
    assert {"printed", "direct", "rel_error", "entry"} <= set(items[0])


# --- determinism ---------------------------------------------------------------------


def test_reports_bit_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["profile", "--out", str(tmp_path / d), "--seed", "3"]) == 0
    for f in ("profile_report.json", "profile.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_parallel_matches_serial(tmp_path):
    cfg = {"curvature": SMALL_CURVATURE}
    run(tmp_path, "curvature", "--out", str(tmp_path / "s"), "--jobs", "1", config=cfg)
    run(tmp_path, "curvature", "--out", str(tmp_path / "p"), "--jobs", "3", config=cfg)
    for f in ("curvature_report.json", "curvature.csv"):
        assert (tmp_path / "s" / f).read_bytes() == (tmp_path / "p" / f).read_bytes()


def test_seed_changes_samples_and_flag_overrides_file(tmp_path):
    run(tmp_path, "profile", "--out", str(tmp_path / "a"), "--seed", "5", config={"seed": 1})
    cli.main(["profile", "--out", str(tmp_path / "b"), "--seed", "6"])
    a, b = load(tmp_path / "a" / "profile_report.json"), load(tmp_path / "b" / "profile_report.json")
    assert a["config"]["seed"] == 5 and b["config"]["seed"] == 6
    assert (tmp_path / "a" / "profile.csv").read_text() != (tmp_path / "b" / "profile.csv").read_text()


# --- report merge -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cutoff_report(tmp_path_factory):
    d = tmp_path_factory.mktemp("cut")
    assert cli.main(["cutoff", "--out", str(d)]) == 0
    return d / "cutoff_report.json"


def test_merge_passing(tmp_path, cutoff_report):
    other = tmp_path / "again.json"
    other.write_text(cutoff_report.read_text())
    assert cli.main(["report", str(cutoff_report), str(other), "--out", str(tmp_path)]) == 0
    doc = load(tmp_path / "merged_report.json")
    assert doc["status"] == "pass"
    assert len({c["check_id"] for c in doc["checks"]}) == len(doc["checks"])


def test_merge_one_failing(tmp_path, cutoff_report):
    bad = load(cutoff_report)
    bad["checks"][0]["passed"] = False
    bad["status"] = "fail"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert cli.main(["report", str(cutoff_report), str(path), "--out", str(tmp_path)]) == 2
    assert load(tmp_path / "merged_report.json")["status"] == "fail"


def test_merge_inputs_from_config(tmp_path, cutoff_report):
    cfg = {"report": {"inputs": [str(cutoff_report)]}}
    assert run(tmp_path, "report", "--out", str(tmp_path), config=cfg) == 0


@pytest.mark.parametrize("inputs", [[], ["missing.json"]])
def test_merge_bad_inputs_exit_1(tmp_path, inputs):
    assert cli.main(["report", "--out", str(tmp_path), *[str(tmp_path / i) for i in inputs]]) == 1


def test_merge_non_report_exit_1(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    assert cli.main(["report", str(p), "--out", str(tmp_path)]) == 1


# --- report primitives --------------------------------------------------------------------


def test_report_rejects_duplicate_ids_and_empty_refs():
    rep = Report("x", {})
    rep.add(Check("a", "claim", True, {}))
    with pytest.raises(ValueError):
        rep.add(Check("a", "claim", True, {}))
    with pytest.raises(ValueError):
        rep.add(Check("b", "", True, {}))


def test_status_is_conjunction():
    rep = Report("x", {})
    rep.add(Check("a", "claim", True, {}))
    assert rep.to_dict()["status"] == "pass"
    rep.add(Check("b", "claim", False, {}))
    doc = rep.to_dict()
    assert doc["status"] == "fail" and doc["summary"]["failed"] == ["b"]
    assert merge_reports([("r", doc)])["status"] == "fail"


def test_csv_format_round_trips_doubles():
    for x in (1 / 3, 2.0 ** -1074, 1e308, -np.pi):
        s = fmt(x)
        assert float(s) == x and len(s.split("e")[0].replace("-", "").replace(".", "")) == 17


def test_jsonable():
    assert jsonable({"z": 1 + 2j, "n": np.float64(np.nan), "a": np.arange(2)}) == {
        "z": [1.0, 2.0], "n": "nan", "a": [0, 1]}
