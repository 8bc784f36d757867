import csv
import json
import math

import pytest
from hypothesis import given, strategies as st

from ineqlab import __version__
from ineqlab.cli import main
from ineqlab.config import Config, default_config_text, load_config, parse_config
from ineqlab.errors import ConfigParse, UnknownSuite
from ineqlab.report import DeficitReport, ReportWriter, inputs_digest
from ineqlab.suites import SUITES, checks_for, describe

# Reduced inputs: every check runs in a few seconds.
SMALL_CFG = """
N = 512
L = 40
bubbles = 3
sobolev_samples = 20
hls_samples = 20
transfer_samples = 10
local_samples = 2
riesz_samples = 2
lp_pairs = 50
gradcon_pairs = 20
young_samples = 50
deficit_samples = 20
flow_R = 20
flow_M = 256
flow_t_end = 0.5
flow_samples = 10
flow_cfl = 0.05
"""


def _write_cfg(path, extra=""):
    path.write_text(SMALL_CFG + extra)
    return str(path)


def _summary(out):
    with open(out / "summary.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_default_config_matches_dataclass_defaults():
    assert parse_config(default_config_text()) == Config()
    assert load_config(None) == Config()


def test_config_parse_values_and_comments():
    cfg = parse_config("alpha = 0.4  # comment\np_small = 1.5, 2\n\n# only a comment\n")
    assert cfg.alpha == 0.4 and cfg.p_small == (1.5, 2.0)
    assert cfg.N == Config().N


@pytest.mark.parametrize(
    "text",
    ["N 4096", "N = four", "nonsense = 1", "N = 1\nN = 2", "alphas = 0.2, x"],
)
def test_config_parse_errors(text):
    with pytest.raises(ConfigParse):
        parse_config(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigParse):
        load_config(tmp_path / "absent.cfg")


def test_config_digest_and_scaling():
    a, b = Config(), Config()
    assert a.digest() == b.digest()
    assert Config(alpha=0.2).digest() != a.digest()
    half = a.scaled(0.5)
    assert half.lp_pairs == a.lp_pairs // 2
    assert half.N == a.N
    assert a.scaled(0).bubbles == 0


@given(margin=st.floats(-10, 10), budget=st.floats(0, 5))
def test_report_pass_iff_margin_within_budget(margin, budget):
    rec = DeficitReport("s", "s.c", "h", "d", {}, 0.0, margin, budget)
    assert rec.passed == (margin >= -budget)
    assert rec.to_json()["pass"] == rec.passed
    assert rec.csv_row()[-1] == ("pass" if rec.passed else "FAIL")


def test_report_nan_margin_fails_and_serialises():
    rec = DeficitReport("s", "s.c", "h", "d", {"x": math.inf, "z": 1 + 2j}, math.nan,
                        math.nan, 0.0)
    assert not rec.passed
    js = json.loads(json.dumps(rec.to_json()))
    assert js["measured"] == {"x": "inf", "z": [1.0, 2.0]}


def test_report_writer_files(tmp_path):
    w = ReportWriter(tmp_path / "o")
    w.add(DeficitReport("s", "s.a", "h", "d", {}, 1.0, 0.5, 0.0, wall_time=3.0))
    w.add(DeficitReport("s", "s.b", "h", "d", {}, 1.0, -1.0, 0.5))
    assert not w.all_passed
    rows = _summary(tmp_path / "o")
    assert [r["pass"] for r in rows] == ["pass", "FAIL"]
    assert "3.0" not in (tmp_path / "o" / "summary.csv").read_text()
    assert len(json.loads(w.json_path.read_text())) == 2


def test_inputs_digest_is_stable():
    assert inputs_digest(a=1, b=(1.0, 2.0)) == inputs_digest(b=[1.0, 2.0], a=1)
    assert inputs_digest(a=1) != inputs_digest(a=2)


def test_suites_and_describe():
    assert set(SUITES) == {"duality", "lp", "sobolev", "hls", "transfer", "local", "flow", "all"}
    ids = [c.id for c in checks_for("all")]
    assert len(ids) == len(set(ids))
    assert sum(len(checks_for(s)) for s in SUITES if s != "all") == len(ids)
    for suite in ("flow", "transfer"):
        text = describe(suite)
        for c in checks_for(suite):
            assert c.id in text
        assert "tolerance:" in text and "inputs:" in text
    with pytest.raises(UnknownSuite):
        checks_for("nope")


def test_cli_describe(capsys):
    assert main(["describe", "--suite", "flow"]) == 0
    assert "flow.monotonicity" in capsys.readouterr().out


def test_cli_unknown_suite_exit_2(tmp_path, capsys):
    assert main(["describe", "--suite", "nope"]) == 2
    assert main(["run", "--suite", "nope", "--out", str(tmp_path)]) == 2
    assert "unknown suite" in capsys.readouterr().err


def test_cli_bad_config_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("N = ???\n")
    assert main(["run", "--suite", "lp", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_cli_argument_errors(tmp_path):
    for argv in (["run", "--suite", "lp", "--out", str(tmp_path), "--seed", "-1"],
                 ["run", "--suite", "lp", "--out", str(tmp_path), "--samples", "-2"],
                 ["run", "--suite", "lp"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_cli_zero_samples_warns_and_passes(tmp_path):
    out = tmp_path / "o"
    cfg = _write_cfg(tmp_path / "c.cfg")
    assert main(["run", "--suite", "lp", "--config", cfg, "--out", str(out),
                 "--samples", "0"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert any("warning" in r["measured"] for r in report)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["sample_multiplier"] == 0.0 and meta["version"] == __version__


def test_cli_small_config_passes_every_suite(tmp_path):
    cfg = _write_cfg(tmp_path / "c.cfg")
    assert main(["run", "--suite", "all", "--config", cfg, "--out", str(tmp_path / "o"),
                 "--seed", "1"]) == 0
    rows = _summary(tmp_path / "o")
    assert {r["suite"] for r in rows} == set(SUITES) - {"all"}
    assert all(r["pass"] == "pass" for r in rows)


def test_cli_is_deterministic(tmp_path):
    cfg = _write_cfg(tmp_path / "c.cfg")
    bodies = []
    for name in ("a", "b"):
        assert main(["run", "--suite", "duality", "--config", cfg, "--out",
                     str(tmp_path / name), "--seed", "99"]) == 0
        bodies.append((tmp_path / name / "summary.csv").read_bytes())
    assert bodies[0] == bodies[1]
    main(["run", "--suite", "duality", "--config", cfg, "--out", str(tmp_path / "c"),
          "--seed", "100"])
    digests = lambda d: [r["inputs_digest"] for r in json.loads((d / "report.json").read_text())]
    assert digests(tmp_path / "a") != digests(tmp_path / "c")


def test_fault_injection_is_detected_and_localised(tmp_path):
    cfg = _write_cfg(tmp_path / "fault.cfg", "S_override = 0.5\n")
    code = main(["run", "--suite", "all", "--config", cfg, "--out", str(tmp_path / "o"),
                 "--seed", "1"])
    rows = _summary(tmp_path / "o")
    assert code == 1
    failed = {r["check"].split("[")[0] for r in rows if r["pass"] == "FAIL"}
    assert "sobolev.bubbles" in failed and "hls.dual_bubbles" in failed
    assert all(c.split(".")[0] in {"sobolev", "hls", "local"} for c in failed)
