import csv
import io
import json
import math

import pytest
from hypothesis import given, strategies as st

from ssrlab.cli import RESULT_COLUMNS, main
from ssrlab.config import emit_config, parse_config, parse_config_text
from ssrlab.errors import ConfigError
from ssrlab.finaltests import Sidedness, TestKind
from ssrlab.mc import ScenarioConfig
from ssrlab.presets import PRESETS, get_preset
from ssrlab.ssr import KieserFriedeRule, NonInferiorityRule, ThresholdRule
from ssrlab.trial import DesignKind

HEADER = (
    "scenario_id,design,n1,rule,final_test,alpha,side,mu_true,reps,seed,reject_rate,se,p_stage2,"
    "reject_given_stage2,reject_given_stage1_only,mean_n2,degenerate_count"
)


def test_minimal_config_defaults():
    cfg = parse_config_text('design = "one_sample"\nn1 = 2\nrule = "threshold"\nr_squared = 0.5\nn2_add = 2\n')
    assert cfg.reps == 1_000_000 and cfg.alpha == 0.05 and cfg.sigma == 1.0
    assert cfg.rule == ThresholdRule(0.5, 2)


def test_unknown_key_named_with_line():
    with pytest.raises(ConfigError) as e:
        parse_config_text('design = "one_sample"\nn1 = 2\nrule = "fixed"\nn2 = 1\nbogus_key = 3\n')
    assert "bogus_key" in str(e.value) and e.value.line == 5


def test_rule_key_for_wrong_rule():
    with pytest.raises(ConfigError) as e:
        parse_config_text('design = "one_sample"\nn1 = 2\nrule = "threshold"\nr_squared = 0.5\nn2_add = 2\ntheta = 1.0\n')
    assert e.value.field == "theta"


def test_parse_error_line():
    with pytest.raises(ConfigError) as e:
        parse_config_text('design = "one_sample"\nn1 = = 2\n')
    assert e.value.line == 2


def test_cross_field_validation():
    text = 'design = "one_sample"\nn1 = 4\nrule = "noninferiority"\ntheta = 1.0\nmargin = 0.0\n'
    with pytest.raises(ConfigError) as e:
        parse_config_text(text)
    assert e.value.field == "rule" and e.value.line == 3


def test_bad_enum_and_types():
    with pytest.raises(ConfigError):
        parse_config_text('design = "three_sample"\nn1 = 4\nrule = "fixed"\nn2 = 1\n')
    with pytest.raises(ConfigError):
        parse_config_text('design = "one_sample"\nn1 = 4.5\nrule = "fixed"\nn2 = 1\n')
    with pytest.raises(ConfigError):
        parse_config_text('design = "one_sample"\nn1 = 4\n')
    with pytest.raises(ConfigError):
        parse_config_text('design = "one_sample"\nn1 = 4\nrule = "fixed"\nn2 = 1\n[table]\nx = 1\n')


@pytest.mark.parametrize("pid", sorted(PRESETS))
def test_preset_round_trip(pid):
    cfg = get_preset(pid).config
    assert parse_config_text(emit_config(cfg)) == cfg


@given(
    st.sampled_from([DesignKind.ONE_SAMPLE, DesignKind.TWO_SAMPLE_BALANCED]),
    st.integers(2, 50),
    st.floats(0.01, 10),
    st.floats(-3, 3),
    st.floats(0.001, 0.5),
    st.integers(0, 2**63),
    st.one_of(st.none(), st.integers(0, 1000)),
)
def test_round_trip_property(design, n1, delta, mu, alpha, seed, cap):
    cfg = ScenarioConfig(design, n1, KieserFriedeRule(delta, n2_cap=cap), mu_true=mu, alpha=alpha, seed=seed,
                         side=Sidedness.ONE_SIDED_UPPER, final_test=TestKind.FISHER)
    assert parse_config_text(emit_config(cfg)) == cfg


def test_noninferiority_round_trip():
    cfg = ScenarioConfig(DesignKind.TWO_SAMPLE_BALANCED, 4, NonInferiorityRule(0.5, -0.5, convention="total_required"),
                         margin=-0.5, mu_true=-0.5)
    assert parse_config_text(emit_config(cfg)) == cfg


def _scenario(tmp_path, extra=""):
    p = tmp_path / "s.toml"
    p.write_text('scenario_id = "t"\ndesign = "one_sample"\nn1 = 2\nrule = "threshold"\nr_squared = 0.5\nn2_add = 2\n' + extra)
    return p


def test_run_csv_and_json_agree(tmp_path, capsys):
    path = _scenario(tmp_path)
    assert main(["run", str(path), "--reps", "20000", "--seed", "9"]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == HEADER and "\r" not in text
    row = next(csv.DictReader(io.StringIO(text)))
    assert main(["run", str(path), "--reps", "20000", "--seed", "9", "--format", "json"]) == 0
    js = json.loads(capsys.readouterr().out)[0]
    assert list(js) == list(RESULT_COLUMNS)
    for k in RESULT_COLUMNS:
        v = js[k]
        if isinstance(v, float):
            assert float(row[k]) == v
        else:
            assert row[k] == str(v)
    assert int(row["reps"]) == 20000 and row["seed"] == "9"


def test_seed_determines_bytes(tmp_path):
    path = _scenario(tmp_path)
    outs = []
    for i, seed in enumerate((5, 5, 6)):
        out = tmp_path / f"o{i}.csv"
        assert main(["run", str(path), "--reps", "5000", "--seed", str(seed), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] != outs[2]


def test_exit_codes(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    bad = _scenario(tmp_path, "wat = 1\n")
    assert main(["run", str(bad)]) == 2
    assert "wat" in capsys.readouterr().err
    assert main(["preset", "no-such-preset"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 2


def test_check_failure_exit(capsys):
    # 200 replicates cannot pin the published rate to +-0.001
    code = main(["preset", "glimm-s2-b", "--reps", "200", "--check"])
    assert code in (0, 3)
    err = capsys.readouterr().err
    assert ("FAIL" in err) == (code == 3)


def test_preset_list(capsys):
    assert main(["preset", "--list"]) == 0
    out = capsys.readouterr().out
    for pid in ("glimm-s2-a", "glimm-s2-b", "glimm-s2-kf", "glimm-s3-power", "glimm-s5-ni-neg", "glimm-s5-ni-pos"):
        assert pid in out


def test_critvals_single_row(capsys):
    assert main(["critvals", "--n1", "5", "--n2", "5", "--alpha", "0.025", "--method", "quadrature"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1
    n1, n2, alpha, side, prov, value = lines[0].split(",")
    assert (n1, n2, alpha, side) == ("5", "5", "0.025", "one_sided")
    assert prov.startswith("quadrature") and math.isclose(float(value), 2.78659, abs_tol=1e-4)


def test_critvals_cache_file(tmp_path, monkeypatch, capsys):
    import ssrlab.critvals as cv

    cache = tmp_path / "cache.txt"
    monkeypatch.setenv("SSRLAB_CRITVAL_CACHE", str(cache))
    monkeypatch.setattr(cv, "_default", None)
    assert main(["critvals", "--n1", "4", "--n2", "3-5", "--draws", "1000000"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3
    assert cache.read_text().startswith("# ssrlab-critvals v1\n")
    assert len(cache.read_text().splitlines()) == 4


def test_critvals_invalid(capsys):
    assert main(["critvals", "--n1", "1", "--n2", "5"]) == 2


def test_conddist_report(tmp_path):
    out = tmp_path / "cd.csv"
    assert main(["conddist", "--n1", "2", "--n2", "2", "--d1", "3", "--delta", "0", "--draws", "1000000", "--out", str(out)]) == 0
    row = next(csv.DictReader(io.StringIO(out.read_text())))
    assert float(row["ks_mixture_vs_oracle"]) < float(row["ks_bound_1pct"]) < float(row["ks_mixture_vs_chisq2n2"])


def test_power_subcommand(capsys):
    assert main(["power", "--n1", "5", "--grid", "0.3", "--reps", "5000"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["final_test"] for r in rows] == ["unmodified_t", "tcomb", "fisher"]
    assert all(r["scenario_id"] == "glimm-s3-power-n5-d0.3" for r in rows)
