import json
from dataclasses import replace

import pytest

from epiherd.cli import main
from epiherd.config import ConfigError, parse_config
from epiherd.experiment.calibrate import calibration_grid, ordering_checks
from epiherd.experiment.design import (
    STANDARD_SCALING_GRIDS, STANDARD_THETAS, ConditionKey, FactorialDesign, desk_condition, episode_seed,
)
from epiherd.experiment.report import (
    ReportError, emit_report, markdown_report, read_summaries_csv, read_tsv, write_summaries_csv, write_tsv,
)
from epiherd.experiment.runner import (
    ConditionSummary, EpisodeOutcome, coverage_bound, run_condition, run_conditions, run_factorial, scaling_sweep,
    theta_sweep,
)
from epiherd.experiment.stats import compare_protocols
from epiherd.grid import GridConfig
from epiherd.protocols import Variant

SMALL = GridConfig(side_length=12, max_steps=40)


def small_design(**kw):
    kw.setdefault("episodes_per_condition", 3)
    kw.setdefault("grid", SMALL)
    return FactorialDesign(**kw)


def test_standard_design_cardinality_and_seeds():
    d = FactorialDesign()
    keys = d.conditions()
    assert len(keys) == len(d) == 108
    assert len(set(keys)) == 108
    single = FactorialDesign(protocols=[Variant.C2])
    assert len(single.conditions()) == 27
    seeds = {episode_seed(0, k, e) for k in keys for e in range(20)}
    # protocols share seeds within a network/k cell; cells and episodes do not
    assert len(seeds) == 27 * 20
    a, b = keys[0], replace(keys[0], protocol=Variant.C3)
    assert episode_seed(0, a, 5) == episode_seed(0, b, 5)
    assert episode_seed(0, a, 5) != episode_seed(1, a, 5)


def test_design_validates_levels():
    with pytest.raises(ValueError):
        FactorialDesign(loss_rates=[1.5])
    with pytest.raises(ValueError):
        FactorialDesign(coordination_ks=[5])
    with pytest.raises(ValueError):
        FactorialDesign(episodes_per_condition=0)


def test_single_episode_summary_has_zero_sd():
    d = small_design(episodes_per_condition=1)
    s = run_condition(d, desk_condition(Variant.C2, side=12, max_steps=40))
    o = s.outcomes[0]
    assert s.final_jsd_sd == 0.0 and s.final_alignment_sd == 0.0
    assert s.final_jsd_mean == o.final_jsd
    assert s.msgs_mean == o.messages_sent
    if o.success:
        assert s.tts_sd == 0.0 and s.tts_mean == o.time_to_success
    else:
        assert s.tts_mean is None


def test_c0_condition_has_no_messages():
    s = run_condition(small_design(), desk_condition(Variant.C0, side=12, max_steps=40))
    assert s.msgs_mean == 0 and s.bytes_mean == 0 and s.apb_mean is None
    assert s.meh_rate_all == 0.0 or s.final_jsd_mean < 0.1


def test_repeat_runs_identical():
    d = small_design()
    key = desk_condition(Variant.C3, side=12, max_steps=40)
    assert run_condition(d, key) == run_condition(d, key)


def test_k_is_a_real_factor():
    d = FactorialDesign(protocols=[Variant.C2], loss_rates=[0.0], latencies=[0], coordination_ks=[2, 4],
                        episodes_per_condition=20)
    k2, k4 = run_factorial(d)
    tts2 = [o.time_to_success for o in k2.outcomes]
    tts4 = [o.time_to_success for o in k4.outcomes]
    assert tts2 != tts4
    assert k2.success_rate >= k4.success_rate


def test_summary_identity_check():
    bad = EpisodeOutcome(False, None, 0.0, 0.0, True, 3, 21, 0, 0, 0, None)
    with pytest.raises(Exception):
        ConditionSummary.aggregate(desk_condition(Variant.C1), [bad])


def test_worker_count_invariance(tmp_path):
    d = small_design(coordination_ks=[2], latencies=[0, 1], loss_rates=[0.0, 0.3], episodes_per_condition=2)
    one = run_factorial(d, workers=1)
    two = run_factorial(d, workers=2)
    assert one == two
    p1 = write_summaries_csv(tmp_path / "a.csv", one).read_bytes()
    p2 = write_summaries_csv(tmp_path / "b.csv", two).read_bytes()
    assert p1 == p2


def test_theta_sweep_rows_and_equivalence():
    d = small_design(episodes_per_condition=4)
    base = desk_condition(Variant.C3, side=12, max_steps=40)
    rows = theta_sweep(d, base, STANDARD_THETAS, include_c2=True)
    assert len(rows) == 10
    msgs = [r.msgs_mean for r in rows[:9]]
    assert all(a >= b for a, b in zip(msgs, msgs[1:]))
    assert rows[0].outcomes == rows[-1].outcomes  # theta=0 equals C2 episode by episode
    with pytest.raises(ValueError):
        theta_sweep(d, desk_condition(Variant.C2))


def test_scaling_structure():
    d = small_design(episodes_per_condition=1)
    rows = scaling_sweep(d, [(10, 20), (14, 56)])
    assert len(rows) == 8
    assert [r.key.side for r in rows] == [10] * 4 + [14] * 4
    for r in rows:
        if r.key.protocol is Variant.C0:
            assert r.meh_rate_all == 0.0 or r.final_jsd_mean < 0.1
    bounds = [round(coverage_bound(n, t) * 100, 1) for n, t in STANDARD_SCALING_GRIDS]
    assert bounds == [40.0, 40.0, 31.1, 25.0]


def test_report_outputs(tmp_path):
    d = small_design(coordination_ks=[2], latencies=[0], loss_rates=[0.0], episodes_per_condition=3)
    summaries = run_factorial(d, trace=True)
    tests = compare_protocols(summaries)
    paths = emit_report(tmp_path, {"factorial": summaries}, tests)
    names = {p.name for p in paths}
    assert {"factorial.csv", "report.md", "factorial_jsd_by_outcome.tsv", "factorial_alignment_by_outcome.tsv",
            "factorial_success_vs_meh.tsv"} <= names
    rows = read_summaries_csv(tmp_path / "factorial.csv")
    assert len(rows) == 4
    assert rows[0]["protocol"] == "C0" and rows[0]["apb_mean"] is None
    assert rows[3]["success_rate"] == summaries[3].success_rate
    md = (tmp_path / "report.md").read_text()
    assert "MEH (failed)" in md and "MEH (all)" in md
    assert len(tests.results) == 6 * 4
    header, series = read_tsv(tmp_path / "factorial_jsd_by_outcome.tsv")
    assert header == ["condition", "outcome", "t", "mean", "episodes"]
    assert series and all(isinstance(r[3], float) for r in series)


def test_tsv_roundtrip_exact(tmp_path):
    rows = [("C3", 0.1 + 0.2, 3, 1e-17, None), ("C2", 1 / 3, 0, -2.5, "x y")]
    write_tsv(tmp_path / "s.tsv", ["a", "b", "c", "d", "e"], rows)
    header, back = read_tsv(tmp_path / "s.tsv")
    assert header == ["a", "b", "c", "d", "e"]
    assert back == [list(r) for r in rows]


def test_emit_report_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report(tmp_path, {"factorial": []})
    blocker = tmp_path / "file"
    blocker.write_text("")
    s = run_condition(small_design(episodes_per_condition=1), desk_condition(Variant.C0, side=12, max_steps=40))
    with pytest.raises(ReportError, match="file"):
        emit_report(blocker / "sub", {"x": [s]})


def test_markdown_sections():
    d = small_design(episodes_per_condition=2)
    rows = theta_sweep(d, desk_condition(Variant.C3, side=12, max_steps=40), [0.0, 0.2])
    md = markdown_report({"theta": rows})
    assert "| 0.00 |" in md and "| 0.20 |" in md


def test_ordering_checks_shape():
    d = small_design(episodes_per_condition=2)
    keys = [desk_condition(v, side=12, max_steps=40) for v in Variant]
    by = {s.key.protocol: s for s in run_conditions(d, keys)}
    checks = ordering_checks(by)
    assert {c.criterion for c in checks} == {10, 11, 12, 13}
    assert len(calibration_grid(FactorialDesign())) == 27


def test_config_parsing():
    cfg = parse_config("[simulation]\nN = 30\nn = 4\nk = 2, 3\np_base = 0.0,0.1\nprotocols = C2, C3\n")
    assert cfg == {"N": 30, "n": 4, "k": [2, 3], "p_base": [0.0, 0.1], "protocols": ["C2", "C3"]}
    with pytest.raises(ConfigError):
        parse_config("N = 3\n")
    with pytest.raises(ConfigError):
        parse_config("[simulation]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[simulation]\nT = lots\n")


def test_cli_episode_with_trace(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    code = main(["episode", "--protocol", "C2", "--seed", "3", "--side", "12", "--steps", "40", "--trace", str(trace)])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["phase_order_audit"] is True
    assert trace.exists()


def test_cli_factorial_with_config(tmp_path, capsys):
    conf = tmp_path / "run.ini"
    conf.write_text("[simulation]\nN = 10\nT = 30\nk = 2\np_base = 0.0\nell = 0, 1\nepisodes = 2\n")
    code = main(["factorial", "--config", str(conf), "--out", str(tmp_path / "out"), "--protocols", "C0,C3"])
    assert code == 0
    rows = read_summaries_csv(tmp_path / "out" / "factorial.csv")
    assert len(rows) == 4 and {r["side"] for r in rows} == {10}


def test_cli_bad_config(tmp_path, capsys):
    conf = tmp_path / "bad.ini"
    conf.write_text("[simulation]\nwhat = 1\n")
    assert main(["episode", "--config", str(conf)]) == 2
    assert "unknown key" in capsys.readouterr().err
