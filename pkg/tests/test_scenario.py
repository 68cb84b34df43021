"""Scenario loading, validation diagnostics, virtual runs, determinism."""
import json
from pathlib import Path

import pytest

from nmp.errors import ScenarioError
from nmp.latency import LatencyReport
from nmp.scenario import (Scenario, ScenarioRunner, load_scenario,
                          run_scenario, scenario_from_dict)

SCENARIOS = Path(__file__).parent.parent / "scenarios"


def small_doc(**session_over):
    session = {"frame_size": 128, "duration_ms": 5000, "seed": 3,
               "server_jb_depth": 2, "probe_interval_ms": 150,
               "probe_start_ms": 300}
    session.update(session_over)
    return {
        "session": session,
        "click": {"period_ms": 400, "count": 8, "start_ms": 800},
        "clients": [
            {"name": "cond", "section": "conductor", "role": "conductor",
             "source": "click", "device_buffer_ms": 5, "client_jb_depth": 2,
             "profile": "lan"},
            {"name": "a", "section": "alto", "source": "follower",
             "device_buffer_ms": 5, "client_jb_depth": 2, "profile": "lan"},
            {"name": "b", "section": "bass", "source": "follower",
             "device_buffer_ms": 5, "client_jb_depth": 2, "profile": "lan"},
        ],
    }


# ---------------------------------------------------------------- validation

def test_bundled_scenarios_load():
    for path in ("lan_univ.toml", "broadband_home.toml"):
        sc = load_scenario(SCENARIOS / path)
        assert len(sc.clients) == 7
        assert sum(c.role == "conductor" for c in sc.clients) == 1


def test_validation_messages_name_the_field():
    with pytest.raises(ScenarioError, match="session.frame_size"):
        scenario_from_dict(small_doc(frame_size=100))
    with pytest.raises(ScenarioError, match="session.duration_ms"):
        scenario_from_dict(small_doc(duration_ms=-5))
    doc = small_doc()
    doc["clients"][1]["name"] = "cond"
    with pytest.raises(ScenarioError, match="clients.name"):
        scenario_from_dict(doc)
    doc = small_doc()
    doc["clients"][1]["role"] = "conductor"
    with pytest.raises(ScenarioError, match="clients.role"):
        scenario_from_dict(doc)
    doc = small_doc()
    del doc["click"]
    with pytest.raises(ScenarioError, match="click"):
        scenario_from_dict(doc)
    doc = small_doc(duration_ms=1000)  # shorter than the click span
    with pytest.raises(ScenarioError, match="session.duration_ms"):
        scenario_from_dict(doc)
    doc = small_doc()
    doc["clients"][0]["profile"] = "dialup"
    with pytest.raises(ScenarioError, match=r"clients\[0\].profile"):
        scenario_from_dict(doc)
    doc = small_doc()
    del doc["clients"][0]["name"]
    with pytest.raises(ScenarioError, match=r"clients\[0\].name"):
        scenario_from_dict(doc)
    with pytest.raises(ScenarioError, match="clients"):
        scenario_from_dict({"session": {"duration_ms": 100}})


def test_invalid_toml_is_a_scenario_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[session\nframe_size = ")
    with pytest.raises(ScenarioError):
        load_scenario(bad)


def test_unknown_source_rejected():
    doc = small_doc()
    doc["clients"][1]["source"] = "kazoo"
    scenario = scenario_from_dict(doc)
    with pytest.raises(ScenarioError, match="clients.source"):
        run_scenario(scenario)


# ---------------------------------------------------------------- small runs

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    scenario = scenario_from_dict(small_doc(), name="small")
    report = run_scenario(scenario, out)
    return scenario, report, out


def test_run_produces_probe_samples_and_spread(small_run):
    _, report, _ = small_run
    assert len(report.rtt_samples_ms) >= 30
    assert report.rtt_p95_ms < 100 and report.passed is True
    assert report.onset_spread_mean_ms is not None
    assert 0 < report.onset_spread_mean_ms < 20  # LAN: low single-digit ms


def test_run_artifacts_written(small_run):
    scenario, report, out = small_run
    on_disk = LatencyReport.from_json((out / "report.json").read_text())
    assert on_disk == report
    log = (out / "delivery_log.txt").read_text().splitlines()
    assert log[0] == "# prng python-mt19937 seed 3"
    assert any(" rx " in line for line in log)
    records = json.loads((out / "records.json").read_text())
    assert {r["name"] for r in records} == {"cond", "a", "b"}
    followers = [r for r in records if r["name"] in ("a", "b")]
    assert all(not r["starved"] for r in followers)
    assert all(len(r["onset_times_ms"]) == 8 for r in followers)  # every beat
    for r in followers:
        assert (out / "wav" / f"{r['name']}_capture.wav").exists()


def test_follower_onsets_lag_the_click_schedule(small_run):
    _, report, out = small_run
    records = json.loads((out / "records.json").read_text())
    a = next(r for r in records if r["name"] == "a")
    # First click plays at 800 ms; the follower reacts ~150 ms after hearing
    # it, so its onset must lag by reaction + loop latency but stay sane.
    lag = a["onset_times_ms"][0] - 800.0
    assert 150.0 < lag < 250.0


def test_determinism_byte_identical(tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    sc1 = scenario_from_dict(small_doc(), name="small")
    sc2 = scenario_from_dict(small_doc(), name="small")
    run_scenario(sc1, out1)
    run_scenario(sc2, out2)
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "delivery_log.txt").read_bytes() == (out2 / "delivery_log.txt").read_bytes()
    assert (out1 / "records.json").read_bytes() == (out2 / "records.json").read_bytes()


def test_seed_changes_results(tmp_path):
    r1 = run_scenario(scenario_from_dict(small_doc(seed=3)))
    r2 = run_scenario(scenario_from_dict(small_doc(seed=4)))
    assert r1.rtt_samples_ms != r2.rtt_samples_ms


def test_gateway_recording(tmp_path):
    doc = small_doc(duration_ms=6000)
    doc["gateway"] = {"record": True, "buffer_ms": 500}
    out = tmp_path / "gw"
    runner = ScenarioRunner(scenario_from_dict(doc), out)
    runner.run()
    assert runner.gateway_records, "no gateway records delivered"
    assert (out / "wav" / "gateway.wav").exists()
