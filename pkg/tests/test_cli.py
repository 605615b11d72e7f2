"""CLI entry points and the live runner."""

import time

import pytest

from icare.cli import _load_gateway_config, main
from icare.harness import load_demo
from icare.live import LiveRunner
from icare.protocol import VitalChannel


class TestHarnessCli:
    def test_demo_list(self, capsys):
        assert main(["demo", "--list"]) == 0
        out = capsys.readouterr().out
        assert "two_exceedance" in out

    def test_demo_run_prints_summary(self, capsys):
        assert main(["demo", "two_exceedance"]) == 0
        out = capsys.readouterr().out
        assert "latency=32" in out
        assert "digest:" in out

    def test_run_scenario_file_with_report(self, tmp_path, capsys):
        scenario = tmp_path / "tiny.icare"
        scenario.write_text("""
horizon = 50
elder_id = E01

[sensor S1]
channel = ECG_HR
period_s = 10
generator = constant
value = 72
""")
        report_path = tmp_path / "report.txt"
        assert main(["run", "--scenario", str(scenario), "--report", str(report_path)]) == 0
        text = report_path.read_text()
        assert "--- effect log ---" in text
        assert "records_generated: 6" in text

    def test_bad_scenario_is_error(self, tmp_path, capsys):
        scenario = tmp_path / "bad.icare"
        scenario.write_text("horizon = nope\nelder_id = E01\n")
        assert main(["run", "--scenario", str(scenario)]) == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_demo_is_error(self, capsys):
        assert main(["demo", "definitely_not_a_demo"]) == 2


class TestGatewayConfigFile:
    def test_parses_flat_keys(self, tmp_path):
        path = tmp_path / "gw.conf"
        path.write_text("""
# gateway config
elder_id = E07
channels = ECG_HR, SYS_BP
alarm_wait_s = 12
bulk_interval_s = 90
alarm_targets = EC, F1
medicine_period_h = 8
""")
        config = _load_gateway_config(str(path))
        assert config.elder_id == "E07"
        assert config.enabled_channels == (VitalChannel.ECG_HR, VitalChannel.SYS_BP)
        assert config.alarm_wait_s == 12
        assert config.alarm_targets == ("EC", "F1")
        assert config.medicine_period_h == 8


class TestLiveRunner:
    def test_live_round_trip_over_real_sockets(self):
        scenario = load_demo("live_console")
        runner = LiveRunner(scenario, speed=5)
        try:
            runner.start()
            deadline = time.time() + 20
            # no threshold yet: the hot stream must not alarm
            time.sleep(1.0)
            assert runner.emergency.list_dispatches() == []
            # doctor tightens the band; the 120-valued stream now exceeds
            runner.server.set_threshold("D01", "E01", VitalChannel.ECG_HR, 50, 100)
            while time.time() < deadline and not runner.emergency.list_dispatches():
                time.sleep(0.2)
            dispatches = runner.emergency.list_dispatches()
            assert len(dispatches) >= 1
            # records flowed to the server over the TCP bulk listener
            assert len(runner.server.subjects["E01"].records) > 0
            # alarm events sync on the next bulk round-trip
            while time.time() < deadline:
                alarms = runner.server.view_events("D01", "E01", kind_prefix="alarm")
                if alarms:
                    break
                time.sleep(0.2)
            assert len(alarms) >= 1
        finally:
            runner.stop()

    def test_live_http_app_serves_combined_api(self):
        from fastapi.testclient import TestClient

        scenario = load_demo("live_console")
        runner = LiveRunner(scenario, speed=5)
        app = runner.create_app()
        with TestClient(app) as client:
            body = client.get("/healthz").json()
            assert body["status"] == "ok"
            body = client.get("/dispatches").json()
            assert body == {"dispatches": []}
            me = client.get("/me", headers={"Authorization": "Bearer tok-D01"}).json()
            assert me["role"] == "doctor"
            assert me["subjects"] == ["E01"]
        runner.stop()
