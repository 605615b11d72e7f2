"""Command-line entry points.

icare            -- scenario harness: `icare run`, `icare demo`
gateway          -- headless gateway filter (events in, effects out)
sensors          -- scenario sensor streams to stdout or a TCP endpoint
icare-server     -- HTTP API + bulk ingest listener
icare-emergency  -- emergency-centre HTTP listing
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .gateway import Gateway, GatewayConfig, SystemMode
from .protocol import DecodeError, VitalChannel, VitalRecord, decode_sms
from .sensors import ScenarioError, SensorStream, load_scenario


def _write_report(report, path: str | None) -> None:
    print(report.summary())
    if path:
        Path(path).write_text(report.full_text(), encoding="utf-8")
        print(f"report written to {path}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="icare", description="scenario harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario file")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--report", default=None)
    run_p.add_argument("--live", action="store_true")
    run_p.add_argument("--port", type=int, default=8700)
    run_p.add_argument("--speed", type=int, default=1, help="live time acceleration")
    run_p.add_argument("--console-dir", default=None,
                       help="serve a built console from this directory at /console")

    demo_p = sub.add_parser("demo", help="run a shipped demo scenario")
    demo_p.add_argument("name", nargs="?", default=None)
    demo_p.add_argument("--list", action="store_true")
    demo_p.add_argument("--report", default=None)
    demo_p.add_argument("--live", action="store_true")
    demo_p.add_argument("--port", type=int, default=8700)
    demo_p.add_argument("--speed", type=int, default=1)
    demo_p.add_argument("--console-dir", default=None)

    args = parser.parse_args(argv)

    from .harness import list_demos, load_demo, run_scenario

    try:
        if args.command == "run":
            scenario = load_scenario(args.scenario)
        else:
            if args.list or not args.name:
                print("\n".join(list_demos()))
                return 0
            scenario = load_demo(args.name)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.live:
        from .live import serve_live

        print(f"live mode on http://127.0.0.1:{args.port} "
              f"(elder {scenario.elder_id}, horizon {scenario.horizon_s}s)")
        serve_live(scenario, port=args.port, speed=args.speed,
                   console_dir=args.console_dir)
        return 0

    _write_report(run_scenario(scenario), args.report)
    return 0


def _load_gateway_config(path: str) -> GatewayConfig:
    """Flat key/value file mirroring GatewayConfig."""
    values: dict[str, str] = {}
    for idx, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"expected 'key = value', got {line!r}", idx)
        values[key.strip()] = value.strip()

    def csv(text: str) -> tuple[str, ...]:
        return tuple(part.strip() for part in text.split(",") if part.strip())

    channels = tuple(VitalChannel[name] for name in csv(values.get("channels", "")))
    return GatewayConfig(
        elder_id=values.get("elder_id", "E01"),
        enabled_channels=channels,
        alarm_wait_s=int(values.get("alarm_wait_s", 30)),
        bulk_interval_s=int(values.get("bulk_interval_s", 300)),
        alarm_targets=csv(values.get("alarm_targets", "EC")),
        system_mode=SystemMode(values.get("mode", "monitoring")),
        medicine_period_h=int(values["medicine_period_h"]) if "medicine_period_h" in values else None,
        medicine_anchor=int(values.get("medicine_anchor", 0)),
        climate_period_d=int(values["climate_period_d"]) if "climate_period_d" in values else None,
        climate_anchor=int(values.get("climate_anchor", 0)),
    )


def gateway_main(argv: list[str] | None = None) -> int:
    """Filter mode: one event per stdin line, effect lines on stdout.

    Accepted input lines:
      raw SMS lines (THRESH|... / ADVICE|...)
      {"type": "sample", "elder_id":, "sensor_id":, "channel":, "seq":, "ts":, "value":}
      {"type": "tick", "ts": N}
      {"type": "response", "channel":, "response": "cancel"|"confirm", "ts": N}
      {"type": "quick_alarm", "ts": N}

    In sim mode the gateway auto-ticks at every input's timestamp and,
    at EOF, once more past the last alarm window so armed alarms settle.
    """
    parser = argparse.ArgumentParser(prog="gateway")
    parser.add_argument("--config", required=True)
    parser.add_argument("--mode", choices=["sim", "live"], default="sim")
    args = parser.parse_args(argv)

    config = _load_gateway_config(args.config)
    gateway = Gateway(config)
    last_ts = 0

    def emit(effects) -> None:
        for effect in effects:
            print(effect.line(), flush=True)

    def feed(line: str) -> None:
        nonlocal last_ts
        line = line.strip()
        if not line:
            return
        if line[0] != "{":
            msg = decode_sms(line)
            now = max(last_ts, msg.ts)
            last_ts = now
            emit(gateway.handle_inbound(msg, now))
            emit(gateway.tick(now))
            return
        obj = json.loads(line)
        kind = obj.get("type")
        ts = int(obj.get("ts", last_ts))
        last_ts = max(last_ts, ts)
        if kind == "sample":
            rec = VitalRecord(
                elder_id=obj.get("elder_id", config.elder_id),
                sensor_id=obj["sensor_id"],
                channel=VitalChannel[obj["channel"]],
                seq=int(obj["seq"]),
                ts=ts,
                value=float(obj["value"]),
            )
            emit(gateway.ingest_sample(rec, ts))
        elif kind == "tick":
            pass
        elif kind == "response":
            emit(gateway.respond_to_alarm_prompt(
                VitalChannel[obj["channel"]], obj["response"], ts))
        elif kind == "quick_alarm":
            emit(gateway.quick_alarm(ts))
        else:
            print(f"error: unknown input type {kind!r}", file=sys.stderr)
            return
        emit(gateway.tick(ts))

    if args.mode == "sim":
        for line in sys.stdin:
            try:
                feed(line)
            except (DecodeError, KeyError, ValueError) as exc:
                print(f"error: {exc}", file=sys.stderr)
        emit(gateway.tick(last_ts + config.alarm_wait_s + 1))
        return 0

    # live: same filter, but a wall-clock thread ticks once per second
    import threading
    import time

    stop = threading.Event()
    lock = threading.Lock()

    def ticker() -> None:
        nonlocal last_ts
        while not stop.is_set():
            now = int(time.time())
            with lock:
                last_ts = max(last_ts, now)
                emit(gateway.tick(now))
            stop.wait(1.0)

    thread = threading.Thread(target=ticker, daemon=True)
    thread.start()
    try:
        for line in sys.stdin:
            with lock:
                try:
                    feed(line)
                except (DecodeError, KeyError, ValueError) as exc:
                    print(f"error: {exc}", file=sys.stderr)
    finally:
        stop.set()
        thread.join(timeout=2)
    return 0


def sensors_main(argv: list[str] | None = None) -> int:
    """Emit a scenario's sensor records as JSON lines."""
    parser = argparse.ArgumentParser(prog="sensors")
    parser.add_argument("--scenario", required=True)
    parser.add_argument("--emit", default="stdout", help="stdout or host:port")
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    streams = [SensorStream(spec, scenario.elder_id) for spec in scenario.sensors]

    def record_lines():
        for t in range(0, scenario.horizon_s + 1):
            for stream in streams:
                rec = stream.sample(t)
                if rec is not None:
                    payload = rec.to_json()
                    payload["type"] = "sample"
                    yield json.dumps(payload, sort_keys=True)

    if args.emit == "stdout":
        for line in record_lines():
            print(line)
        return 0

    import socket

    host, _, port_text = args.emit.partition(":")
    with socket.create_connection((host, int(port_text))) as sock:
        for line in record_lines():
            sock.sendall(line.encode("utf-8") + b"\n")
    return 0


def server_main(argv: list[str] | None = None) -> int:
    """Serve the HTTP API and the bulk-frame ingest listener."""
    parser = argparse.ArgumentParser(prog="icare-server")
    parser.add_argument("--port", type=int, default=8600)
    parser.add_argument("--bulk-port", type=int, default=8601)
    parser.add_argument("--journal", default=None)
    parser.add_argument("--accounts", default=None,
                        help="JSON file: {accounts: [...], assignments: [...], grants: [...]}")
    args = parser.parse_args(argv)

    import uvicorn

    from .server import HealthServer, create_app
    from .server.transport import BulkListener

    core = HealthServer(journal_dir=args.journal)
    if args.accounts:
        seed = json.loads(Path(args.accounts).read_text(encoding="utf-8"))
        for account in seed.get("accounts", []):
            core.add_account(account["user_id"], account["role"],
                             account.get("name", ""), account.get("token"))
        for pair in seed.get("assignments", []):
            core.assign_doctor(pair["doctor"], pair["subject"])
        for pair in seed.get("grants", []):
            core.grant(pair["subject"], pair["grantee"])

    listener = BulkListener(core, port=args.bulk_port)
    listener.start_background()
    print(f"bulk ingest on tcp://127.0.0.1:{listener.port}")
    uvicorn.run(create_app(core), host="127.0.0.1", port=args.port, log_level="info")
    return 0


def emergency_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="icare-emergency")
    parser.add_argument("--port", type=int, default=8620)
    parser.add_argument("--audit", default=None)
    args = parser.parse_args(argv)

    import uvicorn

    from .emergency import EmergencyCentre, create_emergency_app

    centre = EmergencyCentre(audit_path=args.audit)
    uvicorn.run(create_emergency_app(centre), host="127.0.0.1", port=args.port,
                log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
