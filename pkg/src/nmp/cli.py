"""Operator command line: live endpoints, emulated experiments, analysis.

Exit codes: 0 success, 2 validation error (bad flags, bad files, bad
scenario), 3 runtime failure (unreachable server, failed run).
"""
from __future__ import annotations

import asyncio
import json
import logging
import os
import sys
from pathlib import Path

import click

from .audio import frame_duration_ms
from .client import ClientConfig, parse_source_spec
from .engine import SessionConfig
from .errors import MeasurementError, NmpError, ScenarioError
from .latency import LatencyBudget, detect_onsets, predict_rtt, sync_spread
from .live import (DEFAULT_AUDIO_PORT, DEFAULT_CONTROL_PORT,
                   DEFAULT_GATEWAY_PORT, DEFAULT_HTTP_PORT, GatewayListener,
                   LiveClient, LiveServer)
from .scenario import load_scenario, run_scenario
from .wavio import WavFormatError

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("NMP_LOG", "info"), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s")


@click.group()
def main():
    """Networked music performance platform."""
    _setup_logging()


@main.command()
@click.option("--audio-port", default=DEFAULT_AUDIO_PORT, show_default=True,
              help="UDP port for the audio plane.")
@click.option("--control-port", default=DEFAULT_CONTROL_PORT, show_default=True,
              help="TCP port for the control plane.")
@click.option("--gateway-port", default=DEFAULT_GATEWAY_PORT, show_default=True,
              help="TCP port for one-way gateway subscribers.")
@click.option("--http-port", default=DEFAULT_HTTP_PORT, show_default=True,
              help="Console bridge HTTP/WebSocket port.")
@click.option("--host", default="0.0.0.0", show_default=True)
@click.option("--frame-size", default="128", type=click.Choice(["64", "128", "256"]),
              show_default=True, help="Samples per frame at 48 kHz.")
@click.option("--jb-depth", default=2, show_default=True,
              help="Server-side jitter buffer depth in frames.")
def server(audio_port, control_port, gateway_port, http_port, host,
           frame_size, jb_depth):
    """Run the live mixing server."""
    config = SessionConfig(frame_size=int(frame_size), server_jb_depth=jb_depth)
    srv = LiveServer(config, audio_port=audio_port, control_port=control_port,
                     gateway_port=gateway_port, http_port=http_port, host=host)

    async def _run():
        await srv.start()
        try:
            await asyncio.Event().wait()
        finally:
            await srv.stop()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        pass
    except OSError as exc:
        click.echo(f"server failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


@main.command()
@click.option("--server", "server_host", default="127.0.0.1", show_default=True)
@click.option("--name", required=True)
@click.option("--section", default="soprano", show_default=True,
              type=click.Choice(["soprano", "alto", "tenor", "bass",
                                 "conductor", "listener"]))
@click.option("--role", default=None,
              type=click.Choice(["performer", "conductor", "listener"]))
@click.option("--source", default="silence", show_default=True,
              help="wav:path[:loop] | sine:freq[:amp] | silence | follower[:reaction_ms]")
@click.option("--record", "record_path", default=None,
              help="Record the received mix to this WAV file.")
@click.option("--device-buffer-ms", default=0.0, show_default=True)
@click.option("--jb-depth", default=2, show_default=True)
@click.option("--probe-interval-ms", default=500.0, show_default=True)
@click.option("--duration", default=None, type=float,
              help="Leave after this many seconds (default: run until Ctrl-C).")
@click.option("--audio-port", default=DEFAULT_AUDIO_PORT, show_default=True)
@click.option("--control-port", default=DEFAULT_CONTROL_PORT, show_default=True)
@click.option("--json", "as_json", is_flag=True,
              help="Print the session record as JSON on exit.")
def client(server_host, name, section, role, source, record_path,
           device_buffer_ms, jb_depth, probe_interval_ms, duration,
           audio_port, control_port, as_json):
    """Run a live headless performer/conductor/listener client."""
    try:
        src = parse_source_spec(source)
    except (ValueError, WavFormatError) as exc:
        raise click.UsageError(str(exc)) from None
    config = ClientConfig(name=name, section=section, role=role or "performer",
                          source=src, sink_path=record_path,
                          device_buffer_ms=device_buffer_ms,
                          client_jb_depth=jb_depth,
                          probe_interval_ms=probe_interval_ms)
    cli = LiveClient(config, server_host, audio_port, control_port)
    try:
        record = asyncio.run(cli.run(duration))
    except KeyboardInterrupt:
        record = cli.engine.session_record()
        cli.engine.flush()
    except (OSError, NmpError) as exc:
        click.echo(f"client failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    if as_json:
        click.echo(json.dumps(record, indent=2, sort_keys=True))


@main.command()
@click.option("--server", "server_host", default="127.0.0.1", show_default=True)
@click.option("--out", "out_path", required=True,
              help="WAV file to write the ensemble mix to.")
@click.option("--duration", default=10.0, show_default=True)
@click.option("--gateway-port", default=DEFAULT_GATEWAY_PORT, show_default=True)
def listen(server_host, out_path, duration, gateway_port):
    """Subscribe to the one-way gateway and record the ensemble mix."""
    listener = GatewayListener(server_host, gateway_port)
    try:
        frames = asyncio.run(listener.run(duration, out_path))
    except (OSError, NmpError) as exc:
        click.echo(f"listen failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"received {frames} frames -> {out_path}")


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=None, type=int, help="Override the scenario seed.")
@click.option("--out", "out_dir", default=None,
              help="Artifacts directory (report, WAVs, logs).")
@click.option("--json", "as_json", is_flag=True, help="Print the report as JSON.")
def emulate(scenario_file, seed, out_dir, as_json):
    """Run a scenario under the deterministic network emulator."""
    try:
        scenario = load_scenario(scenario_file)
        if seed is not None:
            scenario.seed = seed
    except ScenarioError as exc:
        click.echo(f"invalid scenario: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        report = run_scenario(scenario, out_dir)
    except (NmpError, OSError) as exc:
        click.echo(f"scenario run failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    if as_json:
        click.echo(report.to_json())
    else:
        click.echo(f"rtt mean {report.rtt_mean_ms:.2f} ms  "
                   f"p95 {report.rtt_p95_ms:.2f} ms  "
                   f"pass {report.passed}")
        if report.onset_spread_mean_ms is not None:
            click.echo(f"onset spread {report.onset_spread_mean_ms:.2f} ms "
                       f"± {report.onset_spread_std_ms:.2f} ms")


@main.command()
@click.option("--device", default=0.0, show_default=True,
              help="One-way device buffer (ms).")
@click.option("--net", default=0.0, show_default=True,
              help="One-way network delay (ms).")
@click.option("--frame", "frame_ms", default=frame_duration_ms(128),
              show_default=True, help="Frame duration (ms).")
@click.option("--jb-server", default=2, show_default=True)
@click.option("--jb-client", default=2, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def predict(device, net, frame_ms, jb_server, jb_client, as_json):
    """Print the analytic round-trip-time prediction."""
    try:
        budget = LatencyBudget(device, net, frame_ms, jb_server, jb_client)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    rtt = predict_rtt(budget)
    if as_json:
        click.echo(json.dumps({"predicted_rtt_ms": round(rtt, 3)}))
    else:
        click.echo(f"{rtt:.2f} ms")


@main.group()
def analyze():
    """Offline analysis of recorded artifacts."""


@analyze.command("sync")
@click.argument("wavs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--frame-size", default=128, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def analyze_sync(wavs, frame_size, as_json):
    """Inter-performer onset spread across recorded tracks."""
    tracks = {}
    try:
        for path in wavs:
            tracks[Path(path).stem] = detect_onsets(path, frame_size)
        spread = sync_spread(tracks)
    except (WavFormatError, MeasurementError) as exc:
        click.echo(f"analysis failed: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    if as_json:
        click.echo(json.dumps({
            "onset_spread_mean_ms": round(spread.mean_ms, 3),
            "onset_spread_std_ms": round(spread.std_ms, 3),
            "beats": spread.beats,
            "per_pair_ms": {f"{a}|{b}": round(v, 3)
                            for (a, b), v in spread.per_pair_ms.items()},
        }, sort_keys=True))
    else:
        click.echo(f"onset spread {spread.mean_ms:.2f} ms ± {spread.std_ms:.2f} ms "
                   f"over {spread.beats} beats")


if __name__ == "__main__":
    main()
