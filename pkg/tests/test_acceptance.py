"""Acceptance criteria for the platform, one pass/fail line per criterion.

Criteria 1-3 share a module-scoped 10-seed sweep of the two bundled
deployment scenarios; the remaining criteria run their own deterministic
checks.  Every test prints exactly one `[PRIMARY n] ... PASS|FAIL` line.
"""
import random
from pathlib import Path

import numpy as np
import pytest

from helpers import brute_encode_datagram, brute_mix

from nmp import wire
from nmp.audio import (AudioFrame, ClientInfo, GainMatrix, Section,
                       frame_duration_ms)
from nmp.engine import GatewayOut, ServerEngine, SessionConfig, DatagramOut
from nmp.errors import ProtocolError
from nmp.jitter import JitterBuffer, PopKind, PushResult
from nmp.latency import LatencyBudget, predict_rtt
from nmp.scenario import ScenarioRunner, load_scenario, scenario_from_dict

SCENARIOS = Path(__file__).parent.parent / "scenarios"
SEEDS = list(range(1, 11))
FRAME_MS = frame_duration_ms(128)


def _run(scenario_name, seed, out_dir=None):
    scenario = load_scenario(SCENARIOS / scenario_name)
    scenario.seed = seed
    return ScenarioRunner(scenario, out_dir).run()


@pytest.fixture(scope="module")
def sweeps():
    """10-seed sweep of both bundled scenarios (shared by criteria 1-3)."""
    return {
        "lan": {seed: _run("lan_univ.toml", seed) for seed in SEEDS},
        "broadband": {seed: _run("broadband_home.toml", seed) for seed in SEEDS},
    }


def verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


# --------------------------------------------------------------- criterion 1

def test_criterion_1_lan_band(sweeps, announce):
    p95s = [r.rtt_p95_ms for r in sweeps["lan"].values()]
    in_band = all(40.0 <= p <= 85.0 for p in p95s)
    budget_ok = all(r.passed for r in sweeps["lan"].values())
    ok = in_band and budget_ok
    announce(f"[PRIMARY 1] lan rtt_p95 in [40, 85] ms and within the 100 ms "
             f"budget across 10 seeds "
             f"(range {min(p95s):.2f}..{max(p95s):.2f}): {verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 2

def test_criterion_2_broadband_band(sweeps, announce):
    p95s = [r.rtt_p95_ms for r in sweeps["broadband"].values()]
    ok = all(63.0 <= p <= 135.0 for p in p95s)
    announce(f"[PRIMARY 2] broadband rtt_p95 in [63, 135] ms across 10 seeds "
             f"(range {min(p95s):.2f}..{max(p95s):.2f}): {verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 3

def test_criterion_3_sync_direction(sweeps, announce):
    lan = [sweeps["lan"][s].onset_spread_mean_ms for s in SEEDS]
    bb = [sweeps["broadband"][s].onset_spread_mean_ms for s in SEEDS]
    defined = all(v is not None for v in lan + bb)
    direction = defined and all(b > l for l, b in zip(lan, bb))
    magnitude = defined and all(5.0 <= b <= 60.0 for b in bb)  # tens of ms
    ok = direction and magnitude
    announce(f"[PRIMARY 3] broadband onset spread exceeds lan on every seed, "
             f"tens-of-ms scale (lan {min(lan):.2f}..{max(lan):.2f} ms, "
             f"broadband {min(bb):.2f}..{max(bb):.2f} ms): {verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 4

def _grid_scenario(device, net, jb):
    return scenario_from_dict({
        "session": {"frame_size": 128, "duration_ms": 3600, "seed": 1,
                    "server_jb_depth": jb, "probe_interval_ms": 100,
                    "probe_start_ms": 200},
        "clients": [{"name": "probe", "section": "alto", "source": "silence",
                     "device_buffer_ms": device, "client_jb_depth": jb,
                     "profile": {"one_way_delay_ms": net, "jitter_ms": 0,
                                 "loss_rate": 0, "reorder_rate": 0}}],
    }, name=f"grid-d{device}-n{net}-j{jb}")


def test_criterion_4_model_consistency(announce):
    tolerance = 2 * FRAME_MS
    worst = 0.0
    ok = True
    for device in (0.0, 10.0):
        for net in (0.0, 2.0, 25.0):
            for jb in (0, 2, 4):
                report = ScenarioRunner(_grid_scenario(device, net, jb)).run()
                predicted = predict_rtt(LatencyBudget(device, net, FRAME_MS,
                                                      jb, jb))
                diff = abs(report.rtt_mean_ms - predicted)
                worst = max(worst, diff)
                ok = ok and diff <= tolerance
    announce(f"[PRIMARY 4] measured rtt within +/-{tolerance:.2f} ms of the "
             f"analytic model over the 18-point jitter-free grid "
             f"(worst |diff| {worst:.2f} ms): {verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 5

def test_criterion_5_mixing_oracle(announce):
    rng = random.Random(20260825)
    sections = [Section.SOPRANO, Section.ALTO, Section.TENOR, Section.BASS]
    failures = 0
    for _ in range(1000):
        n_sources = rng.randint(1, 6)
        frame_size = rng.choice([64, 128, 256])
        gm = GainMatrix()
        gains = {}
        frames = {}
        samples = {}
        for i in range(n_sources):
            cid = i + 1
            gm.register(ClientInfo(cid, f"c{cid}", rng.choice(sections)))
            gains[cid] = rng.uniform(0.0, 4.0)
            gm.set(1, cid, gains[cid])
            samples[cid] = [rng.randint(-32768, 32767) for _ in range(frame_size)]
            frames[cid] = AudioFrame(0, 0, np.array(samples[cid], dtype=np.int16),
                                     frame_size)
        from nmp.audio import mix_for_listener
        mixed = mix_for_listener(1, frames, gm)
        expected = brute_mix(1, samples, lambda l, s: gains[s])
        if mixed.samples.tolist() != expected:
            failures += 1
    ok = failures == 0
    announce(f"[PRIMARY 5] server mix bit-exact vs brute-force reference on "
             f"1000 randomized instances ({failures} mismatches): {verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 6

def test_criterion_6_jitter_buffer(announce):
    ok = True
    # (a) one-frame reordered loss-free stream reproduced bit-exactly.
    for seed in range(20):
        rng = random.Random(seed)
        n, depth = 200, 2
        payloads = [rng.randint(-32768, 32767) for _ in range(n)]
        arrivals = list(range(n))
        i = 0
        while i < n - 1:
            if rng.random() < 0.5:
                arrivals[i], arrivals[i + 1] = arrivals[i + 1], arrivals[i]
                i += 2
            else:
                i += 1
        jb = JitterBuffer(depth, 64)
        out = []
        for t in range(n + depth):
            r = jb.pop()
            if r.kind is PopKind.FRAME:
                out.append(r.frame)
            elif r.kind is PopKind.CONCEALED:
                ok = False
            if t < n:
                seq = arrivals[t]
                jb.push(AudioFrame(seq, 0, np.full(64, payloads[seq],
                                                   dtype=np.int16), 64))
        ok = ok and [f.seq for f in out] == list(range(n))
        ok = ok and all(int(f.samples[0]) == payloads[f.seq] for f in out)
    # (b) accounting: every push lands in exactly one bucket.
    jb = JitterBuffer(1, 64, capacity=4)
    results = [jb.push(AudioFrame(s, 0, np.zeros(64, dtype=np.int16), 64))
               for s in (0, 0, 9, 1)]
    jb.pop()
    results.append(jb.push(AudioFrame(0, 0, np.zeros(64, dtype=np.int16), 64)))
    ok = ok and results == [PushResult.ACCEPTED, PushResult.DUPLICATE,
                            PushResult.OVERFLOW, PushResult.ACCEPTED,
                            PushResult.LATE]
    s = jb.stats
    ok = ok and (s.received, s.late, s.duplicate, s.overflow) == (2, 1, 1, 1)
    # (c) concealment: previous frame at half amplitude, then silence.
    jb = JitterBuffer(1, 64)
    jb.push(AudioFrame(0, 0, np.full(64, 1001, dtype=np.int16), 64))
    jb.pop()
    first, second = jb.pop(), jb.pop()
    ok = ok and first.frame.samples.tolist() == [501] * 64  # 500.5 -> 501
    ok = ok and second.frame.samples.tolist() == [0] * 64
    ok = ok and jb.stats.concealed == 2
    # (d) added latency is exactly target_depth frame durations.
    for depth in (1, 2, 4):
        jb = JitterBuffer(depth, 64)
        emitted = {}
        for t in range(30):
            r = jb.pop()
            if r.kind is PopKind.FRAME:
                emitted[r.frame.seq] = t
            jb.push(AudioFrame(t, 0, np.zeros(64, dtype=np.int16), 64))
        ok = ok and emitted and all(t - seq == depth for seq, t in emitted.items())
    announce(f"[PRIMARY 6] jitter buffer ordering, accounting, concealment "
             f"and exact depth x frame latency: {verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 7

class _TimedRecords(list):
    def __init__(self, clock):
        super().__init__()
        self.clock = clock
        self.times = []

    def append(self, item):
        self.times.append(self.clock.now_us)
        super().append(item)


def test_criterion_7_one_way_gateway(announce):
    ok = True
    # Engine level: gateway record is the unity-gain ensemble mix, scheduled
    # exactly gateway_buffer_ms later; subscriber transmissions are rejected.
    engine = ServerEngine(SessionConfig(server_jb_depth=1,
                                        gateway_buffer_ms=500.0))
    conn = 0
    ids = []
    for name, section in (("m", "conductor"), ("a", "alto"), ("b", "bass")):
        outs = engine.handle_control(conn, {"type": "join", "name": name,
                                            "section": section,
                                            "role": section if section == "conductor" else "performer"})
        ids.append(next(o.msg["client_id"] for o in outs
                        if o.msg["type"] == "welcome"))
        conn += 1
    engine.handle_gateway(99, {"type": "gateway_hello"})
    rng = np.random.default_rng(3)
    samples = {cid: rng.integers(-16000, 16000, 128).astype(np.int16)
               for cid in ids}
    for cid, s in samples.items():
        frame = AudioFrame(0, 0, s, 128)
        engine.on_datagram(wire.encode_datagram(frame, cid), 0)
    outs = engine.tick(7000)
    gw = [o for o in outs if isinstance(o, GatewayOut)]
    ok = ok and len(gw) == 1 and gw[0].due_us == 7000 + 500_000
    if gw:
        record_frame, cid, _ = wire.decode_datagram(gw[0].record[4:])
        expected = brute_mix(0, {c: s.tolist() for c, s in samples.items()},
                             lambda l, s: 1.0)
        ok = ok and record_frame.samples.tolist() == expected and cid == 0
    # A subscriber that transmits is cut off; its bytes never reach a mix.
    engine.handle_gateway(99, {"type": "join", "name": "x", "section": "alto"})
    ok = ok and 99 not in engine.subscribers
    ok = ok and engine.counters["subscriber_tx_rejected"] == 1
    ok = ok and engine.counters["subscriber_audio_bytes_mixed"] == 0
    # Scenario level: every record lands exactly buffer_ms after its mix time.
    doc = {
        "session": {"frame_size": 128, "duration_ms": 4000, "seed": 2,
                    "probe_interval_ms": 100, "probe_start_ms": 200},
        "gateway": {"record": True, "buffer_ms": 700},
        "clients": [{"name": "solo", "section": "alto", "source": "sine",
                     "source_params": {"freq_hz": 440.0},
                     "device_buffer_ms": 0, "client_jb_depth": 1,
                     "profile": "lan"}],
    }
    runner = ScenarioRunner(scenario_from_dict(doc))
    runner.gateway_records = _TimedRecords(runner.clock)
    runner.run()
    ok = ok and len(runner.gateway_records) > 100
    for t, record in zip(runner.gateway_records.times, runner.gateway_records):
        frame, _, _ = wire.decode_datagram(record[4:])
        if t != frame.timestamp_us + 700_000:
            ok = False
            break
    ok = ok and runner.server.counters["subscriber_audio_bytes_mixed"] == 0
    announce(f"[PRIMARY 7] gateway one-way (0 subscriber bytes mixed), "
             f"stream bit-exact and delayed by the configured buffer: "
             f"{verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 8

def test_criterion_8_protocol_goldens_and_fuzz(testdata, announce):
    ok = True
    # Golden round-trips (fixtures generated by an independent encoder).
    golden_dg = bytes.fromhex((testdata / "golden_datagram.hex").read_text().strip())
    samples = [max(-32768, min(32767, -32768 + 1024 * i)) for i in range(64)]
    frame = AudioFrame(258, 1_234_567, np.array(samples, dtype=np.int16), 64)
    ok = ok and wire.encode_datagram(frame, 7) == golden_dg
    ok = ok and golden_dg == brute_encode_datagram(258, 1_234_567, samples,
                                                   64, 1, 7)
    decoded, cid, flags = wire.decode_datagram(golden_dg)
    ok = ok and (cid, flags) == (7, 0) and decoded.samples.tolist() == samples
    golden_ctl = bytes.fromhex((testdata / "golden_control.hex").read_text().strip())
    msg = {"type": "set_gain", "listener_id": 2, "source_id": 5, "gain": 0.75}
    ok = ok and wire.encode_control(msg) == golden_ctl
    ok = ok and wire.decode_control(golden_ctl) == msg
    # 10^5 fuzzed inputs: structured errors only, no crashes.
    rng = random.Random(42)
    crashes = 0
    good_ctl = wire.encode_control({"type": "ping", "t0_us": 7})
    for i in range(100_000):
        mode = i % 4
        if mode == 0:
            data, target = rng.randbytes(rng.randint(0, 200)), wire.decode_datagram
        elif mode == 1:
            buf = bytearray(golden_dg)
            for _ in range(rng.randint(1, 4)):
                buf[rng.randrange(len(buf))] = rng.randrange(256)
            data, target = bytes(buf), wire.decode_datagram
        elif mode == 2:
            data, target = rng.randbytes(rng.randint(0, 64)), wire.decode_control
        else:
            buf = bytearray(good_ctl)
            buf[rng.randrange(len(buf))] = rng.randrange(256)
            data, target = bytes(buf), wire.decode_control
        try:
            target(data)
        except ProtocolError:
            pass
        except Exception:
            crashes += 1
    ok = ok and crashes == 0
    announce(f"[PRIMARY 8] protocol goldens round-trip bit-exactly; 100000 "
             f"fuzzed inputs, {crashes} crashes: {verdict(ok)}")
    assert ok


# --------------------------------------------------------------- criterion 9

def test_criterion_9_determinism(tmp_path, announce):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    r1 = _run("lan_univ.toml", 1, out1)
    r2 = _run("lan_univ.toml", 1, out2)
    ok = r1 == r2
    for name in ("report.json", "delivery_log.txt", "records.json"):
        ok = ok and (out1 / name).read_bytes() == (out2 / name).read_bytes()
    announce(f"[PRIMARY 9] identical scenario + seed give byte-identical "
             f"report and delivery log: {verdict(ok)}")
    assert ok
