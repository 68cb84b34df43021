"""Regenerate the golden wire fixtures.

Deliberately independent of the package under test: bytes are assembled
with int.to_bytes and literal JSON only.  Run from this directory:

    python3 gen_goldens.py
"""
import json
from pathlib import Path

HERE = Path(__file__).parent


def be(value, width):
    return value.to_bytes(width, "big")


def datagram(seq, timestamp_us, samples, frame_size, channels, client_id, flags):
    header = (b"NMPA" + be(1, 1) + be(flags, 1) + be(client_id, 2)
              + be(seq, 4) + be(timestamp_us, 8) + be(frame_size, 2)
              + be(channels, 1) + be(0, 1))
    payload = b"".join((s & 0xFFFF).to_bytes(2, "little") for s in samples)
    return header + payload


def main():
    # Audio datagram: client 7, seq 258, ts 1_234_567 us, 64 mono samples
    # ramping -32768, -31744, ... (step 1024), wrapping through int16.
    samples = [max(-32768, min(32767, -32768 + 1024 * i)) for i in range(64)]
    dg = datagram(seq=258, timestamp_us=1_234_567, samples=samples,
                  frame_size=64, channels=1, client_id=7, flags=0)
    (HERE / "golden_datagram.hex").write_text(dg.hex() + "\n")

    # Probe datagram: flags bit0 set, silent payload.
    probe = datagram(seq=9, timestamp_us=42, samples=[0] * 64,
                     frame_size=64, channels=1, client_id=3, flags=1)
    (HERE / "golden_probe.hex").write_text(probe.hex() + "\n")

    # Control message: canonical JSON (sorted keys, no spaces), u32-BE prefix.
    body = json.dumps({"type": "set_gain", "listener_id": 2, "source_id": 5,
                       "gain": 0.75}, sort_keys=True,
                      separators=(",", ":")).encode()
    (HERE / "golden_control.hex").write_text((be(len(body), 4) + body).hex() + "\n")


if __name__ == "__main__":
    main()
