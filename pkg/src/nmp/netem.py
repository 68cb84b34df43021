"""Deterministic in-process network emulator on a virtual clock.

Every experiment runs on VirtualClock: datagram links apply seeded delay,
jitter, loss and reordering; reliable links (control / gateway planes) apply
the base delay only and preserve order.  Identical seed + traffic produces a
byte-identical delivery log.

PRNG: python-mt19937, one independent stream per link (derived from the run
seed and the link name via sha256), so scheduling order never perturbs draws.
"""
from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass

from .errors import NmpError

PRNG_ALGORITHM = "python-mt19937"

PRESETS = {
    "lan": dict(one_way_delay_ms=2.0, jitter_ms=1.0, loss_rate=0.0005, reorder_rate=0.001),
    "broadband": dict(one_way_delay_ms=25.0, jitter_ms=8.0, loss_rate=0.005, reorder_rate=0.005),
    "congested": dict(one_way_delay_ms=80.0, jitter_ms=40.0, loss_rate=0.02, reorder_rate=0.02),
}


@dataclass
class NetworkProfile:
    """One-way delay / jitter / loss / reorder description of a path."""

    one_way_delay_ms: float
    jitter_ms: float = 0.0
    loss_rate: float = 0.0
    reorder_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.one_way_delay_ms < 0:
            raise ValueError("one_way_delay_ms must be >= 0")
        if self.jitter_ms > self.one_way_delay_ms:
            raise ValueError("jitter_ms must not exceed one_way_delay_ms")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError("loss_rate must be in [0, 1]")
        if not 0.0 <= self.reorder_rate < 1.0:
            raise ValueError("reorder_rate must be in [0, 1)")


def preset(name: str) -> NetworkProfile:
    try:
        return NetworkProfile(**PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown network preset {name!r}; "
                         f"known: {sorted(PRESETS)}") from None


class VirtualClock:
    """Discrete event queue; ties broken by insertion order (stable)."""

    def __init__(self, start_us: int = 0):
        self.now_us = start_us
        self._heap: list[tuple[int, int, object, tuple]] = []
        self._counter = 0

    def schedule(self, due_us: int, callback, *args) -> None:
        heapq.heappush(self._heap, (max(due_us, self.now_us), self._counter,
                                    callback, args))
        self._counter += 1

    def schedule_in(self, delay_us: int, callback, *args) -> None:
        self.schedule(self.now_us + delay_us, callback, *args)

    def advance(self, to_us: int) -> int:
        """Run all events due <= to_us in order; clock ends at to_us."""
        if to_us < self.now_us:
            raise NmpError(f"clock cannot regress from {self.now_us} to {to_us}")
        processed = 0
        while self._heap and self._heap[0][0] <= to_us:
            due, _idx, callback, args = heapq.heappop(self._heap)
            self.now_us = due
            callback(*args)
            processed += 1
        self.now_us = to_us
        return processed

    def pending(self) -> int:
        return len(self._heap)


def _derive_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Link:
    """One unidirectional lossy datagram path through the emulator."""

    def __init__(self, clock: VirtualClock, name: str, profile: NetworkProfile,
                 seed: int, frame_us: int, log: list[str]):
        self.clock = clock
        self.name = name
        self.profile = profile
        self.frame_us = frame_us
        self.rng = random.Random(_derive_seed(seed ^ profile.seed, name))
        self.log = log
        self.sent = 0
        self.delivered = 0
        self.dropped = 0

    def send(self, seq: int, payload, deliver) -> None:
        now = self.clock.now_us
        self.sent += 1
        p = self.profile
        if self.rng.random() < p.loss_rate:
            self.dropped += 1
            self.log.append(f"{now} tx {self.name} {seq} drop")
            return
        delay_us = (p.one_way_delay_ms + self.rng.uniform(-p.jitter_ms, p.jitter_ms)) * 1000.0
        if self.rng.random() < p.reorder_rate:
            delay_us += self.frame_us
        due = now + int(round(delay_us))
        self.log.append(f"{now} tx {self.name} {seq} queued")
        self.clock.schedule(due, self._deliver, seq, payload, deliver)

    def _deliver(self, seq: int, payload, deliver) -> None:
        self.delivered += 1
        self.log.append(f"{self.clock.now_us} rx {self.name} {seq} deliver")
        deliver(payload)


class ReliableLink:
    """In-order lossless path with the profile's base delay (control/gateway)."""

    def __init__(self, clock: VirtualClock, name: str, delay_ms: float,
                 log: list[str] | None = None):
        self.clock = clock
        self.name = name
        self.delay_us = int(round(delay_ms * 1000.0))
        self.log = log
        self._last_due = 0
        self._seq = 0

    def send(self, payload, deliver) -> None:
        due = max(self.clock.now_us + self.delay_us, self._last_due)
        self._last_due = due
        if self.log is not None:
            self.log.append(f"{self.clock.now_us} tx {self.name} {self._seq} queued")
        self.clock.schedule(due, deliver, payload)
        self._seq += 1


class Emulator:
    """Owns the clock, all links and the shared delivery log."""

    def __init__(self, seed: int, frame_us: int, clock: VirtualClock | None = None):
        self.clock = clock or VirtualClock()
        self.seed = seed
        self.frame_us = frame_us
        self.log: list[str] = [f"# prng {PRNG_ALGORITHM} seed {seed}"]
        self.links: dict[str, Link] = {}

    def link(self, name: str, profile: NetworkProfile) -> Link:
        lnk = Link(self.clock, name, profile, self.seed, self.frame_us, self.log)
        self.links[name] = lnk
        return lnk

    def reliable(self, name: str, delay_ms: float) -> ReliableLink:
        return ReliableLink(self.clock, name, delay_ms, self.log)

    def conservation_ok(self) -> bool:
        """After the clock drains, delivered + dropped must equal sent."""
        return all(l.sent == l.delivered + l.dropped for l in self.links.values())

    def totals(self) -> dict:
        return {name: dict(sent=l.sent, delivered=l.delivered, dropped=l.dropped)
                for name, l in self.links.items()}
