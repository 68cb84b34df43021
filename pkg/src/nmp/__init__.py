"""Networked music performance platform: low-latency personalized mixing
server, deterministic network emulation harness and latency laboratory."""

__version__ = "0.1.0"

from .audio import (AudioFrame, ClientInfo, DefaultGainParams, GainMatrix,
                    Section, apply_master_limit, default_gain, mix_for_listener)
from .jitter import JitterBuffer, PopKind, PushResult
from .latency import LatencyBudget, LatencyReport, measure_rtt, predict_rtt
from .netem import Emulator, NetworkProfile, VirtualClock, preset
from .scenario import Scenario, load_scenario, run_scenario

__all__ = [
    "AudioFrame", "ClientInfo", "DefaultGainParams", "GainMatrix", "Section",
    "apply_master_limit", "default_gain", "mix_for_listener",
    "JitterBuffer", "PopKind", "PushResult",
    "LatencyBudget", "LatencyReport", "measure_rtt", "predict_rtt",
    "Emulator", "NetworkProfile", "VirtualClock", "preset",
    "Scenario", "load_scenario", "run_scenario",
]
