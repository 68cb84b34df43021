"""RIFF WAV helpers, pinned to the session format: 48 kHz, 16-bit PCM."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE
from .errors import NmpError


class WavFormatError(NmpError):
    pass


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file; returns (interleaved int16 samples, channels).

    Rejects anything that is not 48 kHz 16-bit PCM mono/stereo.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            if wf.getframerate() != SAMPLE_RATE:
                raise WavFormatError(
                    f"{path}: sample rate {wf.getframerate()} Hz, need {SAMPLE_RATE}")
            if wf.getsampwidth() != 2:
                raise WavFormatError(f"{path}: {8 * wf.getsampwidth()}-bit, need 16-bit PCM")
            if channels not in (1, 2):
                raise WavFormatError(f"{path}: {channels} channels, need mono or stereo")
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not a readable WAV file ({exc})") from None
    return np.frombuffer(raw, dtype="<i2").astype(np.int16), channels


def write_wav(path, samples: np.ndarray, channels: int = 1) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(np.asarray(samples, dtype="<i2").tobytes())
