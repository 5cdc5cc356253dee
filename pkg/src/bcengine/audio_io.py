"""WAV ingestion and frame windowing.

The canonical sample format for the whole system is PCM16 little-endian,
mono, 16 kHz. Anything else is rejected instead of resampled so that the
DSP stages downstream stay deterministic and test vectors stay stable.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CANONICAL_RATE = 16000
INT16_FULL_SCALE = 32768.0
DEFAULT_FRAME_MS = 25
DEFAULT_HOP_MS = 10


class NotWav(Exception):
    """File is not a RIFF/WAVE container."""


class UnsupportedFormat(Exception):
    """WAV exists but is not PCM16 mono 16 kHz."""


class InvalidWindow(Exception):
    """Bad frame/hop combination."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono PCM audio, samples normalized to [-1.0, 1.0]."""

    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate != CANONICAL_RATE:
            raise UnsupportedFormat(
                f"sample_rate must be {CANONICAL_RATE}, got {self.sample_rate}"
            )
        if samples.size and (np.max(samples) > 1.0 or np.min(samples) < -1.0):
            raise ValueError("samples out of [-1, 1]")

    @property
    def duration_ms(self) -> int:
        return int(1000 * len(self.samples) // self.sample_rate)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Frame:
    """One analysis window at a fixed hop; trailing frames are zero-padded."""

    samples: np.ndarray
    start_ms: int
    frame_ms: int = DEFAULT_FRAME_MS
    hop_ms: int = DEFAULT_HOP_MS

    @property
    def energy(self) -> float:
        x = self.samples
        return float(np.dot(x, x))


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a PCM16 mono 16 kHz WAV file into a normalized buffer.

    Raises NotWav for non-RIFF/WAVE input and UnsupportedFormat for stereo,
    non-PCM16 or wrong-rate files. No resampling is attempted.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            comptype = wf.getcomptype()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise NotWav(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise NotWav(f"{path}: truncated header") from exc
    if comptype != "NONE" or sampwidth != 2:
        raise UnsupportedFormat(f"{path}: need PCM16, got comp={comptype} width={sampwidth}")
    if n_channels != 1:
        raise UnsupportedFormat(f"{path}: need mono, got {n_channels} channels")
    if rate != CANONICAL_RATE:
        raise UnsupportedFormat(f"{path}: need {CANONICAL_RATE} Hz, got {rate}")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / INT16_FULL_SCALE)


def write_wav(path: str | Path, buf: AudioBuffer) -> None:
    """Write a buffer back to PCM16 mono WAV (byte-exact round trip)."""
    pcm = np.clip(np.rint(buf.samples * INT16_FULL_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(buf.sample_rate)
        wf.writeframes(pcm.tobytes())


def frame_iter(
    buf: AudioBuffer,
    frame_ms: int = DEFAULT_FRAME_MS,
    hop_ms: int = DEFAULT_HOP_MS,
) -> list[Frame]:
    """Slice a buffer into hop-spaced frames; the tail frame is zero-padded.

    Every hop gets a frame (count = ceil(samples / hop_samples)) so time
    accounting downstream stays exact.
    """
    if hop_ms < 1 or frame_ms < hop_ms:
        raise InvalidWindow(f"need frame_ms >= hop_ms >= 1, got {frame_ms}/{hop_ms}")
    hop = buf.sample_rate * hop_ms // 1000
    frame_len = buf.sample_rate * frame_ms // 1000
    n = len(buf.samples)
    n_frames = -(-n // hop) if n else 0
    frames = []
    for k in range(n_frames):
        start = k * hop
        chunk = buf.samples[start : start + frame_len]
        if len(chunk) < frame_len:
            chunk = np.concatenate([chunk, np.zeros(frame_len - len(chunk))])
        frames.append(Frame(chunk, start_ms=k * hop_ms, frame_ms=frame_ms, hop_ms=hop_ms))
    return frames


def tone(freq_hz: float, duration_ms: int, amplitude: float = 0.5,
         rate: int = CANONICAL_RATE) -> AudioBuffer:
    """Synthesis helper: a sine tone buffer (used by fixtures and demos)."""
    n = rate * duration_ms // 1000
    t = np.arange(n) / rate
    return AudioBuffer(amplitude * np.sin(2 * np.pi * freq_hz * t), rate)


def silence(duration_ms: int, rate: int = CANONICAL_RATE) -> AudioBuffer:
    n = rate * duration_ms // 1000
    return AudioBuffer(np.zeros(n), rate)


def concat(*bufs: AudioBuffer) -> AudioBuffer:
    return AudioBuffer(np.concatenate([b.samples for b in bufs]))
