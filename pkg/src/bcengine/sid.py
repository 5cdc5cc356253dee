"""Speaking interval detection: energy VAD plus delay-trigger hysteresis.

Frames are classified voiced/unvoiced by an energy threshold; an utterance
opens only after enter_speech_frames consecutive voiced frames and closes
only after enter_interval_frames consecutive unvoiced frames. Utterance
boundaries are back-dated to the true speech extent, so event timestamps
are logical times: an UtteranceStart carries the time of the first voiced
frame of its run even though it is detected (and physically emitted)
enter_speech_frames later.

Outside utterances the detector emits IntervalTick events on a fixed
cadence anchored at the last utterance end (or stream start). A tick whose
cadence time falls inside a pending voiced run is deferred until the run
dies (keeping its cadence timestamp) and dropped if the run becomes an
utterance, which keeps the event stream strictly ordered by t_ms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .audio_io import Frame


class NonMonotonicTime(Exception):
    """Frame timestamps must advance by exactly hop_ms per step."""


class EventKind(str, Enum):
    UTTERANCE_START = "UtteranceStart"
    UTTERANCE_END = "UtteranceEnd"
    INTERVAL_TICK = "IntervalTick"


@dataclass(frozen=True)
class SpeechEvent:
    kind: EventKind
    t_ms: int
    utterance_span: tuple[int, int] | None = None
    pause_ms: int | None = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value, "t_ms": self.t_ms}
        if self.utterance_span is not None:
            d["utterance_span"] = list(self.utterance_span)
        if self.pause_ms is not None:
            d["pause_ms"] = self.pause_ms
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class SidConfig:
    """Thresholds for the delay-trigger state machine.

    energy_floor is relative to full-scale frame energy (a frame of n
    samples at amplitude 1.0 has energy n); a frame is voiced iff its
    energy strictly exceeds energy_floor * n.
    """

    energy_floor: float = 1e-4
    enter_speech_frames: int = 20
    enter_interval_frames: int = 70
    tick_ms: int = 100

    def __post_init__(self) -> None:
        if self.enter_speech_frames < 1 or self.enter_interval_frames < 1:
            raise ValueError("trigger frame counts must be >= 1")
        if self.tick_ms < 1:
            raise ValueError("tick_ms must be >= 1")


def vad_classify(frame: Frame, cfg: SidConfig) -> bool:
    return frame.energy > cfg.energy_floor * len(frame.samples)


class SidState:
    """Streaming detector state; one instance per session, not shared."""

    def __init__(self, cfg: SidConfig, hop_ms: int = 10, start_ms: int = 0) -> None:
        if cfg.tick_ms % hop_ms != 0:
            raise ValueError(f"tick_ms {cfg.tick_ms} not a multiple of hop_ms {hop_ms}")
        self.cfg = cfg
        self.hop_ms = hop_ms
        self.in_utterance = False
        self.voiced_run = 0
        self.run_start_ms = 0
        self.unvoiced_run = 0
        self.utt_start_ms = 0
        self.last_voiced_end_ms = 0
        self.pause_baseline_ms = start_ms
        self.next_tick_ms: int | None = start_ms + cfg.tick_ms
        self._expected_t: int | None = start_ms

    def step(self, voiced: bool, t_ms: int) -> list[SpeechEvent]:
        """Advance one frame; returns the events that became final."""
        if self._expected_t is not None and t_ms != self._expected_t:
            raise NonMonotonicTime(f"expected t_ms {self._expected_t}, got {t_ms}")
        self._expected_t = t_ms + self.hop_ms
        emit_t = t_ms + self.hop_ms
        events: list[SpeechEvent] = []
        cfg = self.cfg

        if not self.in_utterance:
            if voiced:
                if self.voiced_run == 0:
                    self.run_start_ms = t_ms
                self.voiced_run += 1
                if self.voiced_run == cfg.enter_speech_frames:
                    self.in_utterance = True
                    self.utt_start_ms = self.run_start_ms
                    self.last_voiced_end_ms = emit_t
                    self.unvoiced_run = 0
                    self.voiced_run = 0
                    # Deferred cadence points inside the utterance are dropped.
                    self.next_tick_ms = None
                    events.append(SpeechEvent(EventKind.UTTERANCE_START, self.utt_start_ms))
                    return events
            else:
                self.voiced_run = 0
        else:
            if voiced:
                self.last_voiced_end_ms = emit_t
                self.unvoiced_run = 0
            else:
                self.unvoiced_run += 1
                if self.unvoiced_run == cfg.enter_interval_frames:
                    span = (self.utt_start_ms, self.last_voiced_end_ms)
                    events.append(
                        SpeechEvent(EventKind.UTTERANCE_END, span[1], utterance_span=span)
                    )
                    self.in_utterance = False
                    self.voiced_run = 0
                    self.pause_baseline_ms = span[1]
                    # First cadence point at or after the detection step.
                    k = -(-(emit_t - span[1]) // cfg.tick_ms)
                    self.next_tick_ms = span[1] + max(k, 1) * cfg.tick_ms

        # A cadence point fires only once time has strictly passed it, so a
        # voiced run starting exactly at the point still swallows it; this
        # keeps the stream strictly ordered by t_ms.
        if not self.in_utterance and self.voiced_run == 0 and self.next_tick_ms is not None:
            while self.next_tick_ms <= t_ms:
                events.append(
                    SpeechEvent(
                        EventKind.INTERVAL_TICK,
                        self.next_tick_ms,
                        pause_ms=self.next_tick_ms - self.pause_baseline_ms,
                    )
                )
                self.next_tick_ms += cfg.tick_ms
        return events

    def flush(self) -> list[SpeechEvent]:
        """Close an open utterance at end of stream (offline convenience)."""
        if not self.in_utterance:
            return []
        span = (self.utt_start_ms, self.last_voiced_end_ms)
        self.in_utterance = False
        self.pause_baseline_ms = span[1]
        self.next_tick_ms = None
        self._expected_t = None
        return [SpeechEvent(EventKind.UTTERANCE_END, span[1], utterance_span=span)]


def sid_step(state: SidState, voiced: bool, t_ms: int) -> tuple[SidState, list[SpeechEvent]]:
    """Functional-style wrapper over SidState.step."""
    return state, state.step(voiced, t_ms)
