"""Session orchestration: speech events in, timed backchannel decisions out.

On an utterance end of sufficient length the reactive classifier runs over
the utterance's functionals; a positive call arms a reactive decision that
is emitted at the next interval tick (never inside an utterance). On each
tick of a proactive-enabled task the pause/progress/participant scores are
combined and compared against the threshold (raised by 0.15 for open-ended
tasks). A shared cooldown spaces decisions of any category; after a
proactive decision the pause clock rebaselines to the emission time.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from importlib.resources import files as _pkg_files
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .audio_io import AudioBuffer, Frame, frame_iter, read_wav
from .features import FeatureVector, FrameLLD, frame_lld, utterance_functionals
from .models import PlattParams, SvmModel, load_model, platt_score, svm_decision
from .scoring import (
    ParticipantScoreCache,
    PbcScoringConfig,
    TaskScoringParams,
    load_params,
    pause_score,
    pbc_decision,
    pbc_score,
    progress_score,
)
from .sid import EventKind, SidConfig, SidState, SpeechEvent, vad_classify

logger = logging.getLogger(__name__)

TYPE3_THRESHOLD_BUMP = 0.15


class ModelMissing(Exception):
    pass


class EventOutOfOrder(Exception):
    pass


class EmptyCategory(Exception):
    pass


class NoSpeechDetected(Exception):
    pass


class UnknownTask(Exception):
    pass


class TaskType(str, Enum):
    ONE_OFF = "I"
    TIMED_SERIES = "II"
    OPEN_ENDED = "III"


class Category(str, Enum):
    RBC = "RBC"
    PBC = "PBC"


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    task_type: TaskType
    duration_ms: int | None = None
    prompt_clip: str | None = None
    pbc_enabled: bool = True

    def __post_init__(self) -> None:
        if self.task_type is TaskType.ONE_OFF and self.pbc_enabled:
            object.__setattr__(self, "pbc_enabled", False)
        if self.task_type is TaskType.TIMED_SERIES and not self.duration_ms:
            raise ValueError(f"task {self.task_id}: timed task needs duration_ms")


@dataclass(frozen=True)
class Clip:
    clip_id: str
    path: str
    transcript: str = ""


class ClipLibrary:
    def __init__(self, clips: dict[Category, list[Clip]]) -> None:
        self.clips = clips

    @staticmethod
    def from_manifest(doc: dict) -> "ClipLibrary":
        out: dict[Category, list[Clip]] = {}
        for entry in doc["clips"]:
            cat = Category(entry["category"])
            out.setdefault(cat, []).append(
                Clip(entry["clip_id"], entry.get("path", ""), entry.get("transcript", ""))
            )
        return ClipLibrary(out)

    @staticmethod
    def load(path: str | Path) -> "ClipLibrary":
        return ClipLibrary.from_manifest(json.loads(Path(path).read_text(encoding="utf-8")))


def select_clip(lib: ClipLibrary, category: Category, rng: np.random.Generator) -> Clip:
    """Uniform seeded choice within a category."""
    clips = lib.clips.get(category, [])
    if not clips:
        raise EmptyCategory(category.value)
    return clips[int(rng.integers(len(clips)))]


@dataclass(frozen=True)
class EngineConfig:
    cooldown_ms: int = 1500
    pbc_reset_pause: bool = True
    rbc_min_utterance_ms: int = 300
    rbc_enabled: bool = True
    seed: int = 0


@dataclass(frozen=True)
class BackchannelDecision:
    category: Category
    clip_id: str
    t_ms: int
    cause: dict

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "clip_id": self.clip_id,
            "t_ms": self.t_ms,
            "cause": self.cause,
        }


@dataclass
class EngineModels:
    rbc_model: SvmModel | None
    scoring: PbcScoringConfig
    participant_model: tuple[SvmModel, PlattParams] | None = None


class SessionState:
    """Mutable per-session decision state; fed by one ordered event stream."""

    def __init__(
        self,
        task: TaskSpec,
        engine_cfg: EngineConfig,
        models: EngineModels,
        clips: ClipLibrary,
        features_for_span: Callable[[tuple[int, int]], FeatureVector],
        participant_score_value: float = 0.5,
        task_start_ms: int = 0,
        tick_ms: int = 100,
    ) -> None:
        if engine_cfg.cooldown_ms < tick_ms:
            raise ValueError("cooldown_ms must be >= tick_ms")
        if engine_cfg.rbc_enabled and models.rbc_model is None:
            raise ModelMissing("reactive classifier enabled but no model configured")
        if task.pbc_enabled and task.task_id not in models.scoring.task_params:
            raise ModelMissing(f"no scoring parameters for task {task.task_id}")
        # Clip categories a session may draw from must be populated up front.
        if engine_cfg.rbc_enabled and not clips.clips.get(Category.RBC):
            raise EmptyCategory(Category.RBC.value)
        if task.pbc_enabled and not clips.clips.get(Category.PBC):
            raise EmptyCategory(Category.PBC.value)
        self.task = task
        self.cfg = engine_cfg
        self.models = models
        self.clips = clips
        self.features_for_span = features_for_span
        self.participant_score_value = participant_score_value
        self.task_start_ms = task_start_ms
        self.rng = np.random.default_rng(engine_cfg.seed)
        self.cache = ParticipantScoreCache()
        self.last_event_t: int | None = None
        self.last_decision_t: int | None = None
        self.last_pbc_t: int | None = None
        self.pending_rbc: dict | None = None
        self.utterance_open = False

    def _cooldown_ok(self, t_ms: int) -> bool:
        return self.last_decision_t is None or t_ms - self.last_decision_t >= self.cfg.cooldown_ms

    def _task_elapsed(self, t_ms: int) -> int:
        return t_ms - self.task_start_ms

    def _task_active(self, t_ms: int) -> bool:
        if self.task.duration_ms is None:
            return True
        return self._task_elapsed(t_ms) <= self.task.duration_ms


def engine_step(
    state: SessionState, ev: SpeechEvent
) -> tuple[BackchannelDecision | None, dict | None]:
    """Advance the decision state by one speech event.

    Returns (decision, trace) where trace is the score row computed on a
    proactive-eligible tick (present even when no decision fires).
    """
    if state.last_event_t is not None and ev.t_ms < state.last_event_t:
        raise EventOutOfOrder(f"event at {ev.t_ms} after {state.last_event_t}")
    state.last_event_t = ev.t_ms

    if ev.kind is EventKind.UTTERANCE_START:
        state.utterance_open = True
        state.pending_rbc = None
        return None, None

    if ev.kind is EventKind.UTTERANCE_END:
        state.utterance_open = False
        span = ev.utterance_span
        if (
            state.cfg.rbc_enabled
            and state.models.rbc_model is not None
            and span is not None
            and span[1] - span[0] >= state.cfg.rbc_min_utterance_ms
            and state._task_active(ev.t_ms)
        ):
            fv = state.features_for_span(span)
            d = svm_decision(state.models.rbc_model, fv)
            if d >= 0.0:
                state.pending_rbc = {"utterance_span": list(span), "decision_value": d}
        return None, None

    # Interval tick: reactive emission first, then the proactive score path.
    t = ev.t_ms
    if not state._task_active(t):
        return None, None

    if state.pending_rbc is not None:
        cause = state.pending_rbc
        state.pending_rbc = None
        if state._cooldown_ok(t):
            clip = select_clip(state.clips, Category.RBC, state.rng)
            state.last_decision_t = t
            return BackchannelDecision(Category.RBC, clip.clip_id, t, cause), None
        # Blocked at its emission tick: a late reactive response is worthless,
        # so it is suppressed rather than deferred.

    if not state.task.pbc_enabled:
        return None, None

    params = state.models.scoring.task_params[state.task.task_id]
    pause = ev.pause_ms if ev.pause_ms is not None else 0
    if state.cfg.pbc_reset_pause and state.last_pbc_t is not None:
        pause = min(pause, t - state.last_pbc_t)
    s_pau = pause_score(pause, params.pause)
    s_pg = progress_score(state._task_elapsed(t), params.progress)
    s_pt = state.participant_score_value
    score = pbc_score(s_pau, s_pg, s_pt, state.models.scoring)
    thr = state.models.scoring.thr_pbc
    if state.task.task_type is TaskType.OPEN_ENDED:
        thr += TYPE3_THRESHOLD_BUMP
    fire = pbc_decision(score, state.models.scoring, threshold=thr)
    trace = {
        "type": "trace",
        "t_ms": t,
        "pause_ms": pause,
        "s_pau": s_pau,
        "s_pg": s_pg,
        "s_pt": s_pt,
        "score": score,
        "decision": False,
    }
    if fire and state._cooldown_ok(t):
        clip = select_clip(state.clips, Category.PBC, state.rng)
        state.last_decision_t = t
        state.last_pbc_t = t
        trace["decision"] = True
        cause = {"pause_ms": pause, "scores": {"s_pau": s_pau, "s_pg": s_pg, "s_pt": s_pt}}
        return BackchannelDecision(Category.PBC, clip.clip_id, t, cause), trace
    return None, trace


class Session:
    """Frame-by-frame pipeline: VAD, interval detection, decisions.

    Buffers raw frames only while a voiced run or utterance is open so
    utterance functionals can be computed at the (back-dated) span on
    demand; memory stays bounded by the longest utterance.
    """

    def __init__(
        self,
        task: TaskSpec,
        sid_cfg: SidConfig,
        engine_cfg: EngineConfig,
        models: EngineModels,
        clips: ClipLibrary,
        participant_score_value: float = 0.5,
        hop_ms: int = 10,
    ) -> None:
        self.sid = SidState(sid_cfg, hop_ms=hop_ms)
        self.sid_cfg = sid_cfg
        self.hop_ms = hop_ms
        self.state = SessionState(
            task,
            engine_cfg,
            models,
            clips,
            features_for_span=self._features_for_span,
            participant_score_value=participant_score_value,
            tick_ms=sid_cfg.tick_ms,
        )
        self._frame_buffer: list[Frame] = []
        self._lld_cache: dict[int, FrameLLD] = {}

    def _features_for_span(self, span: tuple[int, int]) -> FeatureVector:
        llds = []
        for f in self._frame_buffer:
            if span[0] <= f.start_ms < span[1]:
                if f.start_ms not in self._lld_cache:
                    self._lld_cache[f.start_ms] = frame_lld(f)
                llds.append(self._lld_cache[f.start_ms])
        return utterance_functionals(llds, duration_ms=span[1] - span[0])

    def feed_frame(self, frame: Frame) -> list[dict]:
        voiced = vad_classify(frame, self.sid_cfg)
        if voiced or self.sid.in_utterance or self.sid.voiced_run > 0:
            self._frame_buffer.append(frame)
        events = self.sid.step(voiced, frame.start_ms)
        rows = self._drive(events)
        if not self.sid.in_utterance and self.sid.voiced_run == 0 and self._frame_buffer:
            self._frame_buffer.clear()
            self._lld_cache.clear()
        return rows

    def _drive(self, events: list[SpeechEvent]) -> list[dict]:
        rows: list[dict] = []
        for ev in events:
            rows.append({"type": "event", **ev.to_dict()})
            decision, trace = engine_step(self.state, ev)
            if trace is not None:
                rows.append(trace)
            if decision is not None:
                rows.append({"type": "decision", **decision.to_dict()})
        return rows

    def feed_buffer(self, buf: AudioBuffer) -> list[dict]:
        rows = []
        for frame in frame_iter(buf, hop_ms=self.hop_ms):
            rows.extend(self.feed_frame(frame))
        return rows

    def finish(self) -> list[dict]:
        """Flush an open utterance at end of stream."""
        rows = self._drive(self.sid.flush())
        self._frame_buffer.clear()
        self._lld_cache.clear()
        return rows


def participant_score_from_trial(
    trial_audio: AudioBuffer,
    model: SvmModel,
    platt: PlattParams,
    sid_cfg: SidConfig | None = None,
) -> float:
    """Calibrated participant score from the first utterance of trial audio."""
    cfg = sid_cfg or SidConfig()
    sid = SidState(cfg)
    llds: dict[int, FrameLLD] = {}
    span = None
    for frame in frame_iter(trial_audio):
        voiced = vad_classify(frame, cfg)
        if voiced or sid.in_utterance or sid.voiced_run > 0:
            llds[frame.start_ms] = frame_lld(frame)
        for ev in sid.step(voiced, frame.start_ms):
            if ev.kind is EventKind.UTTERANCE_END and span is None:
                span = ev.utterance_span
    if span is None:
        for ev in sid.flush():
            if ev.kind is EventKind.UTTERANCE_END:
                span = ev.utterance_span
    if span is None:
        raise NoSpeechDetected("trial audio contains no detectable utterance")
    utt = [llds[t] for t in sorted(llds) if span[0] <= t < span[1]]
    fv = utterance_functionals(utt, duration_ms=span[1] - span[0])
    return platt_score(svm_decision(model, fv), platt)


# ---------------------------------------------------------------------------
# Session configuration files and offline simulation
# ---------------------------------------------------------------------------


@dataclass
class SessionRuntime:
    tasks: dict[str, TaskSpec]
    default_task_id: str
    sid_cfg: SidConfig
    engine_cfg: EngineConfig
    models: EngineModels
    clips: ClipLibrary
    participant_score_value: float
    seed: int

    def build_session(self, task_id: str | None = None) -> Session:
        tid = task_id or self.default_task_id
        if tid not in self.tasks:
            raise UnknownTask(tid)
        return Session(
            self.tasks[tid],
            self.sid_cfg,
            self.engine_cfg,
            self.models,
            self.clips,
            participant_score_value=self.participant_score_value,
        )


def _resolve_ref(ref: str, base: Path | None) -> Path | str:
    if ref.startswith("pkgdata:"):
        return _pkg_files("bcengine.data").joinpath(ref[len("pkgdata:"):])
    p = Path(ref)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


def load_session_config(path: str | Path) -> SessionRuntime:
    """Build a session runtime from the JSON config (task list, engine
    settings, model/parameter/clip file references, seed)."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return session_runtime_from_dict(doc, base=path.parent)


def session_runtime_from_dict(doc: dict, base: Path | None = None) -> SessionRuntime:
    tasks = {}
    for t in doc["tasks"]:
        tasks[t["task_id"]] = TaskSpec(
            task_id=t["task_id"],
            task_type=TaskType(t["task_type"]),
            duration_ms=t.get("duration_ms"),
            prompt_clip=t.get("prompt_clip"),
            pbc_enabled=t.get("pbc_enabled", True),
        )
    seed = doc.get("seed", 0)
    eng = doc.get("engine", {})
    engine_cfg = EngineConfig(
        cooldown_ms=eng.get("cooldown_ms", 1500),
        pbc_reset_pause=eng.get("pbc_reset_pause", True),
        rbc_min_utterance_ms=eng.get("rbc_min_utterance_ms", 300),
        rbc_enabled=eng.get("rbc_enabled", True),
        seed=seed,
    )
    sid_doc = doc.get("sid", {})
    sid_cfg = SidConfig(
        energy_floor=sid_doc.get("energy_floor", 1e-4),
        enter_speech_frames=sid_doc.get("enter_speech_frames", 20),
        enter_interval_frames=sid_doc.get("enter_interval_frames", 70),
        tick_ms=sid_doc.get("tick_ms", 100),
    )
    sc = doc["scoring"]
    task_params = {}
    if "params_file" in sc:
        ref = _resolve_ref(sc["params_file"], base)
        task_params = load_params(ref)
    scoring_cfg = PbcScoringConfig(
        weight_pause=sc.get("weight_pause", 0.5),
        weight_progress=sc.get("weight_progress", 0.3),
        weight_participant=sc.get("weight_participant", 0.2),
        thr_pbc=sc.get("thr_pbc", 0.75),
        task_params=task_params,
    )
    rbc_model = None
    if doc.get("rbc_model_file"):
        rbc_model, _ = load_model(_resolve_ref(doc["rbc_model_file"], base))
    participant_model = None
    if doc.get("participant_model_file"):
        m, p = load_model(_resolve_ref(doc["participant_model_file"], base))
        if p is None:
            raise ModelMissing("participant model file lacks calibration parameters")
        participant_model = (m, p)
    clips = ClipLibrary.load(_resolve_ref(doc["clips_file"], base))
    return SessionRuntime(
        tasks=tasks,
        default_task_id=doc.get("default_task", next(iter(tasks))),
        sid_cfg=sid_cfg,
        engine_cfg=engine_cfg,
        models=EngineModels(
            rbc_model=rbc_model, scoring=scoring_cfg, participant_model=participant_model
        ),
        clips=clips,
        participant_score_value=doc.get("participant_score", 0.5),
        seed=seed,
    )


def default_session_runtime() -> SessionRuntime:
    doc = json.loads(
        _pkg_files("bcengine.data").joinpath("demo_session.json").read_text(encoding="utf-8")
    )
    return session_runtime_from_dict(doc)


def simulate(
    wav_path: str | Path,
    runtime: SessionRuntime,
    task_id: str | None = None,
) -> list[dict]:
    """Run the offline pipeline over a WAV at faster than real time.

    The timeline (events, score traces, decisions) is a deterministic
    function of the audio, config, and seed.
    """
    buf = read_wav(wav_path)
    session = runtime.build_session(task_id)
    rows: list[dict] = [
        {
            "type": "meta",
            "version": 1,
            "seed": runtime.seed,
            "task_id": task_id or runtime.default_task_id,
            "duration_ms": buf.duration_ms,
        }
    ]
    rows.extend(session.feed_buffer(buf))
    rows.extend(session.finish())
    return rows


def timeline_to_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
