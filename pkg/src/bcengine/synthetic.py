"""Synthetic corpus generation with planted parameters.

Everything the offline pipeline consumes can be generated here at desk
scale: word-aligned transcripts with codable backchannels, pause/onset
samples drawn from known distributions, acoustically separable cue
utterances (falling-pitch positives vs flat/rising negatives), participant
trial audio split by speaking level, and a tone-plus-silence fixture WAV.
truth.json records the planted values and the recovery tolerances the
round-trip is expected to meet.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, concat, silence, tone, write_wav
from .coder import Speaker, TranscriptWord
from .features import frame_lld, schema_id, utterance_functionals
from .audio_io import frame_iter
from .scoring import LogNormalParams, SkewNormalParams, sample_lognormal, sample_skewnormal

PLANTED_PAUSES = {
    "serial7": LogNormalParams(mu=0.0, sigma=700.0, s=0.9, task_id="serial7"),
    "fluency": LogNormalParams(mu=0.0, sigma=1800.0, s=0.9, task_id="fluency"),
}
PLANTED_ONSETS = {
    "serial7": SkewNormalParams(xi=18000.0, omega=16000.0, a=2.5,
                                task_duration_ms=60000, task_id="serial7"),
    "fluency": SkewNormalParams(xi=12000.0, omega=18000.0, a=2.5,
                                task_duration_ms=60000, task_id="fluency"),
}

RECOVERY_TOLERANCES = {
    "lognormal_sigma_pct": 5.0,
    "lognormal_s_pct": 5.0,
    "skewnormal_xi_pct": 15.0,
    "skewnormal_omega_pct": 15.0,
    "skewnormal_a_pct": 20.0,
    "note": "onset samples are rejection-sampled into [0, duration]; the "
            "planted values keep the out-of-range mass near 1%, and the "
            "skew-normal tolerances absorb the remaining truncation bias.",
}


def chirp(f_start: float, f_end: float, duration_ms: int, amplitude: float,
          rate: int = 16000) -> AudioBuffer:
    """Phase-continuous linear chirp."""
    n = rate * duration_ms // 1000
    f = np.linspace(f_start, f_end, n)
    phase = 2 * np.pi * np.cumsum(f) / rate
    return AudioBuffer(amplitude * np.sin(phase), rate)


def cue_utterance(rng: np.random.Generator, positive: bool) -> AudioBuffer:
    """A synthetic speaker utterance; positives carry a falling pitch contour.

    Falling final pitch is the classic invitation cue, so the planted
    separation lives where the feature pipeline should find it.
    """
    duration = int(rng.integers(400, 1200))
    f0 = float(rng.uniform(150, 260))
    amplitude = float(rng.uniform(0.3, 0.7))
    if positive:
        f_end = f0 * float(rng.uniform(0.55, 0.75))
    else:
        f_end = f0 * float(rng.uniform(1.0, 1.25))
    return chirp(f0, f_end, duration, amplitude)


def utterance_features(buf: AudioBuffer) -> np.ndarray:
    llds = [frame_lld(f) for f in frame_iter(buf)]
    return utterance_functionals(llds, duration_ms=buf.duration_ms).values


def generate_cues(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    half = n // 2
    X, y = [], []
    for i in range(n):
        positive = i < half
        X.append(utterance_features(cue_utterance(rng, positive)))
        y.append(1 if positive else -1)
    order = rng.permutation(n)
    return np.array(X)[order], np.array(y)[order]


def participant_trial(rng: np.random.Generator, proactive_class: bool) -> AudioBuffer:
    """Trial-task speech; the more-proactive class speaks quietly."""
    duration = int(rng.integers(800, 1600))
    f0 = float(rng.uniform(140, 240))
    amplitude = float(rng.uniform(0.08, 0.2)) if proactive_class else float(rng.uniform(0.5, 0.9))
    return chirp(f0, f0 * float(rng.uniform(0.9, 1.1)), duration, amplitude)


def generate_participants(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    half = n // 2
    X, y = [], []
    for i in range(n):
        positive = i < half
        X.append(utterance_features(participant_trial(rng, positive)))
        y.append(1 if positive else -1)
    order = rng.permutation(n)
    return np.array(X)[order], np.array(y)[order]


def generate_transcripts(
    rng: np.random.Generator,
    rbc_words: list[str],
    pbc_phrases: list[str],
    n_participants: int = 6,
    tasks: tuple[str, ...] = ("serial7", "fluency"),
) -> list[TranscriptWord]:
    """Conversations with plantable reactive/proactive codes.

    Each participant answer may be followed by a reactive word, a proactive
    phrase, a too-close reactive (gap < 1000 ms, must code 0), or nothing.
    """
    words: list[TranscriptWord] = []
    uid = 0

    def add_utterance(speaker: Speaker, tokens: list[str], start: int,
                      pid: str, tid: str) -> int:
        nonlocal uid
        uid += 1
        t = start
        for tok in tokens:
            dur = int(rng.integers(120, 360))
            words.append(
                TranscriptWord(speaker, tok, t, t + dur, f"u{uid:05d}", pid, tid)
            )
            t += dur + int(rng.integers(10, 60))
        return t

    for p in range(n_participants):
        pid = f"p{p:03d}"
        for tid in tasks:
            t = int(rng.integers(0, 2000))
            for _ in range(int(rng.integers(10, 18))):
                n_tokens = int(rng.integers(1, 6))
                tokens = [f"word{int(rng.integers(100))}" for _ in range(n_tokens)]
                t = add_utterance(Speaker.PARTICIPANT, tokens, t, pid, tid)
                roll = rng.random()
                if roll < 0.35:
                    gap = int(rng.integers(1100, 2500))
                    t = add_utterance(Speaker.ASSESSOR,
                                      [str(rng.choice(rbc_words))], t + gap, pid, tid)
                elif roll < 0.55:
                    gap = int(rng.integers(1100, 2500))
                    phrase = str(rng.choice(pbc_phrases)).split()
                    t = add_utterance(Speaker.ASSESSOR, phrase, t + gap, pid, tid)
                elif roll < 0.65:
                    # Too close: must auto-code 0.
                    gap = int(rng.integers(100, 800))
                    t = add_utterance(Speaker.ASSESSOR,
                                      [str(rng.choice(rbc_words))], t + gap, pid, tid)
                t += int(rng.integers(1200, 4000))
    return words


def fixture_wav() -> AudioBuffer:
    """3 s of 200 Hz tone followed by 12 s of silence."""
    return concat(tone(200.0, 3000, amplitude=0.5), silence(12000))


def generate_corpus(
    out_dir: str | Path,
    seed: int,
    n_cues: int = 400,
    n_participants_audio: int = 120,
    n_pauses: int = 5000,
    n_onsets: int = 5000,
    n_conversations: int = 6,
) -> dict:
    """Write the full synthetic corpus; returns the truth record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    from .coder import default_lexicon

    lex = default_lexicon()
    (out / "lexicon.json").write_text(json.dumps(lex.to_dict(), indent=2), encoding="utf-8")

    words = generate_transcripts(
        rng, sorted(lex.rbc_words), [" ".join(p) for p in lex.pbc_phrases],
        n_participants=n_conversations,
    )
    with open(out / "transcripts.jsonl", "w", encoding="utf-8") as fh:
        for w in words:
            fh.write(json.dumps({
                "speaker": w.speaker.value, "text": w.text,
                "start_ms": w.start_ms, "end_ms": w.end_ms,
                "utterance_id": w.utterance_id,
                "participant_id": w.participant_id, "task_id": w.task_id,
            }) + "\n")

    pauses = {
        tid: sample_lognormal(p, n_pauses, rng).tolist()
        for tid, p in PLANTED_PAUSES.items()
    }
    (out / "pauses.json").write_text(json.dumps(pauses), encoding="utf-8")

    onsets = {}
    for tid, p in PLANTED_ONSETS.items():
        samples: list[float] = []
        while len(samples) < n_onsets:
            draw = sample_skewnormal(p, n_onsets, rng)
            keep = draw[(draw >= 0) & (draw < p.task_duration_ms)]
            samples.extend(keep.tolist())
        onsets[tid] = {
            "duration_ms": p.task_duration_ms,
            "samples": samples[:n_onsets],
        }
    (out / "onsets.json").write_text(json.dumps(onsets), encoding="utf-8")

    X, y = generate_cues(rng, n_cues)
    np.savez(out / "cues.npz", X=X, y=y, schema_id=np.array(schema_id()))
    Xp, yp = generate_participants(rng, n_participants_audio)
    np.savez(out / "participants.npz", X=Xp, y=yp, schema_id=np.array(schema_id()))

    write_wav(out / "fixture.wav", fixture_wav())

    truth = {
        "seed": seed,
        "pauses": {tid: {"mu": p.mu, "sigma": p.sigma, "s": p.s}
                   for tid, p in PLANTED_PAUSES.items()},
        "onsets": {tid: {"xi": p.xi, "omega": p.omega, "a": p.a,
                         "duration_ms": p.task_duration_ms}
                   for tid, p in PLANTED_ONSETS.items()},
        "cue_separation": "positive cues carry falling pitch contours",
        "participant_separation": "more-proactive class speaks at low amplitude",
        "tolerances": RECOVERY_TOLERANCES,
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2), encoding="utf-8")
    return truth
