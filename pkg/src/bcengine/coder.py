"""Rubric auto-coding of word-aligned transcripts and training-cue assembly.

An assessor utterance is coded reactive (1) when it is exactly one token
from the reactive word list and sits at least 1000 ms clear of the
assessor's previous and next utterances; proactive (2) when it has at most
8 words, contains a proactive phrase and clears the same gaps. Reactive
takes precedence. Training cues pair participant utterances that
immediately precede reactive codes with an equal number of negatives
sampled per (participant, task) cell.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MIN_GAP_MS = 1000
MAX_PBC_WORDS = 8

CODE_NONE = 0
CODE_RBC = 1
CODE_PBC = 2


class EmptyUtterance(Exception):
    pass


class LengthMismatch(Exception):
    pass


class InsufficientNegatives(Warning):
    """A (participant, task) cell lacks enough never-backchanneled
    utterances; sampling proceeded with replacement."""


class Speaker(str, Enum):
    ASSESSOR = "assessor"
    PARTICIPANT = "participant"


@dataclass(frozen=True)
class TranscriptWord:
    speaker: Speaker
    text: str
    start_ms: int
    end_ms: int
    utterance_id: str
    participant_id: str
    task_id: str

    def __post_init__(self) -> None:
        if self.start_ms >= self.end_ms:
            raise ValueError(f"word {self.utterance_id}: start_ms must be < end_ms")


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    speaker: Speaker
    tokens: tuple[str, ...]
    start_ms: int
    end_ms: int
    participant_id: str
    task_id: str


@dataclass(frozen=True)
class Lexicon:
    rbc_words: frozenset[str]
    pbc_phrases: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.rbc_words or not self.pbc_phrases:
            raise ValueError("lexicon must be non-empty")
        for w in self.rbc_words:
            if " " in w:
                raise ValueError(f"reactive entry must be a single token: {w!r}")
        for p in self.pbc_phrases:
            if not 1 <= len(p) <= 3:
                raise ValueError(f"proactive phrase must be 1..3 words: {p!r}")

    @staticmethod
    def from_dict(d: dict) -> "Lexicon":
        return Lexicon(
            rbc_words=frozenset(w.lower() for w in d["rbc_words"]),
            pbc_phrases=tuple(tuple(p.lower().split()) for p in d["pbc_phrases"]),
        )

    def to_dict(self) -> dict:
        return {
            "rbc_words": sorted(self.rbc_words),
            "pbc_phrases": [" ".join(p) for p in self.pbc_phrases],
        }


def load_lexicon(path: str | Path) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        return Lexicon.from_dict(json.load(fh))


def default_lexicon() -> Lexicon:
    """Shipped romanized/English placeholder lists (runtime-replaceable)."""
    from importlib.resources import files

    data = files("bcengine.data").joinpath("lexicon.json").read_text(encoding="utf-8")
    return Lexicon.from_dict(json.loads(data))


def code_utterance(
    tokens: Sequence[str],
    gap_prev_ms: int | None,
    gap_next_ms: int | None,
    lex: Lexicon,
) -> int:
    """Code one assessor utterance given gaps to its assessor neighbours.

    A None gap means there is no adjacent utterance on that side, which
    trivially satisfies the 1000 ms rule.
    """
    if not tokens:
        raise EmptyUtterance("utterance has no tokens")
    toks = [t.lower() for t in tokens]
    gaps_ok = (gap_prev_ms is None or gap_prev_ms >= MIN_GAP_MS) and (
        gap_next_ms is None or gap_next_ms >= MIN_GAP_MS
    )
    if not gaps_ok:
        return CODE_NONE
    if len(toks) == 1 and toks[0] in lex.rbc_words:
        return CODE_RBC
    if len(toks) <= MAX_PBC_WORDS and _contains_phrase(toks, lex.pbc_phrases):
        return CODE_PBC
    return CODE_NONE


def _contains_phrase(tokens: list[str], phrases: tuple[tuple[str, ...], ...]) -> bool:
    for phrase in phrases:
        k = len(phrase)
        for i in range(len(tokens) - k + 1):
            if tuple(tokens[i : i + k]) == phrase:
                return True
    return False


def group_utterances(words: Iterable[TranscriptWord]) -> list[Utterance]:
    """Fold word rows into time-ordered utterances keyed by utterance_id."""
    by_id: dict[str, list[TranscriptWord]] = {}
    for w in words:
        by_id.setdefault(w.utterance_id, []).append(w)
    utts = []
    for uid, ws in by_id.items():
        ws = sorted(ws, key=lambda w: w.start_ms)
        speakers = {w.speaker for w in ws}
        if len(speakers) != 1:
            raise ValueError(f"utterance {uid} mixes speakers")
        utts.append(
            Utterance(
                utterance_id=uid,
                speaker=ws[0].speaker,
                tokens=tuple(w.text for w in ws),
                start_ms=ws[0].start_ms,
                end_ms=ws[-1].end_ms,
                participant_id=ws[0].participant_id,
                task_id=ws[0].task_id,
            )
        )
    utts.sort(key=lambda u: (u.participant_id, u.start_ms))
    return utts


def code_transcripts(words: Iterable[TranscriptWord], lex: Lexicon) -> dict[str, int]:
    """Auto-code every assessor utterance in a corpus.

    Gaps are measured assessor-to-assessor within one participant's
    conversation: end of previous assessor utterance to start of the
    candidate, and end of the candidate to start of the next.
    """
    utts = group_utterances(words)
    codes: dict[str, int] = {}
    by_participant: dict[str, list[Utterance]] = {}
    for u in utts:
        by_participant.setdefault(u.participant_id, []).append(u)
    for conv in by_participant.values():
        assessor = [u for u in conv if u.speaker is Speaker.ASSESSOR]
        for i, u in enumerate(assessor):
            gap_prev = u.start_ms - assessor[i - 1].end_ms if i > 0 else None
            gap_next = assessor[i + 1].start_ms - u.end_ms if i + 1 < len(assessor) else None
            codes[u.utterance_id] = code_utterance(u.tokens, gap_prev, gap_next, lex)
    return codes


@dataclass(frozen=True)
class Cue:
    utterance_id: str
    participant_id: str
    task_id: str
    label: str  # "rbc_cue" | "non_rbc_cue"


def build_training_set(
    words: Iterable[TranscriptWord], lex: Lexicon, seed: int
) -> list[Cue]:
    """Assemble balanced reactive-cue training pairs.

    Positives are participant utterances immediately preceding a reactive
    code; for each (participant, task) cell with n positives, n negatives
    are drawn (seeded, without replacement) from that cell's participant
    utterances not followed by any backchannel. Cells short of negatives
    are logged and sampled with replacement.
    """
    utts = group_utterances(words)
    codes = code_transcripts(words, lex)
    rng = np.random.default_rng(seed)

    positives: list[Utterance] = []
    backchanneled: set[str] = set()
    by_participant: dict[str, list[Utterance]] = {}
    for u in utts:
        by_participant.setdefault(u.participant_id, []).append(u)
    for conv in by_participant.values():
        conv = sorted(conv, key=lambda u: u.start_ms)
        for i, u in enumerate(conv):
            if u.speaker is not Speaker.ASSESSOR or codes.get(u.utterance_id, 0) == 0:
                continue
            prev = next(
                (p for p in reversed(conv[:i]) if p.speaker is Speaker.PARTICIPANT), None
            )
            if prev is None:
                continue
            backchanneled.add(prev.utterance_id)
            if codes[u.utterance_id] == CODE_RBC:
                positives.append(prev)

    cells: dict[tuple[str, str], list[Utterance]] = {}
    for p in positives:
        cells.setdefault((p.participant_id, p.task_id), []).append(p)

    cues: list[Cue] = []
    for (pid, tid) in sorted(cells):
        pos = cells[(pid, tid)]
        candidates = [
            u
            for u in by_participant[pid]
            if u.speaker is Speaker.PARTICIPANT
            and u.task_id == tid
            and u.utterance_id not in backchanneled
        ]
        candidates.sort(key=lambda u: u.utterance_id)
        n = len(pos)
        if len(candidates) >= n:
            picks = rng.choice(len(candidates), size=n, replace=False)
        else:
            report = (
                f"insufficient negatives for participant={pid} task={tid} "
                f"({len(candidates)} < {n}); sampling with replacement"
            )
            warnings.warn(InsufficientNegatives(report))
            logger.warning(report)
            picks = rng.choice(len(candidates), size=n, replace=True)
        for u in pos:
            cues.append(Cue(u.utterance_id, pid, tid, "rbc_cue"))
        for k in picks:
            u = candidates[int(k)]
            cues.append(Cue(u.utterance_id, pid, tid, "non_rbc_cue"))
    return cues


def cohen_kappa(codes_a: Sequence[int], codes_b: Sequence[int]) -> float:
    """Chance-corrected agreement over the 3-code scheme."""
    if len(codes_a) != len(codes_b) or len(codes_a) == 0:
        raise LengthMismatch(f"{len(codes_a)} vs {len(codes_b)}")
    n = len(codes_a)
    p_o = sum(a == b for a, b in zip(codes_a, codes_b)) / n
    cats = set(codes_a) | set(codes_b)
    p_e = sum(
        (sum(a == c for a in codes_a) / n) * (sum(b == c for b in codes_b) / n)
        for c in cats
    )
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def read_transcript_jsonl(path: str | Path) -> list[TranscriptWord]:
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            words.append(
                TranscriptWord(
                    speaker=Speaker(d["speaker"]),
                    text=d["text"],
                    start_ms=d["start_ms"],
                    end_ms=d["end_ms"],
                    utterance_id=d["utterance_id"],
                    participant_id=d["participant_id"],
                    task_id=d["task_id"],
                )
            )
    return words


def write_coded_jsonl(path: str | Path, codes: dict[str, int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for uid in sorted(codes):
            fh.write(json.dumps({"utterance_id": uid, "code": codes[uid]}) + "\n")
