"""Generate the demo clip audio and manifest under frontend/public/clips/.

Placeholder audio: each backchannel clip is a short tone figure (the real
deployment swaps in recorded speech clips with the same ids). The manifest
mirrors the server-side clip library plus per-task prompt clips.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from bcengine.audio_io import AudioBuffer, concat, silence, write_wav  # noqa: E402

OUT = REPO / "frontend" / "public" / "clips"


def blip(freqs: list[float], each_ms: int = 180, amplitude: float = 0.4) -> AudioBuffer:
    parts = []
    for f in freqs:
        n = 16000 * each_ms // 1000
        t = np.arange(n) / 16000
        env = np.minimum(1.0, np.minimum(t * 80, (n / 16000 - t) * 80))
        parts.append(AudioBuffer(amplitude * env * np.sin(2 * np.pi * f * t)))
        parts.append(silence(40))
    return concat(*parts)


CLIPS = [
    ("RBC", "rbc_00", [520.0], "hmm"),
    ("RBC", "rbc_01", [620.0], "oh"),
    ("RBC", "rbc_02", [440.0], "ah"),
    ("PBC", "pbc_00", [520.0, 660.0], "keep going"),
    ("PBC", "pbc_01", [480.0, 600.0, 720.0], "anything else"),
    ("PBC", "pbc_02", [600.0, 480.0], "take your time"),
]

PROMPTS = {
    "repeat": [330.0, 330.0, 330.0],
    "fluency": [392.0, 494.0, 587.0],
    "serial7": [440.0, 440.0, 554.0],
    "share": [349.0, 440.0, 523.0],
}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    manifest = {"clips": [], "prompts": {}}
    for category, clip_id, freqs, transcript in CLIPS:
        path = f"clips/{clip_id}.wav"
        write_wav(OUT / f"{clip_id}.wav", blip(freqs))
        manifest["clips"].append(
            {"category": category, "clip_id": clip_id, "path": path,
             "transcript": transcript}
        )
    for task_id, freqs in PROMPTS.items():
        path = f"clips/prompt_{task_id}.wav"
        write_wav(OUT / f"prompt_{task_id}.wav", blip(freqs, each_ms=260))
        manifest["prompts"][task_id] = path
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    print(f"wrote {len(CLIPS)} clips and {len(PROMPTS)} prompts to {OUT}")


if __name__ == "__main__":
    main()
