"""Regenerate the shipped demo data files in src/bcengine/data/.

Runs the package's own offline pipeline end to end on the planted
synthetic corpus (seed 202): distribution fitting for the serial-7 and
fluency tasks, stability selection plus classifier training for the
reactive model, and the participant classifier. The open-ended demo task
reuses the fluency fit (no separate distribution is fitted for it; the
engine raises the decision threshold instead). Verifies the two structural
properties the shipped files must satisfy before writing anything:
serial-7 pause-score dominance on [0, 10 s] and a proactive decision
inside the fixture WAV's silence under default weights.

Usage: python scripts/generate_demo_data.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "src" / "bcengine" / "data"
SEED = 202

sys.path.insert(0, str(REPO / "src"))

from bcengine import synthetic  # noqa: E402
from bcengine.cli import main as cli_main  # noqa: E402
from bcengine.scoring import load_params, pause_score, pbc_score, progress_score, save_params  # noqa: E402
from bcengine.scoring import PbcScoringConfig, TaskScoringParams  # noqa: E402


def run_cli(*argv: str) -> None:
    code = cli_main(list(argv))
    if code != 0:
        raise SystemExit(f"cli {' '.join(argv)} failed with {code}")


def main() -> None:
    tmp = Path(tempfile.mkdtemp(prefix="bcengine-demo-"))
    print(f"working in {tmp}")
    synthetic.generate_corpus(tmp, seed=SEED)

    run_cli("fit-distributions",
            "--pauses", str(tmp / "pauses.json"),
            "--onsets", str(tmp / "onsets.json"),
            "--out", str(tmp / "params.json"), "--report")
    tasks = load_params(tmp / "params.json")
    # The open-ended demo task reuses the fluency fit.
    tasks["share"] = TaskScoringParams(
        pause=tasks["fluency"].pause, progress=tasks["fluency"].progress
    )

    # Structural property 1: serial-7 pause score dominates fluency on [0, 10 s].
    for t in range(0, 10001, 100):
        s7 = pause_score(t, tasks["serial7"].pause)
        fl = pause_score(t, tasks["fluency"].pause)
        assert s7 >= fl, (t, s7, fl)

    # Structural property 2: the fixture (3 s tone + 12 s silence) fires at
    # least one proactive decision with default weights and threshold.
    cfg = PbcScoringConfig()
    fired = False
    for pause in range(700, 12000, 100):
        t = 3000 + pause
        score = pbc_score(
            pause_score(pause, tasks["fluency"].pause),
            progress_score(t, tasks["fluency"].progress),
            0.5,
            cfg,
        )
        if score > cfg.thr_pbc:
            fired = True
            print(f"fixture proactive decision at t={t} ms (score {score:.4f})")
            break
    assert fired, "no proactive decision in the fixture silence"

    save_params(DATA / "demo_params.json", tasks)

    run_cli("select-features", "--data", str(tmp / "cues.npz"),
            "--lam", "0.3", "--rounds", "100", "--threshold", "0.6",
            "--seed", str(SEED), "--out", str(tmp / "selected.json"))
    run_cli("train-rbc", "--data", str(tmp / "cues.npz"),
            "--selected", str(tmp / "selected.json"), "--seed", str(SEED),
            "--c", "10", "--out", str(DATA / "demo_rbc_model.json"),
            "--schema-out", str(DATA / "feature_schema.json"))
    run_cli("train-participant", "--data", str(tmp / "participants.npz"),
            "--seed", str(SEED), "--c", "10",
            "--out", str(DATA / "demo_participant_model.json"))

    rbc = json.loads((DATA / "demo_rbc_model.json").read_text())
    assert rbc["metadata"]["cv_metrics"]["accuracy"] >= 0.95, rbc["metadata"]["cv_metrics"]
    part = json.loads((DATA / "demo_participant_model.json").read_text())
    assert part["metadata"]["cv_metrics"]["accuracy"] >= 0.95, part["metadata"]["cv_metrics"]

    print("demo data written to", DATA)


if __name__ == "__main__":
    main()
