import json

import numpy as np
import pytest

from bcengine.cli import main
from bcengine.scoring import load_params


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    code = main([
        "gen-synthetic", "--out", str(out), "--seed", "7",
        "--n-cues", "160", "--n-participants", "60",
        "--n-pauses", "3000", "--n-onsets", "3000", "--n-conversations", "4",
    ])
    assert code == 0
    return out


def test_gen_synthetic_outputs(corpus):
    for name in ("lexicon.json", "transcripts.jsonl", "pauses.json", "onsets.json",
                 "cues.npz", "participants.npz", "fixture.wav", "truth.json"):
        assert (corpus / name).exists(), name


def test_fit_distributions_round_trip(corpus, tmp_path):
    out = tmp_path / "params.json"
    code = main([
        "fit-distributions", "--pauses", str(corpus / "pauses.json"),
        "--onsets", str(corpus / "onsets.json"), "--out", str(out), "--report",
    ])
    assert code == 0
    truth = json.loads((corpus / "truth.json").read_text())
    tol = truth["tolerances"]
    fitted = load_params(out)
    for tid, planted in truth["pauses"].items():
        got = fitted[tid].pause
        assert got.sigma == pytest.approx(
            planted["sigma"], rel=tol["lognormal_sigma_pct"] / 100
        )
        assert got.s == pytest.approx(planted["s"], rel=tol["lognormal_s_pct"] / 100)
    for tid, planted in truth["onsets"].items():
        got = fitted[tid].progress
        assert got.xi == pytest.approx(planted["xi"], rel=tol["skewnormal_xi_pct"] / 100)
        assert got.omega == pytest.approx(
            planted["omega"], rel=tol["skewnormal_omega_pct"] / 100
        )
        assert got.a == pytest.approx(planted["a"], rel=tol["skewnormal_a_pct"] / 100)


def test_code_transcripts_and_build_dataset(corpus, tmp_path):
    coded = tmp_path / "coded.jsonl"
    code = main([
        "code-transcripts", "--transcripts", str(corpus / "transcripts.jsonl"),
        "--lexicon", str(corpus / "lexicon.json"), "--out", str(coded),
    ])
    assert code == 0
    rows = [json.loads(l) for l in coded.read_text().splitlines()]
    codes = {r["code"] for r in rows}
    assert {0, 1, 2} <= codes

    cues = tmp_path / "cues.jsonl"
    code = main([
        "build-dataset", "--transcripts", str(corpus / "transcripts.jsonl"),
        "--lexicon", str(corpus / "lexicon.json"), "--seed", "3", "--out", str(cues),
    ])
    assert code == 0
    cue_rows = [json.loads(l) for l in cues.read_text().splitlines()]
    pos = sum(1 for r in cue_rows if r["label"] == "rbc_cue")
    assert pos * 2 == len(cue_rows)
    # Determinism: same seed gives byte-identical output.
    cues2 = tmp_path / "cues2.jsonl"
    main([
        "build-dataset", "--transcripts", str(corpus / "transcripts.jsonl"),
        "--lexicon", str(corpus / "lexicon.json"), "--seed", "3", "--out", str(cues2),
    ])
    assert cues.read_bytes() == cues2.read_bytes()


def test_select_train_evaluate(corpus, tmp_path, capsys):
    sel = tmp_path / "sel.json"
    code = main([
        "select-features", "--data", str(corpus / "cues.npz"),
        "--lam", "0.3", "--rounds", "40", "--threshold", "0.6",
        "--seed", "1", "--out", str(sel),
    ])
    assert code == 0
    selected = json.loads(sel.read_text())["selected"]
    assert len(selected) >= 1

    model = tmp_path / "model.json"
    code = main([
        "train-rbc", "--data", str(corpus / "cues.npz"), "--selected", str(sel),
        "--seed", "1", "--c", "10", "--out", str(model),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    acc = float([tok for tok in printed.split() if tok.startswith("cv_accuracy=")][0]
                .split("=")[1])
    assert acc >= 0.95

    code = main(["evaluate", "--model", str(model), "--data", str(corpus / "cues.npz")])
    assert code == 0
    metrics = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert metrics["accuracy"] >= 0.95


def test_train_participant(corpus, tmp_path, capsys):
    model = tmp_path / "pmodel.json"
    code = main([
        "train-participant", "--data", str(corpus / "participants.npz"),
        "--seed", "1", "--c", "10", "--out", str(model),
    ])
    assert code == 0
    doc = json.loads(model.read_text())
    assert doc["platt"] is not None
    assert doc["metadata"]["cv_metrics"]["accuracy"] >= 0.95


def test_extract_features(corpus, tmp_path):
    out = tmp_path / "features.jsonl"
    code = main(["extract-features", "--wav", str(corpus / "fixture.wav"),
                 "--out", str(out)])
    assert code == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(rows) == 1  # the single tone utterance
    assert len(rows[0]["values"]) == 182


def test_simulate_deterministic_files(corpus, tmp_path):
    out1 = tmp_path / "t1.jsonl"
    out2 = tmp_path / "t2.jsonl"
    for out in (out1, out2):
        code = main(["simulate", "--wav", str(corpus / "fixture.wav"),
                     "--seed", "1", "--out", str(out)])
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()
    rows = [json.loads(l) for l in out1.read_text().splitlines()]
    assert rows[0]["type"] == "meta"
    assert any(r["type"] == "decision" for r in rows)


def test_tune_trace(corpus, tmp_path):
    params = tmp_path / "params.json"
    main(["fit-distributions", "--pauses", str(corpus / "pauses.json"),
          "--onsets", str(corpus / "onsets.json"), "--out", str(params)])
    trace = tmp_path / "trace.csv"
    code = main(["tune", "--params", str(params), "--task", "fluency",
                 "--weights", "0.5,0.3,0.2", "--thr", "0.75",
                 "--participant-score", "0.5", "--utterance-end-ms", "3000",
                 "--out", str(trace)])
    assert code == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "t_ms,s_pau,s_pg,s_pt,score,decision"
    assert any(line.endswith(",1") for line in lines[1:])


def test_exit_codes(tmp_path):
    assert main(["simulate", "--wav", str(tmp_path / "missing.wav"),
                 "--out", str(tmp_path / "o.jsonl")]) == 3
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not audio")
    assert main(["extract-features", "--wav", str(bad),
                 "--out", str(tmp_path / "f.jsonl")]) == 3
    # Single-class training data is a model error.
    X = np.random.default_rng(0).normal(size=(20, 182))
    y = np.ones(20)
    npz = tmp_path / "one.npz"
    np.savez(npz, X=X, y=y, schema_id=np.array("llf-x"))
    assert main(["train-rbc", "--data", str(npz), "--out",
                 str(tmp_path / "m.json")]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
