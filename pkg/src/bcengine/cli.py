"""Batch CLI for the offline workflow plus the streaming service.

Exit codes: 0 ok, 2 usage, 3 data error, 4 model error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import audio_io, coder, engine, features, models, scoring, synthetic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MODEL = 4

_DATA_ERRORS = (
    FileNotFoundError,
    json.JSONDecodeError,
    KeyError,
    audio_io.NotWav,
    audio_io.UnsupportedFormat,
    audio_io.InvalidWindow,
    coder.EmptyUtterance,
    coder.LengthMismatch,
    scoring.TooFewSamples,
    scoring.DegenerateSamples,
    models.LengthMismatch,
    engine.UnknownTask,
    ValueError,
)
_MODEL_ERRORS = (
    models.SingleClass,
    models.DidNotConverge,
    models.SchemaMismatch,
    scoring.FitDiverged,
    scoring.WeightsNotNormalized,
    engine.ModelMissing,
)


def _load_npz(path: str) -> tuple[np.ndarray, np.ndarray, str]:
    data = np.load(path)
    return data["X"], data["y"], str(data["schema_id"])


def cmd_gen_synthetic(args) -> int:
    truth = synthetic.generate_corpus(
        args.out,
        seed=args.seed,
        n_cues=args.n_cues,
        n_participants_audio=args.n_participants,
        n_pauses=args.n_pauses,
        n_onsets=args.n_onsets,
        n_conversations=args.n_conversations,
    )
    print(json.dumps(truth["pauses"]))
    print(f"wrote synthetic corpus to {args.out}")
    return EXIT_OK


def cmd_code_transcripts(args) -> int:
    lex = coder.load_lexicon(args.lexicon) if args.lexicon else coder.default_lexicon()
    words = coder.read_transcript_jsonl(args.transcripts)
    codes = coder.code_transcripts(words, lex)
    coder.write_coded_jsonl(args.out, codes)
    counts = {c: sum(1 for v in codes.values() if v == c) for c in (0, 1, 2)}
    print(f"coded {len(codes)} assessor utterances: {counts}")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    lex = coder.load_lexicon(args.lexicon) if args.lexicon else coder.default_lexicon()
    words = coder.read_transcript_jsonl(args.transcripts)
    cues = coder.build_training_set(words, lex, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for c in cues:
            fh.write(json.dumps({
                "utterance_id": c.utterance_id,
                "participant_id": c.participant_id,
                "task_id": c.task_id,
                "label": c.label,
            }) + "\n")
    n_pos = sum(1 for c in cues if c.label == "rbc_cue")
    print(f"wrote {len(cues)} cues ({n_pos} positive) to {args.out}")
    return EXIT_OK


def cmd_extract_features(args) -> int:
    buf = audio_io.read_wav(args.wav)
    cfg = engine.SidConfig()
    sid = engine.SidState(cfg)
    llds = {}
    spans = []
    for frame in audio_io.frame_iter(buf):
        voiced = engine.vad_classify(frame, cfg)
        if voiced or sid.in_utterance or sid.voiced_run > 0:
            llds[frame.start_ms] = features.frame_lld(frame)
        for ev in sid.step(voiced, frame.start_ms):
            if ev.kind is engine.EventKind.UTTERANCE_END:
                spans.append(ev.utterance_span)
    for ev in sid.flush():
        spans.append(ev.utterance_span)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, span in enumerate(spans):
            utt = [llds[t] for t in sorted(llds) if span[0] <= t < span[1]]
            fv = features.utterance_functionals(utt, duration_ms=span[1] - span[0])
            fh.write(json.dumps({
                "index": i, "span": list(span),
                "schema_id": fv.schema_id, "values": fv.values.tolist(),
            }) + "\n")
    print(f"extracted {len(spans)} utterances to {args.out}")
    return EXIT_OK


def cmd_select_features(args) -> int:
    X, y, sid_ = _load_npz(args.data)
    cfg = models.LassoConfig(
        lam=args.lam, rounds=args.rounds, select_threshold=args.threshold
    )
    selected, freqs = models.stability_select(X, y.astype(np.float64), cfg, seed=args.seed)
    Path(args.out).write_text(json.dumps({
        "schema_id": sid_,
        "selected": selected.tolist(),
        "frequencies": freqs.tolist(),
        "config": {"lam": args.lam, "rounds": args.rounds, "threshold": args.threshold,
                   "seed": args.seed},
    }, indent=2), encoding="utf-8")
    names = features.schema_names()
    shown = [names[j] if sid_ == features.schema_id() and j < len(names) else str(j)
             for j in selected]
    print(f"selected {len(selected)} features: {shown}")
    return EXIT_OK


def _train_classifier(args, kind: str) -> int:
    X, y, sid_ = _load_npz(args.data)
    indices = None
    if getattr(args, "selected", None):
        sel = json.loads(Path(args.selected).read_text(encoding="utf-8"))
        indices = np.array(sel["selected"], dtype=np.int64)
        if len(indices) == 0:
            print("selection file has no features; using all", file=sys.stderr)
            indices = None
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(y))
    folds = np.array_split(order, args.folds)
    metrics_acc = []
    for k in range(args.folds):
        test_idx = folds[k]
        train_idx = np.concatenate([folds[j] for j in range(args.folds) if j != k])
        m = models.svm_train(X[train_idx], y[train_idx], c=args.c, epochs=args.epochs,
                             seed=args.seed, feature_indices=indices, schema_id=sid_)
        pred = [models.svm_predict(m, X[i]) for i in test_idx]
        metrics_acc.append(models.eval_metrics(pred, y[test_idx].astype(int).tolist()))
    cv = {key: float(np.mean([m[key] for m in metrics_acc])) for key in metrics_acc[0]}

    final = models.svm_train(X, y, c=args.c, epochs=args.epochs, seed=args.seed,
                             feature_indices=indices, schema_id=sid_)
    ds = np.array([models.svm_decision(final, X[i]) for i in range(len(y))])
    platt = models.platt_fit(ds, (y == 1).astype(int))
    final.metadata["cv_folds"] = args.folds
    final.metadata["cv_metrics"] = cv
    final.metadata["kind"] = kind
    models.save_model(args.out, final, platt)
    if getattr(args, "schema_out", None):
        Path(args.schema_out).write_text(features.schema_json(), encoding="utf-8")
    print(
        f"cv_accuracy={cv['accuracy']:.3f} cv_precision={cv['precision']:.3f} "
        f"cv_recall={cv['recall']:.3f} cv_f1={cv['f1']:.3f}"
    )
    print(f"wrote model to {args.out}")
    return EXIT_OK


def cmd_train_rbc(args) -> int:
    return _train_classifier(args, kind="rbc")


def cmd_train_participant(args) -> int:
    return _train_classifier(args, kind="participant")


def cmd_fit_distributions(args) -> int:
    pauses = json.loads(Path(args.pauses).read_text(encoding="utf-8"))
    onsets = json.loads(Path(args.onsets).read_text(encoding="utf-8"))
    tasks = {}
    for tid in sorted(set(pauses) | set(onsets)):
        if tid not in pauses or tid not in onsets:
            raise ValueError(f"task {tid} needs both pause and onset samples")
        pause_fit = scoring.fit_lognormal(pauses[tid], task_id=tid)
        onset_fit = scoring.fit_skewnormal(
            onsets[tid]["samples"], duration_ms=onsets[tid]["duration_ms"], task_id=tid
        )
        tasks[tid] = scoring.TaskScoringParams(pause=pause_fit, progress=onset_fit)
        if args.report:
            samples = np.asarray(pauses[tid], dtype=np.float64)
            qs = np.quantile(samples, [0.25, 0.5, 0.75])
            model_q = [pause_fit.cdf(float(q)) for q in qs]
            print(f"[{tid}] pause mu={pause_fit.mu:.1f} sigma={pause_fit.sigma:.1f} "
                  f"s={pause_fit.s:.3f} cdf@quartiles={np.round(model_q, 3).tolist()}")
            print(f"[{tid}] onset xi={onset_fit.xi:.0f} omega={onset_fit.omega:.0f} "
                  f"a={onset_fit.a:.2f} k={onset_fit.k:.1f}")
    scoring.save_params(args.out, tasks)
    print(f"wrote fitted parameters for {sorted(tasks)} to {args.out}")
    return EXIT_OK


def cmd_tune(args) -> int:
    tasks = scoring.load_params(args.params)
    if args.task not in tasks:
        raise engine.UnknownTask(args.task)
    tp = tasks[args.task]
    w = [float(x) for x in args.weights.split(",")]
    cfg = scoring.PbcScoringConfig(
        weight_pause=w[0], weight_progress=w[1], weight_participant=w[2],
        thr_pbc=args.thr, task_params=tasks,
    )
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        out.write("t_ms,s_pau,s_pg,s_pt,score,decision\n")
        duration = tp.progress.task_duration_ms
        for t in range(args.utterance_end_ms, duration + 1, args.step_ms):
            s_pau = scoring.pause_score(t - args.utterance_end_ms, tp.pause)
            s_pg = scoring.progress_score(t, tp.progress)
            s_pt = args.participant_score
            score = scoring.pbc_score(s_pau, s_pg, s_pt, cfg)
            fire = scoring.pbc_decision(score, cfg)
            out.write(f"{t},{s_pau:.6f},{s_pg:.6f},{s_pt:.6f},{score:.6f},{int(fire)}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    runtime = (engine.default_session_runtime() if args.config in ("", "default")
               else engine.load_session_config(args.config))
    if args.seed is not None:
        runtime.seed = args.seed
        runtime.engine_cfg = engine.EngineConfig(
            cooldown_ms=runtime.engine_cfg.cooldown_ms,
            pbc_reset_pause=runtime.engine_cfg.pbc_reset_pause,
            rbc_min_utterance_ms=runtime.engine_cfg.rbc_min_utterance_ms,
            rbc_enabled=runtime.engine_cfg.rbc_enabled,
            seed=args.seed,
        )
    rows = engine.simulate(args.wav, runtime, task_id=args.task or None)
    text = engine.timeline_to_jsonl(rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    n_dec = sum(1 for r in rows if r["type"] == "decision")
    print(f"simulated {len(rows)} timeline rows, {n_dec} decisions", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, _ = models.load_model(args.model)
    X, y, _sid = _load_npz(args.data)
    pred = [models.svm_predict(model, X[i]) for i in range(len(y))]
    m = models.eval_metrics(pred, y.astype(int).tolist())
    print(json.dumps(m, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    def loader(ref: str):
        if args.config not in ("", "default"):
            return engine.load_session_config(args.config)
        from .service import _default_runtime_loader

        return _default_runtime_loader(ref)

    from .service import run_servers

    tcp = args.tcp or os.environ.get("BC_ENGINE_ADDR") or None
    if not tcp and not args.http:
        tcp = "127.0.0.1:8940"
    try:
        asyncio.run(run_servers(tcp, args.http or None, loader, args.static_dir or None))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bcengine",
                                 description="Backchanneling engine: offline workflow and service")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a planted synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-cues", type=int, default=400)
    p.add_argument("--n-participants", type=int, default=120)
    p.add_argument("--n-pauses", type=int, default=5000)
    p.add_argument("--n-onsets", type=int, default=5000)
    p.add_argument("--n-conversations", type=int, default=6)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("code-transcripts", help="auto-code assessor utterances")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_code_transcripts)

    p = sub.add_parser("build-dataset", help="balanced reactive-cue training pairs")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("extract-features", help="utterance functionals from a WAV")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("select-features", help="stability selection over a cue matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--lam", type=float, default=0.3)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select_features)

    for name, fn in (("train-rbc", cmd_train_rbc), ("train-participant", cmd_train_participant)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} classifier")
        p.add_argument("--data", required=True)
        p.add_argument("--selected")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--c", type=float, default=1.0)
        p.add_argument("--epochs", type=int, default=200)
        p.add_argument("--folds", type=int, default=5)
        p.add_argument("--out", required=True)
        p.add_argument("--schema-out")
        p.set_defaults(func=fn)

    p = sub.add_parser("fit-distributions", help="fit pause/onset distributions per task")
    p.add_argument("--pauses", required=True)
    p.add_argument("--onsets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_fit_distributions)

    p = sub.add_parser("tune", help="score trace CSV for weight/threshold tuning")
    p.add_argument("--params", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--weights", default="0.5,0.3,0.2")
    p.add_argument("--thr", type=float, default=0.75)
    p.add_argument("--participant-score", type=float, default=0.5)
    p.add_argument("--utterance-end-ms", type=int, default=0)
    p.add_argument("--step-ms", type=int, default=100)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="offline pipeline over a WAV")
    p.add_argument("--wav", required=True)
    p.add_argument("--config", default="default")
    p.add_argument("--task", default="")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="metrics of a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the streaming session service")
    p.add_argument("--tcp", default="")
    p.add_argument("--http", default="")
    p.add_argument("--config", default="default")
    p.add_argument("--static-dir", default="")
    p.set_defaults(func=cmd_serve)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BC_ENGINE_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _MODEL_ERRORS as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
