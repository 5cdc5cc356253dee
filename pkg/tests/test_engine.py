import dataclasses

import numpy as np
import pytest

from bcengine import synthetic
from bcengine.audio_io import concat, silence, tone, write_wav
from bcengine.engine import (
    BackchannelDecision,
    Category,
    Clip,
    ClipLibrary,
    EngineConfig,
    EngineModels,
    EventOutOfOrder,
    ModelMissing,
    NoSpeechDetected,
    Session,
    SessionState,
    TaskSpec,
    TaskType,
    UnknownTask,
    default_session_runtime,
    engine_step,
    participant_score_from_trial,
    select_clip,
    simulate,
    timeline_to_jsonl,
)
from bcengine.features import FeatureVector, schema_dim
from bcengine.models import Standardizer, SvmModel, platt_fit, svm_decision, svm_train
from bcengine.scoring import (
    LogNormalParams,
    PbcScoringConfig,
    SkewNormalParams,
    TaskScoringParams,
    pause_score,
    progress_score,
)
from bcengine.sid import EventKind, SpeechEvent


def stub_rbc_model(positive: bool) -> SvmModel:
    # Decision value = feature 0; the stub feature vector pins its sign.
    return SvmModel(
        weights=np.array([1.0]),
        bias=0.0 if positive else -10.0,
        feature_indices=np.array([0]),
        standardizer=Standardizer(mean=np.zeros(1), std=np.ones(1)),
    )


def stub_features(span):
    values = np.zeros(schema_dim())
    values[0] = 1.0
    from bcengine.features import schema_id

    return FeatureVector(values, schema_id=schema_id())


def flat_progress() -> SkewNormalParams:
    # Enormous scale makes every bin mass essentially equal, so the
    # progress score is ~1.0 at every tick.
    return SkewNormalParams(xi=30000.0, omega=1e9, a=0.0, task_duration_ms=60000)


def scoring_cfg(task_id="fluency", thr=0.75, sigma=2000.0) -> PbcScoringConfig:
    return PbcScoringConfig(
        thr_pbc=thr,
        task_params={
            task_id: TaskScoringParams(
                pause=LogNormalParams(mu=0.0, sigma=sigma, s=0.9, task_id=task_id),
                progress=flat_progress(),
            )
        },
    )


def clips() -> ClipLibrary:
    return ClipLibrary(
        {
            Category.RBC: [Clip("rbc_a", ""), Clip("rbc_b", ""), Clip("rbc_c", "")],
            Category.PBC: [Clip("pbc_a", ""), Clip("pbc_b", "")],
        }
    )


def make_state(task_type=TaskType.TIMED_SERIES, *, rbc=True, positive=True, thr=0.75,
               pbc_enabled=True, cooldown=1500, reset=True) -> SessionState:
    task = TaskSpec("fluency", task_type, duration_ms=60000, pbc_enabled=pbc_enabled)
    cfg = EngineConfig(cooldown_ms=cooldown, pbc_reset_pause=reset,
                       rbc_min_utterance_ms=300, rbc_enabled=rbc, seed=7)
    models = EngineModels(
        rbc_model=stub_rbc_model(positive) if rbc else None,
        scoring=scoring_cfg(thr=thr),
    )
    return SessionState(task, cfg, models, clips(), features_for_span=stub_features,
                        participant_score_value=0.5)


def start(t):
    return SpeechEvent(EventKind.UTTERANCE_START, t)


def end(t, span):
    return SpeechEvent(EventKind.UTTERANCE_END, t, utterance_span=span)


def tick(t, pause):
    return SpeechEvent(EventKind.INTERVAL_TICK, t, pause_ms=pause)


def drive(state, events):
    out = []
    for ev in events:
        decision, trace = engine_step(state, ev)
        if decision:
            out.append(decision)
    return out


def test_rbc_emitted_at_first_tick_after_utterance_end():
    state = make_state()
    decisions = drive(state, [start(0), end(3000, (0, 3000)), tick(3700, 700)])
    assert len(decisions) == 1
    d = decisions[0]
    assert d.category is Category.RBC
    assert d.t_ms == 3700
    assert d.cause["utterance_span"] == [0, 3000]


def test_short_utterance_not_classified():
    state = make_state()
    decisions = drive(state, [start(0), end(250, (0, 250)), tick(950, 700)])
    assert decisions == []


def test_second_rbc_suppressed_by_cooldown():
    # Crafted stream at a 25 ms tick cadence: consecutive positive
    # utterance ends 400 ms apart; the second attempt sits inside the
    # cooldown window and is dropped, not deferred.
    state = make_state(cooldown=1500)
    decisions = drive(state, [
        start(0), end(800, (0, 800)), tick(825, 25),
        start(850), end(1200, (850, 1200)), tick(1225, 25),
        tick(1250, 50), tick(2500, 1300),
    ])
    assert len(decisions) == 1
    assert decisions[0].t_ms == 825


def test_pending_rbc_cancelled_by_new_utterance():
    state = make_state()
    decisions = drive(state, [
        start(0), end(3000, (0, 3000)),  # armed, but no tick before next start
        start(3100), end(6500, (3100, 6500)), tick(7200, 700),
    ])
    assert len(decisions) == 1
    assert decisions[0].cause["utterance_span"] == [3100, 6500]


def test_type1_never_emits_pbc():
    task = TaskSpec("repeat", TaskType.ONE_OFF, pbc_enabled=True)
    assert task.pbc_enabled is False  # forced off by the invariant
    cfg = EngineConfig(rbc_enabled=False)
    state = SessionState(task, cfg, EngineModels(None, PbcScoringConfig()), clips(),
                         features_for_span=stub_features)
    events = [tick(t, t) for t in range(100, 12001, 100)]
    assert drive(state, events) == []


def test_pbc_fires_at_hand_solved_tick():
    # Flat progress makes s_pg ~ 1, so with weights (.5,.3,.2) and s_pt=.5
    # the decision reduces to 0.5*s_pau + 0.3*s_pg > 0.75 - 0.1.
    state = make_state(rbc=False)
    cfg = state.models.scoring
    params = cfg.task_params["fluency"]
    events = [start(0), end(3000, (0, 3000))]
    events += [tick(3000 + p, p) for p in range(700, 8000, 100)]
    decisions = drive(state, events)
    assert decisions and decisions[0].category is Category.PBC
    expected_first = next(
        3000 + p
        for p in range(700, 8000, 100)
        if 0.5 * pause_score(p, params.pause)
        + 0.3 * progress_score(3000 + p, params.progress)
        + 0.2 * 0.5
        > 0.75
    )
    assert decisions[0].t_ms == expected_first
    # Hand-solved threshold: s_pau > 0.7 within the flat-progress tolerance.
    assert pause_score(decisions[0].t_ms - 3000, params.pause) > 0.699


def test_pbc_respects_cooldown_and_reset():
    state = make_state(rbc=False, cooldown=1500, reset=True)
    events = [start(0), end(3000, (0, 3000))]
    events += [tick(3000 + p, p) for p in range(700, 30000, 100)]
    decisions = drive(state, events)
    assert len(decisions) >= 2
    gaps = [b.t_ms - a.t_ms for a, b in zip(decisions, decisions[1:])]
    assert all(g >= 1500 for g in gaps)
    # After a reset the effective pause restarts at the decision time.
    second_cause = decisions[1].cause
    assert second_cause["pause_ms"] == decisions[1].t_ms - decisions[0].t_ms


def test_no_reset_keeps_sid_pause():
    state = make_state(rbc=False, reset=False)
    events = [start(0), end(3000, (0, 3000))]
    events += [tick(3000 + p, p) for p in range(700, 12000, 100)]
    decisions = drive(state, events)
    assert len(decisions) >= 2
    assert decisions[1].cause["pause_ms"] == decisions[1].t_ms - 3000


def test_type3_raised_threshold():
    t2 = make_state(rbc=False, thr=0.6)
    task3 = TaskSpec("fluency", TaskType.OPEN_ENDED, duration_ms=60000)
    t3 = SessionState(task3, EngineConfig(rbc_enabled=False),
                      EngineModels(None, scoring_cfg(thr=0.6)), clips(),
                      features_for_span=stub_features)
    events = [start(0), end(3000, (0, 3000))]
    events += [tick(3000 + p, p) for p in range(700, 20000, 100)]
    d2 = drive(t2, events)
    d3 = drive(t3, [start(0), end(3000, (0, 3000))]
               + [tick(3000 + p, p) for p in range(700, 20000, 100)])
    assert d2 and d3
    assert d3[0].t_ms > d2[0].t_ms  # stricter threshold fires later


def test_decisions_suppressed_after_task_duration():
    task = TaskSpec("fluency", TaskType.TIMED_SERIES, duration_ms=5000)
    state = SessionState(task, EngineConfig(rbc_enabled=False),
                         EngineModels(None, scoring_cfg()), clips(),
                         features_for_span=stub_features)
    events = [start(0), end(1000, (0, 1000))]
    events += [tick(1000 + p, p) for p in range(700, 30000, 100)]
    decisions = drive(state, events)
    assert all(d.t_ms <= 5000 for d in decisions)


def test_event_out_of_order():
    state = make_state()
    engine_step(state, tick(500, 500))
    with pytest.raises(EventOutOfOrder):
        engine_step(state, tick(400, 400))


def test_model_missing():
    task = TaskSpec("fluency", TaskType.TIMED_SERIES, duration_ms=60000)
    with pytest.raises(ModelMissing):
        SessionState(task, EngineConfig(rbc_enabled=True),
                     EngineModels(None, scoring_cfg()), clips(),
                     features_for_span=stub_features)
    with pytest.raises(ModelMissing):
        SessionState(task, EngineConfig(rbc_enabled=False),
                     EngineModels(None, PbcScoringConfig()), clips(),
                     features_for_span=stub_features)


def test_empty_clip_category_rejected_at_session_build():
    from bcengine.engine import EmptyCategory

    task = TaskSpec("fluency", TaskType.TIMED_SERIES, duration_ms=60000)
    no_pbc_clips = ClipLibrary({Category.RBC: [Clip("r", "")], Category.PBC: []})
    with pytest.raises(EmptyCategory):
        SessionState(task, EngineConfig(rbc_enabled=False),
                     EngineModels(None, scoring_cfg()), no_pbc_clips,
                     features_for_span=stub_features)


def test_select_clip():
    lib = ClipLibrary({Category.RBC: [Clip("only", "")], Category.PBC: []})
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert select_clip(lib, Category.RBC, rng).clip_id == "only"
    from bcengine.engine import EmptyCategory

    with pytest.raises(EmptyCategory):
        select_clip(lib, Category.PBC, rng)
    seq1 = [select_clip(clips(), Category.RBC, np.random.default_rng(3)).clip_id
            for _ in range(10)]
    seq2 = [select_clip(clips(), Category.RBC, np.random.default_rng(3)).clip_id
            for _ in range(10)]
    assert seq1 == seq2


def test_select_clip_uniform_monte_carlo():
    lib = ClipLibrary({Category.PBC: [Clip(f"c{i}", "") for i in range(4)]})
    rng = np.random.default_rng(11)
    counts = {f"c{i}": 0 for i in range(4)}
    n = 10_000
    for _ in range(n):
        counts[select_clip(lib, Category.PBC, rng).clip_id] += 1
    for c in counts.values():
        assert abs(c / n - 0.25) <= 0.02


def test_participant_score_from_trial():
    Xp = []
    yp = []
    rng = np.random.default_rng(5)
    for i in range(60):
        positive = i < 30
        buf = synthetic.participant_trial(rng, positive)
        Xp.append(synthetic.utterance_features(buf))
        yp.append(1 if positive else -1)
    model = svm_train(np.array(Xp), np.array(yp, dtype=float), c=10.0, epochs=100, seed=0)
    ds = np.array([svm_decision(model, x) for x in Xp])
    platt = platt_fit(ds, (np.array(yp) == 1).astype(int))

    quiet = synthetic.participant_trial(np.random.default_rng(77), True)
    buf = concat(quiet, silence(1500))
    s = participant_score_from_trial(buf, model, platt)
    assert 0.0 < s < 1.0
    assert s == participant_score_from_trial(buf, model, platt)
    with pytest.raises(NoSpeechDetected):
        participant_score_from_trial(silence(2000), model, platt)


# ------------------------------------------------------------ simulate layer


@pytest.fixture(scope="module")
def runtime():
    return default_session_runtime()


@pytest.fixture(scope="module")
def fixture_wav_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("wav") / "fluency.wav"
    write_wav(path, synthetic.fixture_wav())
    return path


def test_simulate_fixture_pbc_in_silence(runtime, fixture_wav_path):
    rows = simulate(fixture_wav_path, runtime)
    decisions = [r for r in rows if r["type"] == "decision"]
    pbcs = [d for d in decisions if d["category"] == "PBC"]
    assert len(pbcs) >= 1
    assert all(d["t_ms"] > 3000 for d in pbcs)  # inside the silence


def test_simulate_empty_wav_ticks_only(runtime, tmp_path):
    path = tmp_path / "quiet.wav"
    write_wav(path, silence(3000))
    rows = simulate(path, runtime)
    assert [r for r in rows if r["type"] == "decision"] == []
    kinds = {r["kind"] for r in rows if r["type"] == "event"}
    assert kinds == {"IntervalTick"}


def test_simulate_bit_identical(runtime, fixture_wav_path):
    a = timeline_to_jsonl(simulate(fixture_wav_path, runtime))
    b = timeline_to_jsonl(simulate(fixture_wav_path, runtime))
    assert a == b


def _random_session_audio(seed, total_ms=12000):
    rng = np.random.default_rng(seed)
    parts = []
    t = 0
    while t < total_ms:
        if rng.random() < 0.5:
            dur = int(rng.integers(900, 2500))
            parts.append(tone(float(rng.uniform(120, 280)), dur,
                              amplitude=float(rng.uniform(0.3, 0.7))))
        else:
            dur = int(rng.integers(500, 4000))
            parts.append(silence(dur))
        t += dur
    return concat(*parts)


def _with_threshold(runtime, thr):
    scoring = runtime.models.scoring
    new_scoring = PbcScoringConfig(
        weight_pause=scoring.weight_pause,
        weight_progress=scoring.weight_progress,
        weight_participant=scoring.weight_participant,
        thr_pbc=thr,
        task_params=scoring.task_params,
    )
    new_runtime = dataclasses.replace(runtime)
    new_runtime.models = EngineModels(
        rbc_model=runtime.models.rbc_model,
        scoring=new_scoring,
        participant_model=runtime.models.participant_model,
    )
    return new_runtime


def test_structural_invariants_random_sessions(runtime, tmp_path):
    for seed in range(6):
        path = tmp_path / f"s{seed}.wav"
        write_wav(path, _random_session_audio(seed))
        rows = simulate(path, runtime)
        decisions = [r for r in rows if r["type"] == "decision"]
        spans = [tuple(r["utterance_span"]) for r in rows
                 if r["type"] == "event" and r["kind"] == "UtteranceEnd"]
        for d in decisions:
            for s, e in spans:
                assert not (s < d["t_ms"] < e), (seed, d, (s, e))
        ts = [d["t_ms"] for d in decisions]
        assert all(b - a >= runtime.engine_cfg.cooldown_ms for a, b in zip(ts, ts[1:]))


def test_decision_count_monotone_in_threshold(runtime, tmp_path):
    path = tmp_path / "mono.wav"
    write_wav(path, _random_session_audio(99, total_ms=20000))
    counts = []
    for thr in (0.55, 0.7, 0.85, 0.97):
        rows = simulate(path, _with_threshold(runtime, thr))
        counts.append(sum(1 for r in rows if r["type"] == "decision"))
    assert counts == sorted(counts, reverse=True)


def test_disabling_rbc_keeps_pbc_timing_without_interaction(runtime, tmp_path):
    # Utterances shorter than rbc_min_utterance_ms never arm a reactive
    # decision, so the proactive stream must be identical with the
    # reactive model on or off.
    buf = concat(tone(200, 250, 0.5), silence(9000), tone(180, 250, 0.5), silence(8000))
    path = tmp_path / "short.wav"
    write_wav(path, buf)
    rows_on = simulate(path, runtime)
    runtime_off = dataclasses.replace(runtime)
    runtime_off.engine_cfg = dataclasses.replace(runtime.engine_cfg, rbc_enabled=False)
    runtime_off.models = EngineModels(None, runtime.models.scoring,
                                      runtime.models.participant_model)
    rows_off = simulate(path, runtime_off)
    pbc_on = [(r["t_ms"], r["clip_id"]) for r in rows_on
              if r["type"] == "decision" and r["category"] == "PBC"]
    pbc_off = [(r["t_ms"], r["clip_id"]) for r in rows_off
               if r["type"] == "decision" and r["category"] == "PBC"]
    assert pbc_on == pbc_off


def test_unknown_task(runtime):
    with pytest.raises(UnknownTask):
        runtime.build_session("nope")
